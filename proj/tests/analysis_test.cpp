#include <doctest.h>

#include <cmath>

#include "isfed/analysis.hpp"
#include "isfed/federated.hpp"
#include "isfed/problems.hpp"
#include "isfed/rng.hpp"

using namespace isfed;

namespace {

ProblemInstance fixture(int agents, int samples, double noise, double ridge, uint64_t seed,
                        bool identical_agents = false) {
    Rng rng(seed);
    RegressionSpec spec;
    spec.agents = agents;
    spec.samples_per_agent = samples;
    spec.dim = 2;
    spec.ridge = ridge;
    spec.noise_variances.assign(static_cast<size_t>(agents), noise);
    spec.feature_scales = log_uniform_feature_scales(agents, 2, 0.5, 2.0, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    if (identical_agents)
        for (int k = 1; k < agents; ++k)
            instance.agents[static_cast<size_t>(k)] = instance.agents[0];
    return instance;
}

FederationConfig plain_config(const ProblemInstance& instance, int participants, int epochs,
                              int batch, double mu) {
    FederationConfig config;
    config.participants = participants;
    config.epochs.assign(static_cast<size_t>(instance.agent_count()), epochs);
    config.batch_sizes.assign(static_cast<size_t>(instance.agent_count()), batch);
    config.step_size = mu;
    config.iterations = 1;
    config.replacement = Replacement::without_replacement;
    return config;
}

}  // namespace

TEST_CASE("a single unit-vector sample gives delta = 2") {
    ProblemInstance instance;
    instance.kind = ProblemKind::regression;
    instance.ridge = 0.0;
    AgentDataset data;
    data.features.resize(1, 2);
    data.features << 1.0, 0.0;
    data.targets.resize(1);
    data.targets << 0.0;
    instance.agents.push_back(data);
    double nu = 0, delta = 0, xi = 0;
    curvature_constants(instance, nu, delta, xi);
    CHECK(delta == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(xi == doctest::Approx(0.0));
}

TEST_CASE("identical agents have coincident minimizers (xi = 0)") {
    ProblemInstance instance = fixture(4, 20, 0.3, 0.01, 51, true);
    double nu = 0, delta = 0, xi = 0;
    curvature_constants(instance, nu, delta, xi);
    CHECK(xi < 1e-10);
}

TEST_CASE("nu lower-bounds the pooled curvature and stays below delta") {
    ProblemInstance instance = fixture(5, 25, 0.2, 0.01, 53);
    double nu = 0, delta = 0, xi = 0;
    curvature_constants(instance, nu, delta, xi);
    CHECK(nu <= delta);

    // strong-convexity probe on the pooled risk at random pairs
    Rng rng(54);
    auto pooled = [&](const Eigen::VectorXd& w) {
        double total = 0.0;
        for (int k = 0; k < instance.agent_count(); ++k)
            for (int n = 0; n < instance.samples(k); ++n)
                total += sample_loss(instance, k, n, w) / instance.samples(k);
        return total / instance.agent_count();
    };
    for (int probe = 0; probe < 100; ++probe) {
        Eigen::VectorXd w1(2), w2(2);
        for (int j = 0; j < 2; ++j) {
            w1[j] = 2 * rng.normal();
            w2[j] = 2 * rng.normal();
        }
        double lhs = pooled(w2);
        double rhs = pooled(w1) + global_gradient(instance, w1).dot(w2 - w1) +
                     0.5 * nu * (w2 - w1).squaredNorm();
        CHECK(lhs >= rhs - 1e-9);
    }
}

TEST_CASE("uniform data probabilities collapse beta_sk2 to 6 delta^2 / (E B)") {
    ProblemInstance instance = fixture(3, 10, 0.2, 0.01, 55);
    FederationConfig config = plain_config(instance, 2, 2, 5, 0.01);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    TheoryConstants constants =
        noise_constants(instance, uniform_schedule(instance), config, w_opt);
    const double delta_sq = constants.lipschitz * constants.lipschitz;
    for (int k = 0; k < 3; ++k)
        CHECK(constants.beta_sk2[static_cast<size_t>(k)] ==
              doctest::Approx(6.0 * delta_sq / (2.0 * 5.0)).epsilon(1e-12));
}

TEST_CASE("noise-free instances have zero data variability at the optimum") {
    ProblemInstance instance = fixture(3, 12, 0.0, 0.0, 57);
    FederationConfig config = plain_config(instance, 1, 1, 4, 0.01);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    TheoryConstants constants =
        noise_constants(instance, uniform_schedule(instance), config, w_opt);
    for (double sigma : constants.sigma_sk2) CHECK(sigma < 1e-18);
}

TEST_CASE("hand evaluation of one agent's variability sum") {
    ProblemInstance instance = fixture(3, 6, 0.5, 0.01, 59);
    FederationConfig config = plain_config(instance, 2, 2, 3, 0.01);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    ProbabilitySchedule schedule = uniform_schedule(instance);
    TheoryConstants constants = noise_constants(instance, schedule, config, w_opt);

    double hand = 0.0;
    for (int n = 0; n < 6; ++n) {
        double norm = sample_gradient(instance, 1, n, w_opt).norm();
        hand += norm * norm / (1.0 / 6.0);
    }
    hand *= 6.0 / (2.0 * 3.0 * 36.0);
    CHECK(constants.sigma_sk2[1] == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("without-replacement constants equal with-replacement times L") {
    ProblemInstance instance = fixture(4, 10, 0.3, 0.01, 61);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    FederationConfig with = plain_config(instance, 3, 2, 4, 0.01);
    with.replacement = Replacement::with_replacement;
    FederationConfig without = plain_config(instance, 3, 2, 4, 0.01);

    ProbabilitySchedule schedule = schedule_at(instance, w_opt, with.epochs, with.batch_sizes);
    TheoryConstants a = noise_constants(instance, schedule, with, w_opt);
    TheoryConstants b = noise_constants(instance, schedule, without, w_opt);
    CHECK(b.beta_s2 == doctest::Approx(3.0 * a.beta_s2).epsilon(1e-12));
    CHECK(b.sigma_s2 == doctest::Approx(3.0 * a.sigma_s2).epsilon(1e-12));
}

TEST_CASE("lambda sits in [0,1) exactly when mu is admissible") {
    ProblemInstance instance = fixture(4, 15, 0.2, 0.01, 63);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    FederationConfig config = plain_config(instance, 2, 1, 5, 0.01);
    TheoryConstants constants =
        noise_constants(instance, uniform_schedule(instance), config, w_opt);

    rates(constants, 0.5 * constants.mu_max, config, ProbabilityVector::uniform(4));
    double mu_max = constants.mu_max;
    rates(constants, 0.5 * mu_max, config, ProbabilityVector::uniform(4));
    CHECK(constants.contraction >= 0.0);
    CHECK(constants.contraction < 1.0);

    rates(constants, mu_max * (1.0 - 1e-12), config, ProbabilityVector::uniform(4));
    CHECK(constants.contraction < 1.0);
    rates(constants, mu_max * (1.0 + 1e-9), config, ProbabilityVector::uniform(4));
    // the global bound may not be the binding one, so probe the global rate
    double nu = constants.strong_convexity;
    double delta_sq = constants.lipschitz * constants.lipschitz;
    double mu_global = 2.0 * nu / (delta_sq + constants.beta_s2);
    double lambda_above =
        1.0 - 2.0 * mu_global * (1.0 + 1e-9) * nu +
        mu_global * (1.0 + 1e-9) * mu_global * (1.0 + 1e-9) * (delta_sq + constants.beta_s2);
    CHECK(lambda_above >= 1.0 - 1e-9);
}

TEST_CASE("the steady-state bound approaches mu sigma^2 / (2 nu) as mu shrinks") {
    ProblemInstance instance = fixture(4, 15, 0.2, 0.01, 65);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    FederationConfig config = plain_config(instance, 2, 1, 5, 0.01);
    TheoryConstants constants =
        noise_constants(instance, uniform_schedule(instance), config, w_opt);
    rates(constants, 0.001, config, ProbabilityVector::uniform(4));  // fills mu_max
    const double nu = constants.strong_convexity;
    for (double mu : {constants.mu_max * 1e-3, constants.mu_max * 1e-4}) {
        rates(constants, mu, config, ProbabilityVector::uniform(4));
        double bound = mu * mu * constants.sigma_s2 / (1.0 - constants.contraction);
        double limit = mu * constants.sigma_s2 / (2.0 * nu);
        CHECK(bound == doctest::Approx(limit).epsilon(0.05));
    }
}

TEST_CASE("realized gradient noise respects the variance bound (Monte Carlo)") {
    ProblemInstance instance = fixture(4, 10, 0.4, 0.01, 67);
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    FederationConfig config = plain_config(instance, 2, 2, 3, 0.01);
    ProbabilitySchedule schedule = uniform_schedule(instance);
    TheoryConstants constants = noise_constants(instance, schedule, config, w_opt);

    Eigen::VectorXd w(2);
    w << 0.8, -0.2;
    const double bound =
        constants.beta_s2 * (w - w_opt).squaredNorm() + constants.sigma_s2;
    Rng rng(68);
    const long trials = 20000;
    double second = 0.0;
    for (long t = 0; t < trials; ++t)
        second += draw_gradient_noise(instance, w, schedule, config, rng).squaredNorm();
    second /= trials;
    CHECK(second <= bound * 1.2);
}

TEST_CASE("halving mu scales the incremental noise by roughly four") {
    ProblemInstance instance = fixture(3, 10, 0.5, 0.01, 69);
    ProbabilitySchedule schedule = uniform_schedule(instance);
    Eigen::VectorXd w(2);
    w << 1.0, 1.0;
    auto second_moment = [&](double mu) {
        FederationConfig config = plain_config(instance, 2, 3, 3, mu);
        Rng rng(70);
        const long trials = 4000;
        double total = 0.0;
        for (long t = 0; t < trials; ++t) {
            const ProbabilityVector agent_probs =
                effective_agent_probabilities(schedule.agents, config);
            SampleDraw participants =
                systematic_sample_without_replacement(agent_probs, 2, rng);
            std::vector<LocalRunResult> runs;
            for (int agent : participants.indices)
                runs.push_back(local_run(
                    instance, agent, w, config, agent_probs[agent],
                    effective_data_probabilities(schedule.data[agent], 3, config), rng, true));
            total += incremental_noise_sample(instance, w, participants, runs, schedule, config)
                         .squaredNorm();
        }
        return total / trials;
    };
    double ratio = second_moment(0.02) / second_moment(0.01);
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 4.5);
}
