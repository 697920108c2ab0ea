#include <doctest.h>

#include <cmath>

#include "isfed/errors.hpp"
#include "isfed/probabilities.hpp"
#include "isfed/problems.hpp"
#include "isfed/rng.hpp"

using namespace isfed;

namespace {

ProblemInstance three_agent_fixture() {
    Rng rng(101);
    RegressionSpec spec;
    spec.agents = 3;
    spec.samples_per_agent = 8;
    spec.dim = 2;
    spec.ridge = 0.01;
    spec.noise_variances = {0.05, 0.5, 2.0};
    spec.feature_scales = log_uniform_feature_scales(3, 2, 0.5, 2.0, rng);
    return generate_regression(spec, rng);
}

}  // namespace

TEST_CASE("equal gradient norms give the uniform distribution") {
    ProbabilityVector p = optimal_data_probabilities({2.0, 2.0, 2.0, 2.0});
    for (int k = 0; k < 4; ++k) CHECK(p[k] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("norms [3,1] normalize to [0.75, 0.25]") {
    ProbabilityVector p = optimal_data_probabilities({3.0, 1.0});
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("all-zero norms fall back to uniform") {
    ProbabilityVector p = optimal_data_probabilities({0.0, 0.0, 0.0});
    for (int k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("optimal probabilities are scale invariant") {
    std::vector<double> norms = {0.3, 1.1, 0.02, 0.6};
    ProbabilityVector base = optimal_data_probabilities(norms);
    for (double& n : norms) n *= 37.5;
    ProbabilityVector scaled = optimal_data_probabilities(norms);
    for (int k = 0; k < 4; ++k) CHECK(base[k] == doctest::Approx(scaled[k]).epsilon(1e-12));

    std::vector<double> sigma = {0.2, 0.9}, grads = {0.5, 1.5}, alpha = {4.0, 9.0};
    ProbabilityVector agents = optimal_agent_probabilities(sigma, grads, alpha);
    for (double& s : sigma) s *= 4.0;
    for (double& g : grads) g *= 2.0;  // same overall factor inside the sqrt
    ProbabilityVector agents_scaled = optimal_agent_probabilities(sigma, grads, alpha);
    for (int k = 0; k < 2; ++k)
        CHECK(agents[k] == doctest::Approx(agents_scaled[k]).epsilon(1e-12));
}

TEST_CASE("identical agent statistics give the uniform distribution") {
    ProbabilityVector p = optimal_agent_probabilities({0.4, 0.4, 0.4}, {1.0, 1.0, 1.0},
                                                      {5.0, 5.0, 5.0});
    for (int k = 0; k < 3; ++k) CHECK(p[k] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("sqrt weighting on the two-agent example") {
    // (sigma^2, alpha g^2) of (0, 9) and (0, 1): sqrt gives 3 and 1.
    ProbabilityVector p = optimal_agent_probabilities({0.0, 0.0}, {3.0, 1.0}, {1.0, 1.0});
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("alpha_k formula") {
    CHECK(epoch_batch_alpha(1, 1) == doctest::Approx(9.0));
    CHECK(epoch_batch_alpha(2, 3) == doctest::Approx(4.0));
    CHECK(epoch_batch_alpha(1000000, 1000000) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("plug-in schedule at the minimizer matches the optimal schedule") {
    ProblemInstance instance = three_agent_fixture();
    Eigen::VectorXd w_opt = closed_form_minimizer(instance);
    std::vector<int> epochs = {2, 1, 3}, batches = {3, 2, 4};
    ProbabilitySchedule optimal = schedule_at(instance, w_opt, epochs, batches);
    ProbabilitySchedule plugin = schedule_at(instance, w_opt, epochs, batches);
    for (int k = 0; k < 3; ++k)
        CHECK(optimal.agents[k] == doctest::Approx(plugin.agents[k]).epsilon(1e-15));
}

TEST_CASE("schedules live on the simplex and match the hand-evaluated formula") {
    ProblemInstance instance = three_agent_fixture();
    Eigen::VectorXd w(2);
    w << 0.4, -0.8;
    std::vector<int> epochs = {2, 1, 3}, batches = {3, 2, 4};
    ProbabilitySchedule schedule = schedule_at(instance, w, epochs, batches);

    double agent_sum = 0.0;
    for (int k = 0; k < 3; ++k) {
        CHECK(schedule.agents[k] >= 0.0);
        agent_sum += schedule.agents[k];
    }
    CHECK(agent_sum == doctest::Approx(1.0).epsilon(1e-12));

    // Hand evaluation on agent 0: data probabilities proportional to the
    // per-sample gradient norms, and the agent score from the collapsed
    // variability plus alpha * ||grad P_0||^2.
    Eigen::VectorXd norms = sample_gradient_norms(instance, 0, w);
    const double norm_sum = norms.sum();
    for (int n = 0; n < instance.samples(0); ++n)
        CHECK(schedule.data[0][n] == doctest::Approx(norms[n] / norm_sum).epsilon(1e-12));

    auto agent_score = [&](int k, int epoch, int batch) {
        Eigen::VectorXd g = sample_gradient_norms(instance, k, w);
        double sum = g.sum();
        double count = instance.samples(k);
        double sigma = 6.0 * sum * sum / (epoch * batch * count * count);
        double local = local_gradient(instance, k, w).norm();
        return std::sqrt(sigma + epoch_batch_alpha(epoch, batch) * local * local);
    };
    double s0 = agent_score(0, 2, 3), s1 = agent_score(1, 1, 2), s2 = agent_score(2, 3, 4);
    CHECK(schedule.agents[0] == doctest::Approx(s0 / (s0 + s1 + s2)).epsilon(1e-12));
}

TEST_CASE("data variability matches its collapsed form at the optimal probabilities") {
    ProblemInstance instance = three_agent_fixture();
    Eigen::VectorXd w(2);
    w << 1.0, 0.2;
    Eigen::VectorXd norms = sample_gradient_norms(instance, 1, w);
    std::vector<double> scores(norms.data(), norms.data() + norms.size());
    ProbabilityVector p = optimal_data_probabilities(scores);
    double direct = data_variability(instance, 1, p, w, 2, 3);
    const double count = instance.samples(1);
    double collapsed = 6.0 * norms.sum() * norms.sum() / (2.0 * 3.0 * count * count);
    CHECK(direct == doctest::Approx(collapsed).epsilon(1e-12));
}

TEST_CASE("full participation reproduces the plug-in formula over the scores") {
    ProblemInstance instance = three_agent_fixture();
    std::vector<int> epochs = {1, 1, 1}, batches = {2, 2, 2};
    AdaptiveState state = initial_adaptive_state(instance, epochs, batches);
    state.sigma_sk2 = {0.1, 0.4, 0.9};
    SampleDraw everyone{{0, 1, 2}, Replacement::without_replacement};
    std::vector<double> norms = {1.0, 2.0, 0.5};
    update_agent_probabilities(state, everyone, norms);
    std::vector<double> scores(3);
    for (int k = 0; k < 3; ++k)
        scores[static_cast<size_t>(k)] =
            std::sqrt(state.sigma_sk2[static_cast<size_t>(k)] +
                      state.alpha[static_cast<size_t>(k)] * norms[static_cast<size_t>(k)] *
                          norms[static_cast<size_t>(k)]);
    double total = scores[0] + scores[1] + scores[2];
    for (int k = 0; k < 3; ++k)
        CHECK(state.agent_probs[k] == doctest::Approx(scores[static_cast<size_t>(k)] / total)
                                          .epsilon(1e-12));
}

TEST_CASE("a single participant absorbs the complement mass exactly") {
    ProblemInstance instance = three_agent_fixture();
    std::vector<int> epochs = {1, 1, 1}, batches = {1, 1, 1};
    AdaptiveState state = initial_adaptive_state(instance, epochs, batches);
    SampleDraw one{{2}, Replacement::without_replacement};
    update_agent_probabilities(state, one, {3.7});
    double others = state.agent_probs[0] + state.agent_probs[1];
    CHECK(state.agent_probs[2] == doctest::Approx(1.0 - others).epsilon(1e-15));
    CHECK(state.agent_probs[0] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("equal scores preserve the uniform vector and untouched bits") {
    ProblemInstance instance = three_agent_fixture();
    std::vector<int> epochs = {1, 1, 1}, batches = {1, 1, 1};
    AdaptiveState state = initial_adaptive_state(instance, epochs, batches);
    const double untouched_before = state.agent_probs[2];
    SampleDraw two{{0, 1}, Replacement::without_replacement};
    update_agent_probabilities(state, two, {1.5, 1.5});
    CHECK(state.agent_probs[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(state.agent_probs[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    // untouched entry is bit-identical
    CHECK(state.agent_probs[2] == untouched_before);
}

TEST_CASE("data updates: full batch, single point, and untouched entries") {
    ProblemInstance instance = three_agent_fixture();
    std::vector<int> epochs = {1, 1, 1}, batches = {2, 2, 2};
    AdaptiveState state = initial_adaptive_state(instance, epochs, batches);
    const int count = instance.samples(0);

    SampleDraw full;
    full.replacement = Replacement::without_replacement;
    std::vector<double> scores;
    for (int n = 0; n < count; ++n) {
        full.indices.push_back(n);
        scores.push_back(1.0 + n);
    }
    update_data_probabilities(state, 0, full, scores);
    double total = 0.0;
    for (double s : scores) total += s;
    for (int n = 0; n < count; ++n)
        CHECK(state.data_probs[0][n] ==
              doctest::Approx(scores[static_cast<size_t>(n)] / total).epsilon(1e-12));

    AdaptiveState fresh = initial_adaptive_state(instance, epochs, batches);
    std::vector<double> before(fresh.data_probs[1].entries());
    SampleDraw single{{3}, Replacement::without_replacement};
    update_data_probabilities(fresh, 1, single, {2.2});
    for (int n = 0; n < instance.samples(1); ++n) {
        if (n == 3) continue;
        CHECK(fresh.data_probs[1][n] == before[static_cast<size_t>(n)]);
    }
    double others = 0.0;
    for (int n = 0; n < instance.samples(1); ++n)
        if (n != 3) others += fresh.data_probs[1][n];
    CHECK(fresh.data_probs[1][3] == doctest::Approx(1.0 - others).epsilon(1e-14));
}

TEST_CASE("mass overflow is reported when sampled entries hold no mass") {
    ProblemInstance instance = three_agent_fixture();
    std::vector<int> epochs = {1, 1, 1}, batches = {1, 1, 1};
    AdaptiveState state = initial_adaptive_state(instance, epochs, batches);
    state.agent_probs = ProbabilityVector::validated({0.0, 0.5, 0.5});
    SampleDraw zeroed{{0}, Replacement::without_replacement};
    CHECK_THROWS_AS(update_agent_probabilities(state, zeroed, {1.0}), MassOverflowError);
}

TEST_CASE("probability updates stay on the simplex over many iterations") {
    ProblemInstance instance = three_agent_fixture();
    std::vector<int> epochs = {1, 2, 1}, batches = {2, 3, 2};
    AdaptiveState state = initial_adaptive_state(instance, epochs, batches);
    Rng rng(71);
    for (int round = 0; round < 2000; ++round) {
        SampleDraw draw;
        draw.replacement = Replacement::without_replacement;
        int first = rng.uniform_int(3);
        draw.indices.push_back(first);
        if (rng.uniform() < 0.5) draw.indices.push_back((first + 1 + rng.uniform_int(2)) % 3);
        std::vector<double> norms;
        for (size_t i = 0; i < draw.indices.size(); ++i) norms.push_back(rng.uniform() * 3.0);
        update_agent_probabilities(state, draw, norms);
    }
    double sum = 0.0;
    for (int k = 0; k < 3; ++k) {
        CHECK(state.agent_probs[k] >= 0.0);
        sum += state.agent_probs[k];
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
}
