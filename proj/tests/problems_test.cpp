#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "isfed/errors.hpp"
#include "isfed/problems.hpp"
#include "isfed/rng.hpp"

using namespace isfed;

namespace {

RegressionSpec small_spec(int agents, int samples, int dim, double ridge, double noise,
                          Rng& rng) {
    RegressionSpec spec;
    spec.agents = agents;
    spec.samples_per_agent = samples;
    spec.dim = dim;
    spec.ridge = ridge;
    spec.noise_variances.assign(static_cast<size_t>(agents), noise);
    spec.feature_scales = log_uniform_feature_scales(agents, dim, 0.5, 2.0, rng);
    return spec;
}

double label_entropy(const Eigen::VectorXd& labels) {
    std::map<double, long> counts;
    for (int i = 0; i < labels.size(); ++i) ++counts[labels[i]];
    double entropy = 0.0;
    for (const auto& [label, count] : counts) {
        double q = static_cast<double>(count) / labels.size();
        entropy -= q * std::log2(q);
    }
    return entropy;
}

}  // namespace

TEST_CASE("noise-free generation is identified by the closed form") {
    Rng rng(11);
    RegressionSpec spec = small_spec(4, 50, 3, 0.0, 0.0, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    Eigen::VectorXd w = closed_form_minimizer(instance);
    CHECK((w - *instance.planted_model).norm() < 1e-8);
}

TEST_CASE("generation is deterministic per seed") {
    Rng a(21), b(21);
    RegressionSpec spec_a = small_spec(3, 10, 2, 0.001, 0.1, a);
    RegressionSpec spec_b = small_spec(3, 10, 2, 0.001, 0.1, b);
    ProblemInstance one = generate_regression(spec_a, a);
    ProblemInstance two = generate_regression(spec_b, b);
    CHECK(one.agents[1].features == two.agents[1].features);
    CHECK(one.agents[2].targets == two.agents[2].targets);
}

TEST_CASE("huge ridge shrinks the minimizer towards zero") {
    Rng rng(13);
    RegressionSpec spec = small_spec(3, 40, 2, 1e8, 0.05, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    Eigen::VectorXd cross = Eigen::VectorXd::Zero(2);
    for (const AgentDataset& a : instance.agents)
        cross += a.features.transpose() * a.targets / a.size();
    cross /= instance.agent_count();
    CHECK(closed_form_minimizer(instance).norm() <= 1e-6 * cross.norm());
}

TEST_CASE("the closed form satisfies first-order optimality") {
    Rng rng(17);
    RegressionSpec spec = small_spec(5, 30, 2, 0.001, 0.2, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    Eigen::VectorXd w = closed_form_minimizer(instance);
    CHECK(global_gradient(instance, w).norm() < 1e-8);
}

TEST_CASE("per-sample gradients average to the local gradient") {
    Rng rng(19);
    RegressionSpec spec = small_spec(3, 25, 2, 0.01, 0.3, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    Eigen::VectorXd w(2);
    w << 0.7, -0.4;
    for (int k = 0; k < instance.agent_count(); ++k) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
        for (int n = 0; n < instance.samples(k); ++n)
            mean += sample_gradient(instance, k, n, w);
        mean /= instance.samples(k);
        CHECK((mean - local_gradient(instance, k, w)).norm() < 1e-12);
    }
}

TEST_CASE("zero residual with zero ridge gives a zero gradient") {
    ProblemInstance instance;
    instance.kind = ProblemKind::regression;
    instance.ridge = 0.0;
    AgentDataset data;
    data.features.resize(1, 2);
    data.features << 1.0, 2.0;
    data.targets.resize(1);
    Eigen::VectorXd w(2);
    w << 3.0, 0.5;
    data.targets[0] = data.features.row(0).dot(w);
    instance.agents.push_back(data);
    CHECK(sample_gradient(instance, 0, 0, w).norm() == doctest::Approx(0.0));
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(23);
    RegressionSpec spec = small_spec(2, 12, 3, 0.01, 0.4, rng);
    for (ProblemKind kind : {ProblemKind::regression, ProblemKind::logistic}) {
        ProblemInstance instance = generate_regression(spec, rng);
        if (kind == ProblemKind::logistic) {
            instance.kind = ProblemKind::logistic;
            for (AgentDataset& a : instance.agents)
                for (int n = 0; n < a.size(); ++n) a.targets[n] = a.targets[n] > 0 ? 1.0 : -1.0;
        }
        const double step = 1e-6;
        for (int probe = 0; probe < 10; ++probe) {
            int agent = rng.uniform_int(instance.agent_count());
            int sample = rng.uniform_int(instance.samples(agent));
            Eigen::VectorXd w(3), direction(3);
            for (int j = 0; j < 3; ++j) {
                w[j] = rng.normal();
                direction[j] = rng.normal();
            }
            direction.normalize();
            double forward = sample_loss(instance, agent, sample, w + step * direction);
            double backward = sample_loss(instance, agent, sample, w - step * direction);
            double numeric = (forward - backward) / (2 * step);
            double analytic = sample_gradient(instance, agent, sample, w).dot(direction);
            CHECK(numeric == doctest::Approx(analytic).epsilon(1e-5));
        }
    }
}

TEST_CASE("local gradient matches the normal-equation algebra") {
    Rng rng(29);
    RegressionSpec spec = small_spec(3, 20, 2, 0.05, 0.2, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    Eigen::VectorXd w(2);
    w << -0.3, 0.9;
    for (int k = 0; k < 3; ++k) {
        const AgentDataset& data = instance.agents[static_cast<size_t>(k)];
        Eigen::MatrixXd cov = data.features.transpose() * data.features / data.size();
        Eigen::VectorXd cross = data.features.transpose() * data.targets / data.size();
        Eigen::VectorXd expected = 2.0 * (cov * w) - 2.0 * cross + 2.0 * instance.ridge * w;
        CHECK((local_gradient(instance, k, w) - expected).norm() < 1e-12);
    }
}

TEST_CASE("local gradient vanishes at the local minimizer") {
    Rng rng(31);
    RegressionSpec spec = small_spec(4, 30, 2, 0.01, 0.3, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    for (int k = 0; k < 4; ++k) {
        Eigen::VectorXd w_local = local_closed_form_minimizer(instance, k);
        CHECK(local_gradient(instance, k, w_local).norm() < 1e-8);
    }
}

TEST_CASE("vectorized gradient norms agree with per-sample gradients") {
    Rng rng(37);
    RegressionSpec spec = small_spec(2, 15, 3, 0.02, 0.5, rng);
    for (ProblemKind kind : {ProblemKind::regression, ProblemKind::logistic}) {
        ProblemInstance instance = generate_regression(spec, rng);
        if (kind == ProblemKind::logistic) {
            instance.kind = ProblemKind::logistic;
            for (AgentDataset& a : instance.agents)
                for (int n = 0; n < a.size(); ++n) a.targets[n] = a.targets[n] > 0 ? 1.0 : -1.0;
        }
        Eigen::VectorXd w(3);
        w << 0.2, -0.7, 1.1;
        for (int k = 0; k < instance.agent_count(); ++k) {
            Eigen::VectorXd norms = sample_gradient_norms(instance, k, w);
            for (int n = 0; n < instance.samples(k); ++n)
                CHECK(norms[n] ==
                      doctest::Approx(sample_gradient(instance, k, n, w).norm()).epsilon(1e-10));
        }
    }
}

TEST_CASE("per-sample losses are convex along segments") {
    Rng rng(41);
    RegressionSpec spec = small_spec(2, 10, 2, 0.01, 0.3, rng);
    for (ProblemKind kind : {ProblemKind::regression, ProblemKind::logistic}) {
        ProblemInstance instance = generate_regression(spec, rng);
        if (kind == ProblemKind::logistic) {
            instance.kind = ProblemKind::logistic;
            for (AgentDataset& a : instance.agents)
                for (int n = 0; n < a.size(); ++n) a.targets[n] = a.targets[n] > 0 ? 1.0 : -1.0;
        }
        for (int probe = 0; probe < 20; ++probe) {
            Eigen::VectorXd w1(2), w2(2);
            for (int j = 0; j < 2; ++j) {
                w1[j] = 2 * rng.normal();
                w2[j] = 2 * rng.normal();
            }
            int agent = rng.uniform_int(2);
            int sample = rng.uniform_int(10);
            for (double t : {0.25, 0.5, 0.75}) {
                double blend = sample_loss(instance, agent, sample, t * w1 + (1 - t) * w2);
                double bound = t * sample_loss(instance, agent, sample, w1) +
                               (1 - t) * sample_loss(instance, agent, sample, w2);
                CHECK(blend <= bound + 1e-10);
            }
        }
    }
}

TEST_CASE("numeric minimizer agrees with the closed form") {
    Rng rng(43);
    RegressionSpec spec = small_spec(3, 30, 2, 0.05, 0.1, rng);
    ProblemInstance instance = generate_regression(spec, rng);
    Eigen::VectorXd numeric = numeric_minimizer(instance, -1, 1e-12);
    CHECK((numeric - closed_form_minimizer(instance)).norm() < 1e-7);
}

TEST_CASE("libsvm line parsing") {
    const std::string path = "libsvm_line_test.tmp";
    {
        std::ofstream out(path);
        out << "1 1:0.5 3:-0.2\n";
        out << "-1 2:1.5\n";
    }
    AgentDataset data = load_libsvm(path, 3);
    CHECK(data.size() == 2);
    CHECK(data.targets[0] == 1.0);
    CHECK(data.features(0, 0) == doctest::Approx(0.5));
    CHECK(data.features(0, 1) == doctest::Approx(0.0));
    CHECK(data.features(0, 2) == doctest::Approx(-0.2));
    CHECK(data.targets[1] == -1.0);
    std::remove(path.c_str());
}

TEST_CASE("libsvm rejects empty and malformed files") {
    const std::string path = "libsvm_bad_test.tmp";
    {
        std::ofstream out(path);
    }
    CHECK_THROWS_AS(load_libsvm(path), ParseError);
    {
        std::ofstream out(path);
        out << "1 nonsense\n";
    }
    CHECK_THROWS_AS(load_libsvm(path), ParseError);
    {
        std::ofstream out(path);
        out << "1 5:0.2\n";
    }
    CHECK_THROWS_AS(load_libsvm(path, 3), DimensionMismatchError);
    std::remove(path.c_str());
}

TEST_CASE("the shipped synthetic fixture loads") {
    AgentDataset pool = load_libsvm(std::string(ISFED_TEST_DATA_DIR) + "/synthetic.libsvm");
    CHECK(pool.size() == 200);
    CHECK(pool.dim() == 10);
    for (int n = 0; n < pool.size(); ++n)
        CHECK((pool.targets[n] == 1.0 || pool.targets[n] == -1.0));
}

TEST_CASE("single-agent partition holds the full pool") {
    AgentDataset pool = load_libsvm(std::string(ISFED_TEST_DATA_DIR) + "/synthetic.libsvm");
    Rng rng(47);
    ProblemInstance instance = partition_non_iid(pool, 1, 1, 200, 1e-4, rng);
    CHECK(instance.agent_count() == 1);
    CHECK(instance.samples(0) == 200);
}

TEST_CASE("partition sizes stay within the requested range") {
    AgentDataset pool = load_libsvm(std::string(ISFED_TEST_DATA_DIR) + "/synthetic.libsvm");
    Rng rng(53);
    ProblemInstance instance = partition_non_iid(pool, 8, 10, 40, 1e-4, rng);
    long total = 0;
    for (int k = 0; k < 8; ++k) {
        CHECK(instance.samples(k) >= 10);
        CHECK(instance.samples(k) <= 40);
        total += instance.samples(k);
    }
    CHECK(total <= 200);
    CHECK_THROWS_AS(partition_non_iid(pool, 50, 10, 40, 1e-4, rng), PoolTooSmallError);
}

TEST_CASE("partition skews labels below the pool entropy") {
    AgentDataset pool = load_libsvm(std::string(ISFED_TEST_DATA_DIR) + "/synthetic.libsvm");
    Rng rng(59);
    ProblemInstance instance = partition_non_iid(pool, 10, 15, 25, 1e-4, rng);
    double pool_entropy = label_entropy(pool.targets);
    double average = 0.0;
    for (int k = 0; k < 10; ++k)
        average += label_entropy(instance.agents[static_cast<size_t>(k)].targets);
    average /= 10;
    CHECK(average < pool_entropy);
}
