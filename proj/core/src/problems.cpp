#include "isfed/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "isfed/errors.hpp"

namespace isfed {

namespace {

void check_indices(const ProblemInstance& instance, int agent, int sample) {
    if (agent < 0 || agent >= instance.agent_count())
        throw IndexOutOfRangeError("agent " + std::to_string(agent));
    if (sample < 0 || sample >= instance.samples(agent))
        throw IndexOutOfRangeError("sample " + std::to_string(sample));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Accumulates the pooled (or single-agent) second moments for the ridge
// normal equations.
void accumulate_moments(const ProblemInstance& instance, int agent, Eigen::MatrixXd& cov,
                        Eigen::VectorXd& cross) {
    const int m = instance.dim();
    cov = Eigen::MatrixXd::Zero(m, m);
    cross = Eigen::VectorXd::Zero(m);
    const int first = agent >= 0 ? agent : 0;
    const int last = agent >= 0 ? agent + 1 : instance.agent_count();
    for (int k = first; k < last; ++k) {
        const AgentDataset& data = instance.agents[static_cast<size_t>(k)];
        cov += data.features.transpose() * data.features / data.size();
        cross += data.features.transpose() * data.targets / data.size();
    }
    const double count = last - first;
    cov /= count;
    cross /= count;
}

Eigen::VectorXd solve_ridge(const ProblemInstance& instance, int agent) {
    if (instance.kind != ProblemKind::regression)
        throw SingularSystemError("closed form requires a regression instance");
    Eigen::MatrixXd cov;
    Eigen::VectorXd cross;
    accumulate_moments(instance, agent, cov, cross);
    Eigen::MatrixXd system = cov + instance.ridge * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(system);
    double lo = eig.eigenvalues().minCoeff();
    double hi = eig.eigenvalues().maxCoeff();
    if (lo <= 0.0 || hi / lo > 1e12)
        throw SingularSystemError("normal equations are ill-conditioned");
    return system.ldlt().solve(cross);
}

}  // namespace

long ProblemInstance::total_samples() const {
    long total = 0;
    for (const AgentDataset& a : agents) total += a.size();
    return total;
}

ProblemInstance generate_regression(const RegressionSpec& spec, Rng& rng) {
    if (spec.agents < 1 || spec.samples_per_agent < 1 || spec.dim < 1)
        throw InvalidCovarianceError("dimensions must be positive");
    if (static_cast<int>(spec.noise_variances.size()) != spec.agents ||
        static_cast<int>(spec.feature_scales.size()) != spec.agents)
        throw InvalidCovarianceError("per-agent parameter lists must have length K");
    for (const Eigen::VectorXd& s : spec.feature_scales) {
        if (s.size() != spec.dim) throw InvalidCovarianceError("feature scale dim mismatch");
        if ((s.array() <= 0.0).any()) throw InvalidCovarianceError("covariance must be positive");
    }
    for (double v : spec.noise_variances)
        if (v < 0.0) throw InvalidCovarianceError("noise variance must be non-negative");

    ProblemInstance instance;
    instance.kind = ProblemKind::regression;
    instance.ridge = spec.ridge;
    Eigen::VectorXd planted(spec.dim);
    for (int j = 0; j < spec.dim; ++j) planted[j] = rng.normal();
    instance.planted_model = planted;

    instance.agents.resize(static_cast<size_t>(spec.agents));
    for (int k = 0; k < spec.agents; ++k) {
        AgentDataset& data = instance.agents[static_cast<size_t>(k)];
        data.agent_id = k;
        data.features.resize(spec.samples_per_agent, spec.dim);
        data.targets.resize(spec.samples_per_agent);
        const Eigen::VectorXd stddev = spec.feature_scales[static_cast<size_t>(k)].cwiseSqrt();
        const double noise_std = std::sqrt(spec.noise_variances[static_cast<size_t>(k)]);
        for (int n = 0; n < spec.samples_per_agent; ++n) {
            for (int j = 0; j < spec.dim; ++j) data.features(n, j) = stddev[j] * rng.normal();
            double noise = spec.noise_shape == NoiseShape::gaussian
                               ? noise_std * rng.normal()
                               : (rng.uniform() < 0.5 ? -noise_std : noise_std);
            data.targets[n] = data.features.row(n).dot(planted) + noise;
        }
    }
    return instance;
}

std::vector<Eigen::VectorXd> log_uniform_feature_scales(int agents, int dim, double cov_min,
                                                        double cov_max, Rng& rng) {
    if (cov_min <= 0.0 || cov_max < cov_min)
        throw InvalidCovarianceError("covariance range must satisfy 0 < min <= max");
    std::vector<Eigen::VectorXd> scales(static_cast<size_t>(agents));
    const double log_lo = std::log(cov_min), log_hi = std::log(cov_max);
    for (auto& s : scales) {
        s.resize(dim);
        for (int j = 0; j < dim; ++j)
            s[j] = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
    }
    return scales;
}

Eigen::VectorXd closed_form_minimizer(const ProblemInstance& instance) {
    return solve_ridge(instance, -1);
}

Eigen::VectorXd local_closed_form_minimizer(const ProblemInstance& instance, int agent) {
    check_indices(instance, agent, 0);
    return solve_ridge(instance, agent);
}

Eigen::VectorXd sample_gradient(const ProblemInstance& instance, int agent, int sample,
                                const Eigen::VectorXd& w) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(w.size());
    accumulate_sample_gradient(instance, agent, sample, w, 1.0, grad);
    return grad;
}

void accumulate_sample_gradient(const ProblemInstance& instance, int agent, int sample,
                                const Eigen::VectorXd& w, double scale, Eigen::VectorXd& acc) {
    check_indices(instance, agent, sample);
    const AgentDataset& data = instance.agents[static_cast<size_t>(agent)];
    const auto u = data.features.row(sample);
    const double target = data.targets[sample];
    double coeff;
    if (instance.kind == ProblemKind::regression) {
        coeff = 2.0 * (u.dot(w) - target);
    } else {
        coeff = -target * sigmoid(-target * u.dot(w));
    }
    acc.noalias() += (scale * coeff) * u.transpose();
    acc.noalias() += (scale * 2.0 * instance.ridge) * w;
}

double sample_loss(const ProblemInstance& instance, int agent, int sample,
                   const Eigen::VectorXd& w) {
    check_indices(instance, agent, sample);
    const AgentDataset& data = instance.agents[static_cast<size_t>(agent)];
    const auto u = data.features.row(sample).transpose();
    const double target = data.targets[sample];
    const double ridge = instance.ridge * w.squaredNorm();
    if (instance.kind == ProblemKind::regression) {
        double r = target - u.dot(w);
        return r * r + ridge;
    }
    // log1p(exp(-m)) evaluated stably on both tails
    const double margin = target * u.dot(w);
    double loss = margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    return loss + ridge;
}

Eigen::VectorXd local_gradient(const ProblemInstance& instance, int agent,
                               const Eigen::VectorXd& w) {
    check_indices(instance, agent, 0);
    const AgentDataset& data = instance.agents[static_cast<size_t>(agent)];
    const Eigen::VectorXd margins = data.features * w;
    if (instance.kind == ProblemKind::regression) {
        Eigen::VectorXd residual = margins - data.targets;
        return 2.0 * data.features.transpose() * residual / data.size() +
               2.0 * instance.ridge * w;
    }
    Eigen::VectorXd coeff(data.size());
    for (int n = 0; n < data.size(); ++n)
        coeff[n] = -data.targets[n] * sigmoid(-data.targets[n] * margins[n]);
    return data.features.transpose() * coeff / data.size() + 2.0 * instance.ridge * w;
}

Eigen::VectorXd global_gradient(const ProblemInstance& instance, const Eigen::VectorXd& w) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(instance.dim());
    for (int k = 0; k < instance.agent_count(); ++k) grad += local_gradient(instance, k, w);
    return grad / instance.agent_count();
}

Eigen::VectorXd sample_gradient_norms(const ProblemInstance& instance, int agent,
                                      const Eigen::VectorXd& w) {
    check_indices(instance, agent, 0);
    const AgentDataset& data = instance.agents[static_cast<size_t>(agent)];
    const Eigen::VectorXd margins = data.features * w;
    const Eigen::VectorXd row_sq = data.features.rowwise().squaredNorm();
    const double ridge_sq = 4.0 * instance.ridge * instance.ridge * w.squaredNorm();
    Eigen::VectorXd norms(data.size());
    // ||c_n u_n + 2 rho w||^2 = c_n^2 ||u_n||^2 + 4 rho c_n u_n'w + 4 rho^2 ||w||^2
    for (int n = 0; n < data.size(); ++n) {
        double c = instance.kind == ProblemKind::regression
                       ? 2.0 * (margins[n] - data.targets[n])
                       : -data.targets[n] * sigmoid(-data.targets[n] * margins[n]);
        double sq = c * c * row_sq[n] + 4.0 * instance.ridge * c * margins[n] + ridge_sq;
        norms[n] = std::sqrt(std::max(sq, 0.0));
    }
    return norms;
}

Eigen::VectorXd numeric_minimizer(const ProblemInstance& instance, int agent, double tol,
                                  int max_iterations) {
    // Lipschitz constant of the (agent or pooled) gradient bounds the step.
    double max_row_sq = 0.0;
    const int first = agent >= 0 ? agent : 0;
    const int last = agent >= 0 ? agent + 1 : instance.agent_count();
    for (int k = first; k < last; ++k)
        max_row_sq = std::max(
            max_row_sq, instance.agents[static_cast<size_t>(k)].features.rowwise().squaredNorm().maxCoeff());
    const double lipschitz = (instance.kind == ProblemKind::regression ? 2.0 * max_row_sq
                                                                       : 0.25 * max_row_sq) +
                             2.0 * instance.ridge;
    const double step = 1.0 / lipschitz;

    auto grad = [&](const Eigen::VectorXd& w) {
        if (agent >= 0) return local_gradient(instance, agent, w);
        return global_gradient(instance, w);
    };

    Eigen::VectorXd w = Eigen::VectorXd::Zero(instance.dim());
    Eigen::VectorXd y = w, w_prev = w;
    double t = 1.0;
    for (int i = 0; i < max_iterations; ++i) {
        Eigen::VectorXd g = grad(y);
        if (g.norm() < tol) return y;
        w_prev = w;
        w = y - step * g;
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = w + (t - 1.0) / t_next * (w - w_prev);
        t = t_next;
    }
    return w;
}

Eigen::VectorXd reference_minimizer(const ProblemInstance& instance) {
    if (instance.kind == ProblemKind::regression) return closed_form_minimizer(instance);
    return numeric_minimizer(instance);
}

ProblemInstance partition_non_iid(const AgentDataset& pool, int agents, int min_size,
                                  int max_size, double ridge, Rng& rng) {
    if (agents < 1) throw PoolTooSmallError("need at least one agent");
    if (min_size < 1 || max_size < min_size) throw PoolTooSmallError("bad size range");
    const long pool_size = pool.size();
    if (pool_size < static_cast<long>(agents) * min_size)
        throw PoolTooSmallError("pool smaller than agents * min_size");

    // Sort by label, then by a random 1-D projection of the features, so that
    // contiguous shards are label- and feature-skewed.
    Eigen::VectorXd direction(pool.dim());
    for (int j = 0; j < pool.dim(); ++j) direction[j] = rng.normal();
    direction.normalize();
    Eigen::VectorXd projection = pool.features * direction;
    std::vector<int> order(static_cast<size_t>(pool_size));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (pool.targets[a] != pool.targets[b]) return pool.targets[a] < pool.targets[b];
        return projection[a] < projection[b];
    });

    // Random shard sizes within [min_size, max_size], rescaled to spend the
    // whole pool when feasible; clamping keeps sizes inside the range.
    std::vector<double> raw(static_cast<size_t>(agents));
    for (double& r : raw) r = min_size + (max_size - min_size) * rng.uniform();
    double raw_sum = std::accumulate(raw.begin(), raw.end(), 0.0);
    const long budget = std::min(pool_size, static_cast<long>(agents) * max_size);
    std::vector<int> sizes(static_cast<size_t>(agents));
    long assigned = 0;
    for (int k = 0; k < agents; ++k) {
        double share = raw[static_cast<size_t>(k)] / raw_sum * budget;
        int s = std::clamp(static_cast<int>(std::llround(share)), min_size, max_size);
        sizes[static_cast<size_t>(k)] = s;
        assigned += s;
    }
    // Fix the total by nudging non-saturated shards.
    for (int k = 0; assigned != budget && k < agents * (max_size - min_size + 1); ++k) {
        int idx = k % agents;
        int& s = sizes[static_cast<size_t>(idx)];
        if (assigned < budget && s < max_size) {
            ++s;
            ++assigned;
        } else if (assigned > budget && s > min_size) {
            --s;
            --assigned;
        }
    }

    ProblemInstance instance;
    instance.kind = ProblemKind::logistic;
    instance.ridge = ridge;
    instance.agents.resize(static_cast<size_t>(agents));
    long offset = 0;
    for (int k = 0; k < agents; ++k) {
        AgentDataset& data = instance.agents[static_cast<size_t>(k)];
        const int count = sizes[static_cast<size_t>(k)];
        data.agent_id = k;
        data.features.resize(count, pool.dim());
        data.targets.resize(count);
        for (int n = 0; n < count; ++n) {
            int src = order[static_cast<size_t>(offset + n)];
            data.features.row(n) = pool.features.row(src);
            data.targets[n] = pool.targets[src];
        }
        offset += count;
    }
    return instance;
}

}  // namespace isfed
