#include "isfed/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "isfed/errors.hpp"

namespace isfed {

void curvature_constants(const ProblemInstance& instance, double& nu, double& delta, double& xi) {
    const int agents = instance.agent_count();
    const int dim = instance.dim();

    double max_row_sq = 0.0;
    Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(dim, dim);
    for (int k = 0; k < agents; ++k) {
        const AgentDataset& data = instance.agents[static_cast<size_t>(k)];
        max_row_sq = std::max(max_row_sq, data.features.rowwise().squaredNorm().maxCoeff());
        pooled += data.features.transpose() * data.features / data.size();
    }
    pooled /= agents;

    if (instance.kind == ProblemKind::regression) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pooled);
        nu = 2.0 * std::max(eig.eigenvalues().minCoeff(), 0.0) + 2.0 * instance.ridge;
        delta = 2.0 * max_row_sq + 2.0 * instance.ridge;
    } else {
        nu = 2.0 * instance.ridge;
        delta = 0.25 * max_row_sq + 2.0 * instance.ridge;
    }

    xi = 0.0;
    if (agents == 1) return;  // the only local minimizer is the global one
    const Eigen::VectorXd w_global = reference_minimizer(instance);
    for (int k = 0; k < agents; ++k) {
        Eigen::VectorXd w_local = instance.kind == ProblemKind::regression
                                      ? local_closed_form_minimizer(instance, k)
                                      : numeric_minimizer(instance, k);
        xi = std::max(xi, (w_local - w_global).norm());
    }
}

TheoryConstants noise_constants(const ProblemInstance& instance, const ProbabilitySchedule& probs,
                                const FederationConfig& config, const Eigen::VectorXd& w_global,
                                const std::vector<Eigen::VectorXd>& local_minimizers) {
    const int agents = instance.agent_count();
    TheoryConstants constants;
    curvature_constants(instance, constants.strong_convexity, constants.lipschitz,
                        constants.minimizer_spread);
    const double delta_sq = constants.lipschitz * constants.lipschitz;

    constants.beta_sk2.resize(static_cast<size_t>(agents));
    constants.sigma_sk2.resize(static_cast<size_t>(agents));
    constants.sigma_qk2.resize(static_cast<size_t>(agents));
    constants.alpha_k.resize(static_cast<size_t>(agents));

    double weighted_beta = 0.0, weighted_sigma = 0.0;
    for (int k = 0; k < agents; ++k) {
        const int epochs = config.epochs[static_cast<size_t>(k)];
        const int batch = config.batch_sizes[static_cast<size_t>(k)];
        const int count = instance.samples(k);
        const ProbabilityVector& data_probs = probs.data[static_cast<size_t>(k)];
        if (data_probs.size() != count) throw DimensionMismatchError("data probability length");

        double inv_prob_sum = 0.0;
        for (int n = 0; n < count; ++n) {
            if (data_probs[n] <= 0.0)
                throw ZeroProbabilityDrawnError("zero data probability in constants");
            inv_prob_sum += 1.0 / data_probs[n];
        }
        const double eb = static_cast<double>(epochs) * batch;
        constants.beta_sk2[static_cast<size_t>(k)] =
            3.0 * delta_sq / eb * (1.0 + inv_prob_sum / (static_cast<double>(count) * count));

        const Eigen::VectorXd norms_at_opt = sample_gradient_norms(instance, k, w_global);
        double weighted_norm_sq = 0.0;
        for (int n = 0; n < count; ++n)
            weighted_norm_sq += norms_at_opt[n] * norms_at_opt[n] / data_probs[n];
        weighted_norm_sq /= static_cast<double>(count) * count;
        constants.sigma_sk2[static_cast<size_t>(k)] = 6.0 / eb * weighted_norm_sq;

        Eigen::VectorXd w_local =
            !local_minimizers.empty()
                ? local_minimizers[static_cast<size_t>(k)]
                : (instance.kind == ProblemKind::regression
                       ? local_closed_form_minimizer(instance, k)
                       : numeric_minimizer(instance, k));
        const Eigen::VectorXd norms_local = sample_gradient_norms(instance, k, w_local);
        double weighted_local_sq = 0.0;
        for (int n = 0; n < count; ++n)
            weighted_local_sq += norms_local[n] * norms_local[n] / data_probs[n];
        weighted_local_sq /= static_cast<double>(count) * count;
        constants.sigma_qk2[static_cast<size_t>(k)] = 3.0 / batch * weighted_local_sq;

        constants.alpha_k[static_cast<size_t>(k)] = epoch_batch_alpha(epochs, batch);

        const double agent_prob = probs.agents[k];
        if (agent_prob <= 0.0) throw ZeroProbabilityDrawnError("zero agent probability");
        const double local_grad_sq = local_gradient(instance, k, w_global).squaredNorm();
        weighted_beta += (constants.beta_sk2[static_cast<size_t>(k)] + 3.0 * delta_sq) / agent_prob;
        weighted_sigma += (constants.sigma_sk2[static_cast<size_t>(k)] +
                           constants.alpha_k[static_cast<size_t>(k)] * local_grad_sq) /
                          agent_prob;
    }

    const double k_sq = static_cast<double>(agents) * agents;
    // With replacement the constants carry a 1/L factor; without replacement
    // they do not (exactly L times larger).
    const double scale =
        config.replacement == Replacement::with_replacement ? 1.0 / config.participants : 1.0;
    constants.beta_s2 = scale * (3.0 * delta_sq + weighted_beta / k_sq);
    constants.sigma_s2 = scale * weighted_sigma / k_sq;
    return constants;
}

void rates(TheoryConstants& constants, double mu, const FederationConfig& config,
           const ProbabilityVector& agent_probs) {
    const double nu = constants.strong_convexity;
    const double delta_sq = constants.lipschitz * constants.lipschitz;
    constants.contraction = 1.0 - 2.0 * mu * nu + mu * mu * (delta_sq + constants.beta_s2);
    constants.mu_max = 2.0 * nu / (delta_sq + constants.beta_s2);

    const int agents = static_cast<int>(constants.beta_sk2.size());
    const double k_sq = static_cast<double>(agents) * agents;
    constants.local_contraction.resize(static_cast<size_t>(agents));
    for (int k = 0; k < agents; ++k) {
        const double p = agent_probs[k];
        const double factor = config.epochs[static_cast<size_t>(k)] / (k_sq * p * p) *
                              constants.beta_sk2[static_cast<size_t>(k)];
        constants.local_contraction[static_cast<size_t>(k)] =
            1.0 - 2.0 * nu * mu + mu * mu * (delta_sq + factor);
        constants.mu_max = std::min(constants.mu_max, 2.0 * nu / (delta_sq + factor));
    }
}

TheoryConstants theory_constants(const ProblemInstance& instance,
                                 const ProbabilitySchedule& probs, const FederationConfig& config,
                                 const Eigen::VectorXd& w_global) {
    TheoryConstants constants = noise_constants(instance, probs, config, w_global);
    rates(constants, config.step_size, config, probs.agents);
    return constants;
}

}  // namespace isfed
