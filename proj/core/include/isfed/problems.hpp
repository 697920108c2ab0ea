#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "isfed/rng.hpp"

namespace isfed {

enum class ProblemKind { regression, logistic };

// One agent's local data: N_k feature rows of dimension M, plus targets
// (real-valued for regression, labels in {-1,+1} for classification).
struct AgentDataset {
    Eigen::MatrixXd features;  // N_k x M
    Eigen::VectorXd targets;   // N_k
    int agent_id = 0;

    int size() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
};

// A full risk-function bundle over K agents. Per-sample losses:
//   regression: Q(w; u, d) = (d - u'w)^2 + rho ||w||^2
//   logistic:   Q(w; u, y) = ln(1 + exp(-y u'w)) + rho ||w||^2
// The ridge term is attributed to every sample so that averaging per-sample
// gradients over an agent's data reproduces the local risk gradient exactly.
struct ProblemInstance {
    std::vector<AgentDataset> agents;
    double ridge = 0.0;
    ProblemKind kind = ProblemKind::regression;
    std::optional<Eigen::VectorXd> planted_model;  // regression w*, if generated

    int agent_count() const { return static_cast<int>(agents.size()); }
    int dim() const { return agents.empty() ? 0 : agents.front().dim(); }
    int samples(int agent) const { return agents[static_cast<size_t>(agent)].size(); }
    long total_samples() const;
};

enum class NoiseShape { gaussian, sign };

struct RegressionSpec {
    int agents = 1;
    int samples_per_agent = 1;
    int dim = 1;
    double ridge = 0.0;
    std::vector<double> noise_variances;           // per-agent sigma_v^2, size K
    std::vector<Eigen::VectorXd> feature_scales;   // per-agent diagonal covariance, size K
    NoiseShape noise_shape = NoiseShape::gaussian;
};

// Draws w* once, then per agent draws Gaussian features with the given
// diagonal covariance and targets d = u'w* + v, where v is zero-mean noise of
// variance sigma_v^2: Gaussian, or symmetric +-sigma_v sign noise (keeps
// residual magnitudes bounded away from zero, which bounds the importance
// weights of gradient-norm-proportional schedules).
ProblemInstance generate_regression(const RegressionSpec& spec, Rng& rng);

// Fills per-agent diagonal covariances log-uniform in [cov_min, cov_max].
std::vector<Eigen::VectorXd> log_uniform_feature_scales(int agents, int dim, double cov_min,
                                                        double cov_max, Rng& rng);

// Ridge regression minimizer from the pooled normal equations
// (R_u + rho I) w = r_du with R_u and r_du double-averaged over agents and
// samples. Throws SingularSystemError above condition number 1e12.
Eigen::VectorXd closed_form_minimizer(const ProblemInstance& instance);
// Same restricted to one agent (the local minimizer w_k^o).
Eigen::VectorXd local_closed_form_minimizer(const ProblemInstance& instance, int agent);

// Per-sample gradient of Q at w, ridge included.
Eigen::VectorXd sample_gradient(const ProblemInstance& instance, int agent, int sample,
                                const Eigen::VectorXd& w);

// acc += scale * grad Q(w; x_{agent,sample}); allocation-free hot path of the
// training loops.
void accumulate_sample_gradient(const ProblemInstance& instance, int agent, int sample,
                                const Eigen::VectorXd& w, double scale, Eigen::VectorXd& acc);
double sample_loss(const ProblemInstance& instance, int agent, int sample,
                   const Eigen::VectorXd& w);

// Local risk gradient: the average of per-sample gradients over the agent.
Eigen::VectorXd local_gradient(const ProblemInstance& instance, int agent,
                               const Eigen::VectorXd& w);
// Average of local gradients over all agents.
Eigen::VectorXd global_gradient(const ProblemInstance& instance, const Eigen::VectorXd& w);

// Norms of all per-sample gradients of one agent, vectorized.
Eigen::VectorXd sample_gradient_norms(const ProblemInstance& instance, int agent,
                                      const Eigen::VectorXd& w);

// Minimizer of the pooled (or one agent's, when agent >= 0) risk by Nesterov
// gradient descent; used where no closed form exists (logistic).
Eigen::VectorXd numeric_minimizer(const ProblemInstance& instance, int agent = -1,
                                  double tol = 1e-10, int max_iterations = 500000);

// Reference minimizer for either problem kind: closed form for regression,
// numeric for logistic.
Eigen::VectorXd reference_minimizer(const ProblemInstance& instance);

// LIBSVM text format: "label index:value ..." with 1-based indices. Rows are
// materialized densely; labels are normalized to {-1,+1} (anything > 0 maps
// to +1). forced_dim pins the feature dimension (0 = infer from the file).
AgentDataset load_libsvm(const std::string& path, int forced_dim = 0);

// Label-skewed partition: sorts the pool by label then by a random 1-D
// feature projection and slices contiguous shards with sizes drawn from
// [min_size, max_size], one shard per agent.
ProblemInstance partition_non_iid(const AgentDataset& pool, int agents, int min_size,
                                  int max_size, double ridge, Rng& rng);

}  // namespace isfed
