#pragma once

#include <Eigen/Dense>
#include <vector>

#include "isfed/federated.hpp"
#include "isfed/probabilities.hpp"
#include "isfed/problems.hpp"

namespace isfed {

// Every constant of the convergence statements, evaluated numerically for a
// concrete instance, probability schedule and federation setup.
struct TheoryConstants {
    double strong_convexity = 0.0;  // nu
    double lipschitz = 0.0;         // delta, per-sample gradient Lipschitz constant
    double minimizer_spread = 0.0;  // xi = max_k ||w_k^o - w^o||

    std::vector<double> beta_sk2;   // per-agent model-variability factors
    std::vector<double> sigma_sk2;  // per-agent data-variability constants
    std::vector<double> sigma_qk2;  // per-agent local-noise constants (at w_k^o)
    std::vector<double> alpha_k;    // 3 + 6/(E_k B_k)

    double beta_s2 = 0.0;
    double sigma_s2 = 0.0;

    double contraction = 0.0;              // lambda
    std::vector<double> local_contraction; // lambda_k
    double mu_max = 0.0;                   // admissible step-size bound
};

// Curvature of the instance:
//   regression: nu = 2 lambda_min(pooled R_u) + 2 rho,
//               delta = max_{k,n} 2 ||u_{k,n}||^2 + 2 rho;
//   logistic:   nu = 2 rho, delta = max_{k,n} ||u||^2 / 4 + 2 rho.
// xi is the largest distance between a local minimizer and the global one.
void curvature_constants(const ProblemInstance& instance, double& nu, double& delta, double& xi);

// Variance constants of the gradient-noise bound for the given schedule:
// beta_sk2, sigma_sk2 (at w_global), sigma_qk2 (at the local minimizers),
// alpha_k, and the combined beta_s2 / sigma_s2. The without-replacement form
// drops the 1/L scaling, i.e. equals the with-replacement form times L.
// Probabilities are taken as given (pass the effective floored/capped vectors
// to describe the sampler actually used). local_minimizers may be empty, in
// which case they are computed internally.
TheoryConstants noise_constants(const ProblemInstance& instance, const ProbabilitySchedule& probs,
                                const FederationConfig& config, const Eigen::VectorXd& w_global,
                                const std::vector<Eigen::VectorXd>& local_minimizers = {});

// Fills the rate fields: lambda = 1 - 2 mu nu + mu^2 (delta^2 + beta_s2),
// lambda_k with the per-agent factor E_k/(K p_k)^2 beta_sk2, and mu_max as
// the smallest admissible bound over the global and local recursions.
void rates(TheoryConstants& constants, double mu, const FederationConfig& config,
           const ProbabilityVector& agent_probs);

// Convenience wrapper: full constant set for a schedule at the minimizer.
TheoryConstants theory_constants(const ProblemInstance& instance,
                                 const ProbabilitySchedule& probs, const FederationConfig& config,
                                 const Eigen::VectorXd& w_global);

}  // namespace isfed
