#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "isfed/probability_vector.hpp"
#include "isfed/sampling.hpp"

namespace isfed {

// Elements whose mean is being estimated. Each element n may itself be random
// with mean `means[n]` and scalar variance `variances[n]`; in the default
// deterministic mode (fixed data points, the federated use case) means equal
// the stored values and variances are zero.
struct WeightedSampleSet {
    std::vector<Eigen::VectorXd> values;
    std::optional<std::vector<Eigen::VectorXd>> means;
    std::optional<std::vector<double>> variances;

    int size() const { return static_cast<int>(values.size()); }
    const Eigen::VectorXd& mean_of(int n) const {
        return means ? (*means)[static_cast<size_t>(n)] : values[static_cast<size_t>(n)];
    }
    double variance_of(int n) const {
        return variances ? (*variances)[static_cast<size_t>(n)] : 0.0;
    }
};

// Reweighted mini-batch mean (1/B) sum_b x_b / (N p_b). The same formula
// serves both replacement modes; the mode only changes the draw's law.
// p holds the normalized inclusion probabilities of the scheme that produced
// the draw. Throws ZeroProbabilityDrawnError if a drawn index has p == 0.
Eigen::VectorXd ht_estimate(const std::vector<Eigen::VectorXd>& values,
                            const ProbabilityVector& p, const SampleDraw& draw);

// Exact variance of the with-replacement estimator:
//   (1/B) sum_n p_n ( sigma_n^2/(N p_n)^2 + || mean_n/(N p_n) - mean ||^2 ).
double ht_variance_with_replacement(const WeightedSampleSet& set, const ProbabilityVector& p,
                                    int batch);

struct WithoutReplacementVariance {
    double exact;         // includes the pairwise cross term
    double jensen_bound;  // cross term dropped, 1/B prefactor dropped
};

// Exact variance of the without-replacement estimator. pair_inclusion[n1][n2]
// must hold the joint inclusion probabilities of the scheme in use (diagonal:
// marginals). The second channel is the Jensen upper bound.
WithoutReplacementVariance ht_variance_without_replacement(const WeightedSampleSet& set,
                                                           const ProbabilityVector& p, int batch,
                                                           const Eigen::MatrixXd& pair_inclusion);

}  // namespace isfed
