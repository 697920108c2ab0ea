#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "isfed/probability_vector.hpp"
#include "isfed/rng.hpp"

namespace isfed {

enum class Replacement { with_replacement, without_replacement };

// An ordered list of selected indices (0-based).
struct SampleDraw {
    std::vector<int> indices;
    Replacement replacement = Replacement::without_replacement;

    int size() const { return static_cast<int>(indices.size()); }
};

// B i.i.d. draws, index n selected with probability p[n].
SampleDraw sample_with_replacement(const ProbabilityVector& p, int batch, Rng& rng);

// Systematic sampling against the progressive totals Pi_k = sum_{l<=k} take*p_l:
// one uniform variate d in [0,1) is drawn and index k is selected whenever
// Pi_{k-1} <= d + m < Pi_k for some integer m in {0,...,take-1}. The realized
// inclusion probability of index n is exactly take*p_n, which requires
// take*p_n <= 1 for every n (InclusionOverflowError otherwise; see
// cap_inclusion_probabilities). Ties at interval boundaries go to the right
// interval. Index order is randomly permuted per call: the scheme is
// order-sensitive (adjacent indices are negatively correlated) and the
// permutation removes systematic pairing across iterations while leaving
// marginal inclusion probabilities untouched.
SampleDraw systematic_sample_without_replacement(const ProbabilityVector& p, int take, Rng& rng);

// Deterministic core of the systematic scheme: explicit variate and index
// order (empty order means identity).
SampleDraw systematic_sample_ordered(const ProbabilityVector& p, int take, double variate,
                                     std::span<const int> order = {});

// Draws `batch` distinct indices one at a time, renormalizing the working
// probabilities over the remaining indices after each draw. This realizes the
// draw-by-draw scheme whose inclusion probabilities differ from the working
// probabilities; the main algorithm uses the systematic scheme instead.
SampleDraw sequential_sample_without_replacement(const ProbabilityVector& p, int batch, Rng& rng);

enum class InclusionScheme { sequential, systematic };

// Exact per-index inclusion probabilities P(n in draw); they sum to `batch`.
// Sequential scheme: exact subset dynamic program, limited to length <= 12
// (TooLargeToEnumerateError). Systematic scheme: closed form min(batch*p_n, 1).
std::vector<double> exact_inclusion_probabilities(const ProbabilityVector& p, int batch,
                                                  InclusionScheme scheme);

// Joint inclusion probabilities P(n1 in draw, n2 in draw); diagonal holds the
// marginals. Sequential: subset DP (length <= 12). Systematic: exact overlap
// of the wrapped selection arcs on the unit circle, for the canonical
// (identity) index order.
Eigen::MatrixXd sequential_pair_inclusion(const ProbabilityVector& p, int batch);
Eigen::MatrixXd systematic_pair_inclusion(const ProbabilityVector& p, int take);

// Repairs infeasible inclusion targets: entries with take*p_n > 1 are capped
// at 1/take and the excess mass is redistributed proportionally over the
// rest, repeating until take*p_n <= 1 everywhere. Preserves the ranking of
// probabilities.
ProbabilityVector cap_inclusion_probabilities(const ProbabilityVector& p, int take);

}  // namespace isfed
