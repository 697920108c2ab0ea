#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace isfed {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Enumeration and Monte-Carlo oracle checks for the sampling and estimator
// layers. Each check is self-contained: the expected values come from
// exhaustive enumeration of outcomes (or closed-form hand values), not from
// the formula implementations they validate.

// Estimator-moment oracle equivalence: for every N <= 6, B <= 3, scheme in
// {with replacement, sequential, systematic} and `instances` random
// probability/value instances, enumeration of all outcomes must match the
// estimator's expectation and both variance formulas to 1e-10.
CheckResult check_estimator_enumeration(std::uint64_t seed, int instances = 20);

// Inclusion-probability correctness: sums to B, the hand-enumerated
// sequential example (19/30), the systematic closed form, and Monte-Carlo
// inclusion frequencies of the systematic sampler within 3 standard errors.
CheckResult check_inclusion_probabilities(std::uint64_t seed, long trials = 100000);

// Optimality of the closed-form probabilities: a simplex grid search at the
// given resolution finds no point beating the closed-form optimum, for
// `instances` random instances per objective in dimensions 2..4.
CheckResult check_probability_optimality(std::uint64_t seed, int instances = 10,
                                         int resolution = 100);

// All oracle checks in order.
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed = 0x15FEDULL);

}  // namespace isfed
