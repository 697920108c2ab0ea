#include "isfed/probability_vector.hpp"

#include <cmath>
#include <string>

#include "isfed/errors.hpp"

namespace isfed {

ProbabilityVector ProbabilityVector::validated(const std::vector<double>& raw) {
    if (raw.empty()) throw EmptyProbabilityError("probability vector must be non-empty");
    double sum = 0.0;
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] < 0.0 || std::isnan(raw[i]))
            throw NegativeEntryError("negative probability at index " + std::to_string(i));
        sum += raw[i];
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw NotNormalizedError("probabilities sum to " + std::to_string(sum));
    std::vector<double> entries(raw);
    for (double& e : entries) e /= sum;
    return ProbabilityVector(std::move(entries));
}

ProbabilityVector ProbabilityVector::uniform(int n) {
    if (n < 1) throw EmptyProbabilityError("uniform distribution needs n >= 1");
    return ProbabilityVector(std::vector<double>(static_cast<size_t>(n), 1.0 / n));
}

ProbabilityVector ProbabilityVector::from_scores(const std::vector<double>& scores) {
    if (scores.empty()) throw EmptyProbabilityError("score vector must be non-empty");
    double sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.0 || std::isnan(scores[i]))
            throw NegativeEntryError("negative score at index " + std::to_string(i));
        sum += scores[i];
    }
    if (sum <= 0.0) return uniform(static_cast<int>(scores.size()));
    std::vector<double> entries(scores);
    for (double& e : entries) e /= sum;
    return ProbabilityVector(std::move(entries));
}

ProbabilityVector ProbabilityVector::unchecked(std::vector<double> entries) {
    return ProbabilityVector(std::move(entries));
}

ProbabilityVector ProbabilityVector::floored(double floor) const {
    std::vector<double> entries(entries_);
    double sum = 0.0;
    for (double& e : entries) {
        if (e < floor) e = floor;
        sum += e;
    }
    for (double& e : entries) e /= sum;
    return ProbabilityVector(std::move(entries));
}

ProbabilityVector validate_probabilities(const std::vector<double>& raw) {
    return ProbabilityVector::validated(raw);
}

}  // namespace isfed
