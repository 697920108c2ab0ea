#pragma once

#include <vector>

namespace isfed {

// A normalized inclusion-probability vector on the simplex: entries are
// non-negative and sum to one. Construction always goes through validation
// or an explicitly normalizing factory, so instances can be trusted.
class ProbabilityVector {
public:
    // Empty placeholder; only assignment makes it usable.
    ProbabilityVector() = default;

    // Validates a raw vector: entries must be non-negative and sum to 1
    // within 1e-9. The stored vector is renormalized to sum to 1 exactly.
    // Throws EmptyProbabilityError, NegativeEntryError, NotNormalizedError.
    static ProbabilityVector validated(const std::vector<double>& raw);

    static ProbabilityVector uniform(int n);

    // Normalizes arbitrary non-negative scores. An all-zero score vector
    // maps to the uniform distribution (variance-indifferent fallback).
    static ProbabilityVector from_scores(const std::vector<double>& scores);

    int size() const { return static_cast<int>(entries_.size()); }
    double operator[](int i) const { return entries_[static_cast<size_t>(i)]; }
    const std::vector<double>& entries() const { return entries_; }

    // Clamps every entry at `floor` from below and renormalizes. Keeps
    // importance weights 1/(N p) bounded.
    ProbabilityVector floored(double floor) const;

    // Adopts entries that are already known to lie on the simplex without
    // renormalizing them, so callers can preserve untouched entries bit for
    // bit (partial probability updates). The caller guarantees the sum.
    static ProbabilityVector unchecked(std::vector<double> entries);

private:
    explicit ProbabilityVector(std::vector<double> entries) : entries_(std::move(entries)) {}
    std::vector<double> entries_;
};

// Spec-facing alias for ProbabilityVector::validated.
ProbabilityVector validate_probabilities(const std::vector<double>& raw);

}  // namespace isfed
