#include "isfed/estimator.hpp"

#include <cmath>
#include <string>

#include "isfed/errors.hpp"

namespace isfed {

namespace {

Eigen::VectorXd population_mean(const WeightedSampleSet& set) {
    const int n = set.size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(set.values.front().size());
    for (int i = 0; i < n; ++i) mean += set.mean_of(i);
    return mean / n;
}

void require_moments(const WeightedSampleSet& set) {
    if (set.values.empty()) throw MissingMomentsError("empty sample set");
    if (set.means && set.means->size() != set.values.size())
        throw MissingMomentsError("means/values size mismatch");
    if (set.variances) {
        if (set.variances->size() != set.values.size())
            throw MissingMomentsError("variances/values size mismatch");
        for (double v : *set.variances)
            if (v < 0.0) throw MissingMomentsError("negative element variance");
    }
}

}  // namespace

Eigen::VectorXd ht_estimate(const std::vector<Eigen::VectorXd>& values,
                            const ProbabilityVector& p, const SampleDraw& draw) {
    const int n = static_cast<int>(values.size());
    Eigen::VectorXd est = Eigen::VectorXd::Zero(values.front().size());
    for (int idx : draw.indices) {
        if (idx < 0 || idx >= n) throw IndexOutOfRangeError("draw index " + std::to_string(idx));
        if (p[idx] <= 0.0)
            throw ZeroProbabilityDrawnError("zero-probability index " + std::to_string(idx));
        est += values[static_cast<size_t>(idx)] / (n * p[idx]);
    }
    return est / draw.size();
}

double ht_variance_with_replacement(const WeightedSampleSet& set, const ProbabilityVector& p,
                                    int batch) {
    require_moments(set);
    const int n = set.size();
    const Eigen::VectorXd mean = population_mean(set);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] <= 0.0) continue;  // never drawn, contributes nothing
        double scale = 1.0 / (n * p[i]);
        total += p[i] * (scale * scale * set.variance_of(i) +
                         (scale * set.mean_of(i) - mean).squaredNorm());
    }
    return total / batch;
}

WithoutReplacementVariance ht_variance_without_replacement(const WeightedSampleSet& set,
                                                           const ProbabilityVector& p, int batch,
                                                           const Eigen::MatrixXd& pair_inclusion) {
    require_moments(set);
    const int n = set.size();
    if (pair_inclusion.rows() != n || pair_inclusion.cols() != n)
        throw InvalidPairMatrixError("pair matrix must be N x N");
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            double v = pair_inclusion(a, b);
            if (v < -1e-12 || v > 1.0 + 1e-12)
                throw InvalidPairMatrixError("pair inclusion out of [0, 1]");
            if (std::abs(v - pair_inclusion(b, a)) > 1e-9)
                throw InvalidPairMatrixError("pair matrix must be symmetric");
        }

    const Eigen::VectorXd mean = population_mean(set);
    std::vector<Eigen::VectorXd> centered(static_cast<size_t>(n));
    double diagonal = 0.0, bound = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] <= 0.0) {
            centered[static_cast<size_t>(i)] = Eigen::VectorXd::Zero(mean.size());
            continue;
        }
        double scale = 1.0 / (n * p[i]);
        centered[static_cast<size_t>(i)] = scale * set.mean_of(i) - mean;
        double cell = p[i] * (scale * scale * set.variance_of(i) +
                              centered[static_cast<size_t>(i)].squaredNorm());
        diagonal += cell;
        bound += cell;
    }
    double cross = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            cross += pair_inclusion(a, b) *
                     centered[static_cast<size_t>(a)].dot(centered[static_cast<size_t>(b)]);
        }
    WithoutReplacementVariance out;
    out.exact = diagonal / batch + cross / (batch * batch);
    out.jensen_bound = bound;
    return out;
}

}  // namespace isfed
