#include "isfed/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "isfed/errors.hpp"

namespace isfed {

namespace {

constexpr double kOverflowTol = 1e-12;

// Index of the cumulative cell containing u: smallest k with cum[k] > u.
int locate(const std::vector<double>& cum, double u) {
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) --it;  // u landed past the last edge by rounding
    return static_cast<int>(it - cum.begin());
}

std::vector<int> random_permutation(int n, Rng& rng) {
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        int j = rng.uniform_int(i + 1);
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    return perm;
}

}  // namespace

SampleDraw sample_with_replacement(const ProbabilityVector& p, int batch, Rng& rng) {
    if (batch < 1) throw BatchTooLargeError("batch must be >= 1");
    std::vector<double> cum(static_cast<size_t>(p.size()));
    double acc = 0.0;
    for (int n = 0; n < p.size(); ++n) {
        acc += p[n];
        cum[static_cast<size_t>(n)] = acc;
    }
    cum.back() = 1.0;
    SampleDraw draw;
    draw.replacement = Replacement::with_replacement;
    draw.indices.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) draw.indices.push_back(locate(cum, rng.uniform()));
    return draw;
}

SampleDraw systematic_sample_ordered(const ProbabilityVector& p, int take, double variate,
                                     std::span<const int> order) {
    const int n = p.size();
    if (take < 1 || take > n) throw BatchTooLargeError("take must be in [1, length]");
    std::vector<int> identity;
    if (order.empty()) {
        identity.resize(static_cast<size_t>(n));
        std::iota(identity.begin(), identity.end(), 0);
        order = identity;
    }

    // Progressive totals over the (permuted) inclusion targets take*p.
    std::vector<double> totals(static_cast<size_t>(n) + 1, 0.0);
    for (int k = 0; k < n; ++k) {
        double width = take * p[order[static_cast<size_t>(k)]];
        if (width > 1.0 + kOverflowTol)
            throw InclusionOverflowError("take*p exceeds 1 at index " +
                                         std::to_string(order[static_cast<size_t>(k)]));
        totals[static_cast<size_t>(k) + 1] = totals[static_cast<size_t>(k)] + width;
    }
    totals.back() = static_cast<double>(take);  // exact upper edge

    SampleDraw draw;
    draw.replacement = Replacement::without_replacement;
    draw.indices.reserve(static_cast<size_t>(take));
    int prev = -1;
    for (int m = 0; m < take; ++m) {
        double pos = variate + m;
        auto it = std::upper_bound(totals.begin() + 1, totals.end(), pos);
        int k = static_cast<int>(it - totals.begin()) - 1;
        if (k >= n) k = n - 1;
        if (k <= prev) k = prev + 1;  // fp tie at a boundary; keep indices distinct
        prev = k;
        draw.indices.push_back(order[static_cast<size_t>(k)]);
    }
    return draw;
}

SampleDraw systematic_sample_without_replacement(const ProbabilityVector& p, int take, Rng& rng) {
    std::vector<int> perm = random_permutation(p.size(), rng);
    double variate = rng.uniform();
    return systematic_sample_ordered(p, take, variate, perm);
}

SampleDraw sequential_sample_without_replacement(const ProbabilityVector& p, int batch, Rng& rng) {
    const int n = p.size();
    if (batch < 1 || batch > n) throw BatchTooLargeError("batch must be in [1, length]");
    std::vector<double> remaining(p.entries());
    double mass = 1.0;
    SampleDraw draw;
    draw.replacement = Replacement::without_replacement;
    draw.indices.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        if (mass <= 0.0) throw BatchTooLargeError("ran out of positive probability mass");
        double u = rng.uniform() * mass;
        double acc = 0.0;
        int chosen = -1;
        for (int k = 0; k < n; ++k) {
            acc += remaining[static_cast<size_t>(k)];
            if (u < acc) {
                chosen = k;
                break;
            }
        }
        if (chosen < 0) {  // rounding at the top edge; take the last positive entry
            for (int k = n - 1; k >= 0; --k)
                if (remaining[static_cast<size_t>(k)] > 0.0) {
                    chosen = k;
                    break;
                }
        }
        draw.indices.push_back(chosen);
        mass -= remaining[static_cast<size_t>(chosen)];
        remaining[static_cast<size_t>(chosen)] = 0.0;
    }
    return draw;
}

namespace {

// Exact distribution of the sequential scheme as a dynamic program over
// subsets: f(S) = P(the first |S| draws realize exactly the set S)
//              = sum_{m in S} f(S \ m) * p_m / (1 - mass(S \ m)).
// Length is capped at 12 so the table stays small.
std::vector<double> sequential_subset_distribution(const ProbabilityVector& p, int batch) {
    const int n = p.size();
    if (n > 12) throw TooLargeToEnumerateError("sequential enumeration limited to length <= 12");
    if (batch < 1 || batch > n) throw BatchTooLargeError("batch must be in [1, length]");
    const size_t states = size_t{1} << n;
    std::vector<double> mass(states, 0.0), f(states, 0.0);
    for (size_t s = 0; s < states; ++s)
        for (int k = 0; k < n; ++k)
            if (s & (size_t{1} << k)) mass[s] += p[k];
    f[0] = 1.0;
    for (size_t s = 1; s < states; ++s) {
        if (std::popcount(s) > batch) continue;
        double total = 0.0;
        for (int m = 0; m < n; ++m) {
            if (!(s & (size_t{1} << m))) continue;
            size_t prev = s & ~(size_t{1} << m);
            double denom = 1.0 - mass[prev];
            if (denom > 0.0) total += f[prev] * p[m] / denom;
        }
        f[s] = total;
    }
    return f;
}

}  // namespace

std::vector<double> exact_inclusion_probabilities(const ProbabilityVector& p, int batch,
                                                  InclusionScheme scheme) {
    const int n = p.size();
    std::vector<double> incl(static_cast<size_t>(n), 0.0);
    if (scheme == InclusionScheme::systematic) {
        for (int k = 0; k < n; ++k) incl[static_cast<size_t>(k)] = std::min(batch * p[k], 1.0);
        return incl;
    }
    std::vector<double> f = sequential_subset_distribution(p, batch);
    const size_t states = size_t{1} << n;
    for (size_t s = 0; s < states; ++s) {
        if (std::popcount(s) != batch || f[s] == 0.0) continue;
        for (int k = 0; k < n; ++k)
            if (s & (size_t{1} << k)) incl[static_cast<size_t>(k)] += f[s];
    }
    return incl;
}

Eigen::MatrixXd sequential_pair_inclusion(const ProbabilityVector& p, int batch) {
    const int n = p.size();
    std::vector<double> f = sequential_subset_distribution(p, batch);
    Eigen::MatrixXd pair = Eigen::MatrixXd::Zero(n, n);
    const size_t states = size_t{1} << n;
    for (size_t s = 0; s < states; ++s) {
        if (std::popcount(s) != batch || f[s] == 0.0) continue;
        for (int a = 0; a < n; ++a) {
            if (!(s & (size_t{1} << a))) continue;
            for (int b = 0; b < n; ++b)
                if (s & (size_t{1} << b)) pair(a, b) += f[s];
        }
    }
    return pair;
}

namespace {

// Overlap of two half-open arcs on the unit circle, each given as
// [start, start+width) with width <= 1.
double arc_overlap(double start_a, double width_a, double start_b, double width_b) {
    if (width_a <= 0.0 || width_b <= 0.0) return 0.0;
    if (width_a >= 1.0 || width_b >= 1.0) return std::min(width_a, width_b);
    double overlap = 0.0;
    // Split each arc at the wrap point and intersect segment pairs.
    auto segments = [](double start, double width, double seg[2][2]) {
        start = start - std::floor(start);
        if (start + width <= 1.0) {
            seg[0][0] = start;
            seg[0][1] = start + width;
            seg[1][0] = seg[1][1] = 0.0;
        } else {
            seg[0][0] = start;
            seg[0][1] = 1.0;
            seg[1][0] = 0.0;
            seg[1][1] = start + width - 1.0;
        }
    };
    double sa[2][2], sb[2][2];
    segments(start_a, width_a, sa);
    segments(start_b, width_b, sb);
    for (auto& x : sa)
        for (auto& y : sb)
            overlap += std::max(0.0, std::min(x[1], y[1]) - std::max(x[0], y[0]));
    return overlap;
}

}  // namespace

Eigen::MatrixXd systematic_pair_inclusion(const ProbabilityVector& p, int take) {
    const int n = p.size();
    // Index k is selected iff the variate d falls in the arc
    // [Pi_{k-1} mod 1, Pi_k mod 1) of length take*p_k on the unit circle.
    std::vector<double> start(static_cast<size_t>(n)), width(static_cast<size_t>(n));
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        double w = take * p[k];
        if (w > 1.0 + kOverflowTol)
            throw InclusionOverflowError("take*p exceeds 1 at index " + std::to_string(k));
        start[static_cast<size_t>(k)] = acc - std::floor(acc);
        width[static_cast<size_t>(k)] = std::min(w, 1.0);
        acc += w;
    }
    Eigen::MatrixXd pair(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (a == b) {
                pair(a, b) = width[static_cast<size_t>(a)];
            } else if (width[static_cast<size_t>(a)] >= 1.0) {
                pair(a, b) = width[static_cast<size_t>(b)];
            } else if (width[static_cast<size_t>(b)] >= 1.0) {
                pair(a, b) = width[static_cast<size_t>(a)];
            } else {
                pair(a, b) = arc_overlap(start[static_cast<size_t>(a)], width[static_cast<size_t>(a)],
                                         start[static_cast<size_t>(b)], width[static_cast<size_t>(b)]);
            }
        }
    }
    return pair;
}

ProbabilityVector cap_inclusion_probabilities(const ProbabilityVector& p, int take) {
    const int n = p.size();
    if (take < 1 || take > n) throw BatchTooLargeError("take must be in [1, length]");
    const double cap = 1.0 / take;
    std::vector<double> q(p.entries());
    std::vector<bool> capped(static_cast<size_t>(n), false);
    for (int round = 0; round < n; ++round) {
        int newly = 0;
        double free_mass = 1.0, free_sum = 0.0;
        for (int k = 0; k < n; ++k) {
            if (capped[static_cast<size_t>(k)]) {
                free_mass -= cap;
            } else if (q[static_cast<size_t>(k)] > cap * (1.0 + kOverflowTol)) {
                capped[static_cast<size_t>(k)] = true;
                free_mass -= cap;
                ++newly;
            } else {
                free_sum += q[static_cast<size_t>(k)];
            }
        }
        if (newly == 0) break;
        if (free_mass < 0.0) free_mass = 0.0;
        for (int k = 0; k < n; ++k) {
            if (capped[static_cast<size_t>(k)])
                q[static_cast<size_t>(k)] = cap;
            else
                q[static_cast<size_t>(k)] =
                    free_sum > 0.0 ? q[static_cast<size_t>(k)] / free_sum * free_mass : 0.0;
        }
    }
    return ProbabilityVector::from_scores(q);
}

}  // namespace isfed
