#include "isfed/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "isfed/estimator.hpp"
#include "isfed/probabilities.hpp"
#include "isfed/probability_vector.hpp"
#include "isfed/rng.hpp"
#include "isfed/sampling.hpp"

namespace isfed {

namespace {

// ---------------------------------------------------------------------------
// Outcome enumeration. These oracles list every possible draw of a scheme
// with its probability, independently of the subset-DP and closed-form code
// they validate.
// ---------------------------------------------------------------------------

struct Outcome {
    std::vector<int> indices;
    double probability;
};

// All N^B ordered tuples of i.i.d. draws.
std::vector<Outcome> enumerate_with_replacement(const std::vector<double>& p, int batch) {
    const int n = static_cast<int>(p.size());
    std::vector<Outcome> outcomes;
    std::vector<int> tuple(static_cast<size_t>(batch), 0);
    for (;;) {
        double prob = 1.0;
        for (int idx : tuple) prob *= p[static_cast<size_t>(idx)];
        if (prob > 0.0) outcomes.push_back({tuple, prob});
        int pos = batch - 1;
        while (pos >= 0 && tuple[static_cast<size_t>(pos)] == n - 1)
            tuple[static_cast<size_t>(pos--)] = 0;
        if (pos < 0) break;
        ++tuple[static_cast<size_t>(pos)];
    }
    return outcomes;
}

// All ordered tuples of distinct indices, drawn with renormalized working
// probabilities (the textbook draw-by-draw scheme).
std::vector<Outcome> enumerate_sequential(const std::vector<double>& p, int batch) {
    std::vector<Outcome> outcomes;
    std::vector<int> prefix;
    std::vector<bool> used(p.size(), false);
    std::function<void(double, double)> recurse = [&](double prob, double used_mass) {
        if (static_cast<int>(prefix.size()) == batch) {
            outcomes.push_back({prefix, prob});
            return;
        }
        for (size_t k = 0; k < p.size(); ++k) {
            if (used[k] || p[k] == 0.0) continue;
            used[k] = true;
            prefix.push_back(static_cast<int>(k));
            recurse(prob * p[k] / (1.0 - used_mass), used_mass + p[k]);
            prefix.pop_back();
            used[k] = false;
        }
    };
    recurse(1.0, 0.0);
    return outcomes;
}

// The systematic scheme in canonical order: the selected set is piecewise
// constant in the variate d, with breakpoints at the fractional parts of the
// progressive totals. Each piece is one outcome weighted by its length.
std::vector<Outcome> enumerate_systematic(const std::vector<double>& p, int take) {
    const int n = static_cast<int>(p.size());
    std::vector<double> breakpoints{0.0, 1.0};
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        acc += take * p[static_cast<size_t>(k)];
        double frac = acc - std::floor(acc);
        if (frac > 0.0 && frac < 1.0) breakpoints.push_back(frac);
    }
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

    ProbabilityVector probs = ProbabilityVector::validated(p);
    std::vector<Outcome> outcomes;
    for (size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        double lo = breakpoints[i], hi = breakpoints[i + 1];
        SampleDraw draw = systematic_sample_ordered(probs, take, 0.5 * (lo + hi));
        outcomes.push_back({draw.indices, hi - lo});
    }
    return outcomes;
}

// ---------------------------------------------------------------------------
// Estimator-moment comparison on one instance.
// ---------------------------------------------------------------------------

struct Instance {
    std::vector<double> working;           // sampling/working probabilities
    std::vector<Eigen::VectorXd> means;    // element means
    std::vector<double> variances;         // element variances
};

Instance random_instance(int n, int dim, bool with_variances, Rng& rng) {
    Instance inst;
    inst.working.resize(static_cast<size_t>(n));
    double sum = 0.0;
    for (double& w : inst.working) {
        w = 0.2 + rng.uniform();  // bounded away from zero
        sum += w;
    }
    for (double& w : inst.working) w /= sum;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd mean(dim);
        for (int j = 0; j < dim; ++j) mean[j] = 2.0 * rng.uniform() - 1.0;
        inst.means.push_back(mean);
        inst.variances.push_back(with_variances ? rng.uniform() : 0.0);
    }
    return inst;
}

Eigen::VectorXd population_mean(const Instance& inst) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(inst.means.front().size());
    for (const Eigen::VectorXd& m : inst.means) mean += m;
    return mean / static_cast<double>(inst.means.size());
}

// Expectation and variance of the HT estimator over enumerated outcomes.
// Element randomness enters analytically: per drawn element, an independent
// realization with the stored mean and variance (with replacement resamples
// the element on every draw).
void enumerate_moments(const Instance& inst, const std::vector<Outcome>& outcomes,
                       const ProbabilityVector& inclusion_probs, int batch,
                       Eigen::VectorXd& expectation, double& variance) {
    const int n = static_cast<int>(inst.means.size());
    const Eigen::VectorXd mean = population_mean(inst);
    expectation = Eigen::VectorXd::Zero(mean.size());
    variance = 0.0;
    for (const Outcome& outcome : outcomes) {
        SampleDraw draw{outcome.indices, Replacement::with_replacement};
        Eigen::VectorXd estimate = ht_estimate(inst.means, inclusion_probs, draw);
        expectation += outcome.probability * estimate;
        double noise = 0.0;
        for (int idx : outcome.indices) {
            double weight = 1.0 / (batch * n * inclusion_probs[idx]);
            noise += weight * weight * inst.variances[static_cast<size_t>(idx)];
        }
        variance += outcome.probability * ((estimate - mean).squaredNorm() + noise);
    }
}

std::string check_instance(const Instance& inst, int batch, const std::string& scheme,
                           double tol) {
    const int n = static_cast<int>(inst.means.size());
    ProbabilityVector working = ProbabilityVector::validated(inst.working);
    const Eigen::VectorXd mean = population_mean(inst);

    std::vector<Outcome> outcomes;
    ProbabilityVector inclusion = working;  // normalized inclusion probabilities
    Eigen::MatrixXd pair;
    if (scheme == "with") {
        outcomes = enumerate_with_replacement(inst.working, batch);
    } else if (scheme == "sequential") {
        outcomes = enumerate_sequential(inst.working, batch);
        std::vector<double> incl = exact_inclusion_probabilities(working, batch,
                                                                 InclusionScheme::sequential);
        for (double& q : incl) q /= batch;
        inclusion = ProbabilityVector::validated(incl);
        pair = sequential_pair_inclusion(working, batch);
    } else {
        ProbabilityVector feasible = cap_inclusion_probabilities(working, batch);
        working = feasible;
        inclusion = feasible;
        outcomes = enumerate_systematic(feasible.entries(), batch);
        pair = systematic_pair_inclusion(feasible, batch);
    }

    Eigen::VectorXd expectation;
    double enumerated_variance = 0.0;
    enumerate_moments(inst, outcomes, inclusion, batch, expectation, enumerated_variance);

    std::ostringstream detail;
    double bias = (expectation - mean).norm();
    if (bias > tol) {
        detail << scheme << " N=" << n << " B=" << batch << ": estimator bias " << bias;
        return detail.str();
    }

    WeightedSampleSet set{inst.means, inst.means, inst.variances};
    double formula;
    if (scheme == "with") {
        formula = ht_variance_with_replacement(set, inclusion, batch);
    } else {
        WithoutReplacementVariance v =
            ht_variance_without_replacement(set, inclusion, batch, pair);
        formula = v.exact;
        if (v.jensen_bound < v.exact - tol) {
            detail << scheme << " N=" << n << " B=" << batch << ": Jensen bound "
                   << v.jensen_bound << " below exact variance " << v.exact;
            return detail.str();
        }
    }
    if (std::abs(formula - enumerated_variance) > tol * std::max(1.0, enumerated_variance)) {
        detail << scheme << " N=" << n << " B=" << batch << ": variance formula " << formula
               << " vs enumeration " << enumerated_variance;
        return detail.str();
    }
    return "";
}

// ---------------------------------------------------------------------------
// Simplex grid search.
// ---------------------------------------------------------------------------

void for_each_simplex_grid_point(int dim, int resolution,
                                 const std::function<void(const std::vector<double>&)>& fn) {
    std::vector<int> counts(static_cast<size_t>(dim), 0);
    std::vector<double> point(static_cast<size_t>(dim), 0.0);
    std::function<void(int, int)> recurse = [&](int position, int remaining) {
        if (position == dim - 1) {
            counts[static_cast<size_t>(position)] = remaining;
            for (int j = 0; j < dim; ++j)
                point[static_cast<size_t>(j)] =
                    static_cast<double>(counts[static_cast<size_t>(j)]) / resolution;
            fn(point);
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            counts[static_cast<size_t>(position)] = c;
            recurse(position + 1, remaining - c);
        }
    };
    recurse(0, resolution);
}

}  // namespace

CheckResult check_estimator_enumeration(std::uint64_t seed, int instances) {
    Rng rng(derive_seed(seed, 0xE57));
    const double tol = 1e-10;
    long combos = 0;
    for (int n = 2; n <= 6; ++n) {
        for (int batch = 1; batch <= std::min(3, n); ++batch) {
            for (int i = 0; i < instances; ++i) {
                Instance inst = random_instance(n, 2, i % 2 == 0, rng);
                for (const char* scheme : {"with", "sequential", "systematic"}) {
                    std::string failure = check_instance(inst, batch, scheme, tol);
                    if (!failure.empty())
                        return {"estimator-enumeration", false, failure};
                    ++combos;
                }
            }
        }
    }
    std::ostringstream detail;
    detail << combos << " scheme/instance combinations matched to 1e-10";
    return {"estimator-enumeration", true, detail.str()};
}

CheckResult check_inclusion_probabilities(std::uint64_t seed, long trials) {
    std::ostringstream detail;

    // Hand-enumerated example: working probabilities [1/3,1/6,1/3,1/6], two
    // draws without replacement; P(0 included) = 19/30.
    ProbabilityVector example =
        ProbabilityVector::validated({1.0 / 3, 1.0 / 6, 1.0 / 3, 1.0 / 6});
    std::vector<double> incl =
        exact_inclusion_probabilities(example, 2, InclusionScheme::sequential);
    const double expected[4] = {19.0 / 30, 11.0 / 30, 19.0 / 30, 11.0 / 30};
    for (int k = 0; k < 4; ++k)
        if (std::abs(incl[static_cast<size_t>(k)] - expected[k]) > 1e-12)
            return {"inclusion-probabilities", false, "sequential example mismatch"};

    // Sum-to-B over random instances, both schemes.
    Rng rng(derive_seed(seed, 0x1DC));
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + rng.uniform_int(6);
        std::vector<double> raw(static_cast<size_t>(n));
        double sum = 0.0;
        for (double& r : raw) {
            r = 0.05 + rng.uniform();
            sum += r;
        }
        for (double& r : raw) r /= sum;
        ProbabilityVector p = ProbabilityVector::validated(raw);
        int batch = 1 + rng.uniform_int(n);
        std::vector<double> seq = exact_inclusion_probabilities(p, batch,
                                                                InclusionScheme::sequential);
        double seq_sum = 0.0;
        for (double q : seq) seq_sum += q;
        if (std::abs(seq_sum - batch) > 1e-10)
            return {"inclusion-probabilities", false, "sequential probabilities do not sum to B"};
        ProbabilityVector feasible = cap_inclusion_probabilities(p, batch);
        std::vector<double> sys = exact_inclusion_probabilities(feasible, batch,
                                                                InclusionScheme::systematic);
        double sys_sum = 0.0;
        for (double q : sys) sys_sum += q;
        if (std::abs(sys_sum - batch) > 1e-10)
            return {"inclusion-probabilities", false, "systematic probabilities do not sum to B"};
    }

    // Systematic closed form and the direct interval-rule example.
    ProbabilityVector skewed = ProbabilityVector::validated({0.5, 0.25, 0.125, 0.125});
    std::vector<double> closed =
        exact_inclusion_probabilities(skewed, 2, InclusionScheme::systematic);
    const double expected_closed[4] = {1.0, 0.5, 0.25, 0.25};
    for (int k = 0; k < 4; ++k)
        if (std::abs(closed[static_cast<size_t>(k)] - expected_closed[k]) > 1e-12)
            return {"inclusion-probabilities", false, "systematic closed form mismatch"};
    SampleDraw interval = systematic_sample_ordered(skewed, 2, 0.3);
    if (interval.indices != std::vector<int>{0, 1})
        return {"inclusion-probabilities", false, "interval rule selected wrong indices"};

    // Monte-Carlo inclusion frequencies of the randomized systematic sampler.
    Rng mc(derive_seed(seed, 0x3C0));
    const int n = 8, take = 3;
    std::vector<double> raw(static_cast<size_t>(n));
    double sum = 0.0;
    for (double& r : raw) {
        r = 0.05 + mc.uniform();
        sum += r;
    }
    for (double& r : raw) r /= sum;
    ProbabilityVector p = cap_inclusion_probabilities(ProbabilityVector::validated(raw), take);
    std::vector<long> hits(static_cast<size_t>(n), 0);
    for (long t = 0; t < trials; ++t) {
        SampleDraw draw = systematic_sample_without_replacement(p, take, mc);
        for (int idx : draw.indices) ++hits[static_cast<size_t>(idx)];
    }
    for (int k = 0; k < n; ++k) {
        double target = std::min(take * p[k], 1.0);
        double freq = static_cast<double>(hits[static_cast<size_t>(k)]) / trials;
        double se = std::sqrt(std::max(target * (1.0 - target), 1e-12) / trials);
        if (std::abs(freq - target) > 3.0 * se + 1e-9) {
            detail << "index " << k << ": frequency " << freq << " vs target " << target
                   << " (3 SE = " << 3.0 * se << ")";
            return {"inclusion-probabilities", false, detail.str()};
        }
    }

    detail << "sequential example, sum-to-B, closed form and " << trials
           << "-trial Monte-Carlo marginals all within tolerance";
    return {"inclusion-probabilities", true, detail.str()};
}

CheckResult check_probability_optimality(std::uint64_t seed, int instances, int resolution) {
    Rng rng(derive_seed(seed, 0x097));
    std::ostringstream detail;
    for (int dim = 2; dim <= 4; ++dim) {
        for (int i = 0; i < instances; ++i) {
            // Lemma-6-style objective: sum_n g_n^2 / p_n.
            std::vector<double> norms(static_cast<size_t>(dim));
            for (double& g : norms) g = 0.2 + rng.uniform();
            ProbabilityVector closed = optimal_data_probabilities(norms);
            auto data_objective = [&](const std::vector<double>& p) {
                double total = 0.0;
                for (int k = 0; k < dim; ++k) {
                    if (p[static_cast<size_t>(k)] <= 0.0) return std::numeric_limits<double>::infinity();
                    total += norms[static_cast<size_t>(k)] * norms[static_cast<size_t>(k)] /
                             p[static_cast<size_t>(k)];
                }
                return total;
            };
            double grid_min = std::numeric_limits<double>::infinity();
            for_each_simplex_grid_point(dim, resolution, [&](const std::vector<double>& p) {
                grid_min = std::min(grid_min, data_objective(p));
            });
            double at_closed = data_objective(closed.entries());
            if (at_closed > grid_min * (1.0 + 1e-9)) {
                detail << "data objective: grid " << grid_min << " beats closed form "
                       << at_closed;
                return {"probability-optimality", false, detail.str()};
            }

            // Lemma-7-style objective: sum_k (sigma_k^2 + alpha_k g_k^2) / p_k.
            std::vector<double> sigma(static_cast<size_t>(dim)), grad(static_cast<size_t>(dim)),
                alpha(static_cast<size_t>(dim));
            for (int k = 0; k < dim; ++k) {
                sigma[static_cast<size_t>(k)] = rng.uniform();
                grad[static_cast<size_t>(k)] = 0.2 + rng.uniform();
                alpha[static_cast<size_t>(k)] = 3.0 + 6.0 * rng.uniform();
            }
            ProbabilityVector agent_closed = optimal_agent_probabilities(sigma, grad, alpha);
            auto agent_objective = [&](const std::vector<double>& p) {
                double total = 0.0;
                for (int k = 0; k < dim; ++k) {
                    if (p[static_cast<size_t>(k)] <= 0.0) return std::numeric_limits<double>::infinity();
                    total += (sigma[static_cast<size_t>(k)] +
                              alpha[static_cast<size_t>(k)] * grad[static_cast<size_t>(k)] *
                                  grad[static_cast<size_t>(k)]) /
                             p[static_cast<size_t>(k)];
                }
                return total;
            };
            grid_min = std::numeric_limits<double>::infinity();
            for_each_simplex_grid_point(dim, resolution, [&](const std::vector<double>& p) {
                grid_min = std::min(grid_min, agent_objective(p));
            });
            at_closed = agent_objective(agent_closed.entries());
            if (at_closed > grid_min * (1.0 + 1e-9)) {
                detail << "agent objective: grid " << grid_min << " beats closed form "
                       << at_closed;
                return {"probability-optimality", false, detail.str()};
            }
        }
    }
    detail << "closed forms at or below every grid point (dims 2-4, resolution 1/" << resolution
           << ")";
    return {"probability-optimality", true, detail.str()};
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
    return {check_estimator_enumeration(seed), check_inclusion_probabilities(seed),
            check_probability_optimality(seed)};
}

}  // namespace isfed
