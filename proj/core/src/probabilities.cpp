#include "isfed/probabilities.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "isfed/errors.hpp"

namespace isfed {

ProbabilityVector optimal_data_probabilities(const std::vector<double>& gradient_norms) {
    return ProbabilityVector::from_scores(gradient_norms);
}

double epoch_batch_alpha(int epochs, int batch) {
    return 3.0 + 6.0 / (static_cast<double>(epochs) * batch);
}

ProbabilityVector optimal_agent_probabilities(const std::vector<double>& sigma_sk2,
                                              const std::vector<double>& grad_norms_at_opt,
                                              const std::vector<double>& alpha_k) {
    if (sigma_sk2.size() != grad_norms_at_opt.size() || sigma_sk2.size() != alpha_k.size())
        throw DimensionMismatchError("per-agent lists must share length");
    std::vector<double> scores(sigma_sk2.size());
    for (size_t k = 0; k < scores.size(); ++k)
        scores[k] = std::sqrt(sigma_sk2[k] +
                              alpha_k[k] * grad_norms_at_opt[k] * grad_norms_at_opt[k]);
    return ProbabilityVector::from_scores(scores);
}

double data_variability(const ProblemInstance& instance, int agent,
                        const ProbabilityVector& data_probs, const Eigen::VectorXd& w,
                        int epochs, int batch) {
    const Eigen::VectorXd norms = sample_gradient_norms(instance, agent, w);
    const int count = static_cast<int>(norms.size());
    if (data_probs.size() != count) throw DimensionMismatchError("data probability length");
    double sum = 0.0;
    for (int n = 0; n < count; ++n) {
        if (norms[n] == 0.0) continue;
        if (data_probs[n] <= 0.0)
            throw ZeroProbabilityDrawnError("zero probability on sample with non-zero gradient");
        sum += norms[n] * norms[n] / data_probs[n];
    }
    return 6.0 * sum / (static_cast<double>(epochs) * batch * count * count);
}

ProbabilitySchedule schedule_at(const ProblemInstance& instance, const Eigen::VectorXd& w_ref,
                                std::span<const int> epochs, std::span<const int> batches) {
    const int agents = instance.agent_count();
    std::vector<ProbabilityVector> data;
    data.reserve(static_cast<size_t>(agents));
    std::vector<double> sigma(static_cast<size_t>(agents));
    std::vector<double> grad_norms(static_cast<size_t>(agents));
    std::vector<double> alpha(static_cast<size_t>(agents));
    for (int k = 0; k < agents; ++k) {
        const Eigen::VectorXd norms = sample_gradient_norms(instance, k, w_ref);
        std::vector<double> scores(norms.data(), norms.data() + norms.size());
        data.push_back(ProbabilityVector::from_scores(scores));
        // With p_n proportional to the norms, sum_n ||g_n||^2 / p_n collapses
        // to (sum_n ||g_n||)^2.
        const double norm_sum = norms.sum();
        const double count = instance.samples(k);
        sigma[static_cast<size_t>(k)] = 6.0 * norm_sum * norm_sum /
                                        (static_cast<double>(epochs[k]) * batches[k] * count * count);
        grad_norms[static_cast<size_t>(k)] = local_gradient(instance, k, w_ref).norm();
        alpha[static_cast<size_t>(k)] = epoch_batch_alpha(epochs[k], batches[k]);
    }
    return ProbabilitySchedule{optimal_agent_probabilities(sigma, grad_norms, alpha),
                               std::move(data)};
}

ProbabilitySchedule uniform_schedule(const ProblemInstance& instance) {
    std::vector<ProbabilityVector> data;
    data.reserve(static_cast<size_t>(instance.agent_count()));
    for (int k = 0; k < instance.agent_count(); ++k)
        data.push_back(ProbabilityVector::uniform(instance.samples(k)));
    return ProbabilitySchedule{ProbabilityVector::uniform(instance.agent_count()),
                               std::move(data)};
}

AdaptiveState initial_adaptive_state(const ProblemInstance& instance, std::span<const int> epochs,
                                     std::span<const int> batches) {
    AdaptiveState state{ProbabilityVector::uniform(instance.agent_count()), {}, {}, {}};
    const size_t agents = static_cast<size_t>(instance.agent_count());
    state.data_probs.reserve(agents);
    state.sigma_sk2.assign(agents, 0.0);
    state.alpha.resize(agents);
    for (int k = 0; k < instance.agent_count(); ++k) {
        state.data_probs.push_back(ProbabilityVector::uniform(instance.samples(k)));
        state.alpha[static_cast<size_t>(k)] = epoch_batch_alpha(epochs[k], batches[k]);
    }
    return state;
}

namespace {

// Shared renormalization for partial updates: entries listed in `touched`
// are reassigned proportionally to `scores`, scaled by the mass those entries
// held before (equivalently, 1 minus the untouched mass). Untouched entries
// are not modified at all, and the reassigned shares are complement-corrected
// so the total mass of the vector is preserved exactly.
ProbabilityVector partial_update(const ProbabilityVector& current, const std::vector<int>& touched,
                                 const std::vector<double>& scores) {
    std::vector<double> entries(current.entries());
    double remaining = 0.0;
    for (int idx : touched) {
        if (idx < 0 || idx >= current.size())
            throw IndexOutOfRangeError("update index " + std::to_string(idx));
        remaining += entries[static_cast<size_t>(idx)];
    }
    if (remaining <= 0.0 && touched.size() < entries.size())
        throw MassOverflowError("sampled entries hold no probability mass");

    double score_sum = 0.0;
    size_t anchor = 0;  // largest score absorbs the rounding correction
    for (size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < 0.0 || std::isnan(scores[i]))
            throw NegativeEntryError("negative update score");
        score_sum += scores[i];
        if (scores[i] > scores[anchor]) anchor = i;
    }
    const double share = remaining / static_cast<double>(touched.size());
    double assigned = 0.0;
    for (size_t i = 0; i < touched.size(); ++i) {
        if (i == anchor) continue;
        // All-zero scores degenerate to a uniform split of the remaining mass.
        double value = score_sum > 0.0 ? scores[i] / score_sum * remaining : share;
        entries[static_cast<size_t>(touched[i])] = value;
        assigned += value;
    }
    entries[static_cast<size_t>(touched[anchor])] = std::max(remaining - assigned, 0.0);
    return ProbabilityVector::unchecked(std::move(entries));
}

// Deduplicates a draw (with-replacement draws may repeat) keeping first-seen
// order, and gathers the matching scores.
void dedupe(const SampleDraw& draw, const std::vector<double>& raw_scores,
            std::vector<int>& indices, std::vector<double>& scores) {
    std::set<int> seen;
    for (size_t i = 0; i < draw.indices.size(); ++i) {
        int idx = draw.indices[i];
        if (seen.insert(idx).second) {
            indices.push_back(idx);
            scores.push_back(raw_scores[i]);
        }
    }
}

}  // namespace

void update_agent_probabilities(AdaptiveState& state, const SampleDraw& participants,
                                const std::vector<double>& stochastic_grad_norms) {
    if (participants.indices.size() != stochastic_grad_norms.size())
        throw DimensionMismatchError("one gradient norm per participant required");
    std::vector<int> indices;
    std::vector<double> norms;
    dedupe(participants, stochastic_grad_norms, indices, norms);
    std::vector<double> scores(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        const size_t k = static_cast<size_t>(indices[i]);
        scores[i] = std::sqrt(state.sigma_sk2[k] + state.alpha[k] * norms[i] * norms[i]);
    }
    state.agent_probs = partial_update(state.agent_probs, indices, scores);
}

void update_data_probabilities(AdaptiveState& state, int agent, const SampleDraw& batch,
                               const std::vector<double>& sample_grad_norms) {
    if (agent < 0 || agent >= static_cast<int>(state.data_probs.size()))
        throw IndexOutOfRangeError("agent " + std::to_string(agent));
    if (batch.indices.size() != sample_grad_norms.size())
        throw DimensionMismatchError("one gradient norm per sampled point required");
    std::vector<int> indices;
    std::vector<double> scores;
    dedupe(batch, sample_grad_norms, indices, scores);
    ProbabilityVector& probs = state.data_probs[static_cast<size_t>(agent)];
    probs = partial_update(probs, indices, scores);
}

}  // namespace isfed
