#include "isfed/federated.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "isfed/errors.hpp"

namespace isfed {

namespace {

// Stream labels; every (seed, label, iteration, slot) tuple is independent.
constexpr std::uint64_t kAgentStream = 0xA6E7;
constexpr std::uint64_t kDataStream = 0xDA7A;

SampleDraw draw_batch(const ProbabilityVector& p, int batch, Replacement mode, Rng& rng) {
    if (mode == Replacement::with_replacement) return sample_with_replacement(p, batch, rng);
    return systematic_sample_without_replacement(p, batch, rng);
}

// sigma_{s,k}^2 in its collapsed norm-proportional form: with data
// probabilities proportional to the gradient norms (what the adaptive data
// vector converges to), sum_n ||g_n||^2 / p_n = (sum_n ||g_n||)^2. Evaluating
// the constant this way keeps the agent scores free of the tracked data
// vector's staleness noise.
double collapsed_variability(const Eigen::VectorXd& norms, int epochs, int batch) {
    const double count = norms.size();
    const double sum = norms.sum();
    return 6.0 * sum * sum / (static_cast<double>(epochs) * batch * count * count);
}

}  // namespace

void FederationConfig::validate(const ProblemInstance& instance) const {
    const int agents = instance.agent_count();
    if (participants < 1 || participants > agents)
        throw ConfigError("participants must lie in [1, K]");
    if (static_cast<int>(epochs.size()) != agents ||
        static_cast<int>(batch_sizes.size()) != agents)
        throw ConfigError("epochs and batch_sizes must have one entry per agent");
    for (int k = 0; k < agents; ++k) {
        if (epochs[static_cast<size_t>(k)] < 1) throw ConfigError("epochs must be >= 1");
        if (batch_sizes[static_cast<size_t>(k)] < 1 ||
            batch_sizes[static_cast<size_t>(k)] > instance.samples(k))
            throw ConfigError("batch size must lie in [1, N_k]");
    }
    if (step_size <= 0.0) throw ConfigError("step size must be positive");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
}

ProbabilityVector effective_agent_probabilities(const ProbabilityVector& stored,
                                                const FederationConfig& config) {
    ProbabilityVector p =
        config.probability_floor > 0.0 ? stored.floored(config.probability_floor) : stored;
    if (config.replacement == Replacement::without_replacement)
        p = cap_inclusion_probabilities(p, config.participants);
    return p;
}

ProbabilityVector effective_data_probabilities(const ProbabilityVector& stored, int batch,
                                               const FederationConfig& config) {
    ProbabilityVector p =
        config.probability_floor > 0.0 ? stored.floored(config.probability_floor) : stored;
    if (config.replacement == Replacement::without_replacement)
        p = cap_inclusion_probabilities(p, batch);
    return p;
}

LocalRunResult local_run(const ProblemInstance& instance, int agent,
                         const Eigen::VectorXd& w_start, const FederationConfig& config,
                         double agent_prob, const ProbabilityVector& data_probs, Rng& rng,
                         bool record_trace) {
    const int epochs = config.epochs[static_cast<size_t>(agent)];
    const int batch = config.batch_sizes[static_cast<size_t>(agent)];
    const int count = instance.samples(agent);
    const int total_agents = instance.agent_count();
    const double step = config.step_size / (epochs * total_agents * agent_prob);

    LocalRunResult result;
    result.batches.reserve(static_cast<size_t>(epochs));
    Eigen::VectorXd w = w_start;
    Eigen::VectorXd start_estimate = Eigen::VectorXd::Zero(w.size());
    Eigen::VectorXd g(w.size());
    for (int e = 0; e < epochs; ++e) {
        if (record_trace) result.epoch_starts.push_back(w);
        SampleDraw draw = draw_batch(data_probs, batch, config.replacement, rng);
        g.setZero();
        for (int idx : draw.indices) {
            const double weight = 1.0 / (count * data_probs[idx]);
            accumulate_sample_gradient(instance, agent, idx, w, weight, g);
            if (e > 0)
                accumulate_sample_gradient(instance, agent, idx, w_start, weight, start_estimate);
        }
        if (e == 0) start_estimate = g;  // epoch-1 gradients already sit at w_start
        w -= (step / batch) * g;
        result.batches.push_back(std::move(draw));
    }
    result.final_iterate = std::move(w);
    result.start_gradient_estimate = start_estimate / (static_cast<double>(epochs) * batch);
    return result;
}

Eigen::VectorXd ht_local_gradient_estimate(const ProblemInstance& instance, int agent,
                                           const Eigen::VectorXd& w,
                                           const std::vector<SampleDraw>& batches,
                                           const ProbabilityVector& data_probs) {
    const int count = instance.samples(agent);
    Eigen::VectorXd estimate = Eigen::VectorXd::Zero(w.size());
    long draws = 0;
    for (const SampleDraw& draw : batches) {
        for (int idx : draw.indices)
            accumulate_sample_gradient(instance, agent, idx, w, 1.0 / (count * data_probs[idx]),
                                       estimate);
        draws += draw.size();
    }
    return estimate / static_cast<double>(draws);
}

TrainState initial_state(const ProblemInstance& instance, const FederationConfig& config,
                         const Eigen::VectorXd* w_reference) {
    config.validate(instance);
    TrainState state{Eigen::VectorXd::Zero(instance.dim()), uniform_schedule(instance),
                     std::nullopt, 0};
    switch (config.scheme) {
        case Scheme::uniform:
            state.schedule_fixed = true;
            break;
        case Scheme::optimal: {
            Eigen::VectorXd w_opt =
                w_reference ? *w_reference : reference_minimizer(instance);
            state.schedule = schedule_at(instance, w_opt, config.epochs, config.batch_sizes);
            state.schedule_fixed = true;
            break;
        }
        case Scheme::plugin:
            // recomputed inside iterate(); uniform placeholder until then
            break;
        case Scheme::adaptive:
            state.adaptive =
                initial_adaptive_state(instance, config.epochs, config.batch_sizes);
            break;
    }
    if (state.schedule_fixed) {
        state.effective_agents = effective_agent_probabilities(state.schedule.agents, config);
        state.effective_data.reserve(static_cast<size_t>(instance.agent_count()));
        for (int k = 0; k < instance.agent_count(); ++k)
            state.effective_data.push_back(effective_data_probabilities(
                state.schedule.data[static_cast<size_t>(k)],
                config.batch_sizes[static_cast<size_t>(k)], config));
    }
    return state;
}

IterationRecord iterate(const ProblemInstance& instance, TrainState& state,
                        const FederationConfig& config, const Eigen::VectorXd* w_opt) {
    const int total_agents = instance.agent_count();
    const Eigen::VectorXd w_prev = state.w;
    ++state.iteration;

    if (config.scheme == Scheme::plugin)
        state.schedule = schedule_at(instance, w_prev, config.epochs, config.batch_sizes);
    else if (config.scheme == Scheme::adaptive)
        state.schedule =
            ProbabilitySchedule{state.adaptive->agent_probs, state.adaptive->data_probs};

    const ProbabilityVector agent_probs =
        state.schedule_fixed ? state.effective_agents
                             : effective_agent_probabilities(state.schedule.agents, config);

    Rng agent_rng(derive_seed(config.seed, kAgentStream, state.iteration));
    SampleDraw participants = config.replacement == Replacement::with_replacement
                                  ? sample_with_replacement(agent_probs, config.participants,
                                                            agent_rng)
                                  : systematic_sample_without_replacement(
                                        agent_probs, config.participants, agent_rng);

    // the schedule in force for this iteration's draws (the adaptive update
    // below replaces state.schedule before the record is assembled)
    std::optional<ProbabilitySchedule> sampling_schedule;
    if (config.record_gradient_noise) sampling_schedule = state.schedule;

    Eigen::VectorXd w_next = Eigen::VectorXd::Zero(instance.dim());
    std::vector<LocalRunResult> runs;
    runs.reserve(participants.indices.size());
    for (size_t slot = 0; slot < participants.indices.size(); ++slot) {
        const int agent = participants.indices[slot];
        const ProbabilityVector data_probs =
            state.schedule_fixed
                ? state.effective_data[static_cast<size_t>(agent)]
                : effective_data_probabilities(
                      state.schedule.data[static_cast<size_t>(agent)],
                      config.batch_sizes[static_cast<size_t>(agent)], config);
        Rng data_rng(derive_seed(config.seed, kDataStream, state.iteration, slot));
        runs.push_back(local_run(instance, agent, w_prev, config, agent_probs[agent], data_probs,
                                 data_rng, false));
        w_next += runs.back().final_iterate;
    }
    w_next /= static_cast<double>(participants.indices.size());

    if (config.scheme == Scheme::adaptive) {
        AdaptiveState& adaptive = *state.adaptive;
        // Data probabilities first (Eq.-style partial update on the union of
        // sampled indices), then the per-agent variability with the updated
        // vector, then the agent probabilities.
        std::set<int> seen;
        std::vector<double> agent_scores;
        agent_scores.reserve(participants.indices.size());
        for (size_t slot = 0; slot < participants.indices.size(); ++slot) {
            const int agent = participants.indices[slot];
            agent_scores.push_back(runs[slot].start_gradient_estimate.norm());
            if (!seen.insert(agent).second) continue;
            std::set<int> sampled;
            for (size_t s = slot; s < participants.indices.size(); ++s)
                if (participants.indices[s] == agent)
                    for (const SampleDraw& d : runs[s].batches)
                        sampled.insert(d.indices.begin(), d.indices.end());
            const Eigen::VectorXd norms = sample_gradient_norms(instance, agent, w_prev);
            SampleDraw touched;
            touched.replacement = Replacement::without_replacement;
            std::vector<double> scores;
            for (int idx : sampled) {
                touched.indices.push_back(idx);
                scores.push_back(norms[idx]);
            }
            try {
                update_data_probabilities(adaptive, agent, touched, scores);
            } catch (const MassOverflowError&) {
                adaptive.data_probs[static_cast<size_t>(agent)] =
                    ProbabilityVector::uniform(instance.samples(agent));
                update_data_probabilities(adaptive, agent, touched, scores);
            }
            adaptive.sigma_sk2[static_cast<size_t>(agent)] = collapsed_variability(
                norms, config.epochs[static_cast<size_t>(agent)],
                config.batch_sizes[static_cast<size_t>(agent)]);
        }
        try {
            update_agent_probabilities(adaptive, participants, agent_scores);
        } catch (const MassOverflowError&) {
            adaptive.agent_probs = ProbabilityVector::uniform(total_agents);
            update_agent_probabilities(adaptive, participants, agent_scores);
        }
        state.schedule = ProbabilitySchedule{adaptive.agent_probs, adaptive.data_probs};
    }

    state.w = w_next;
    IterationRecord record{std::move(w_next), std::move(participants),
                           std::numeric_limits<double>::quiet_NaN(), std::nullopt};
    if (w_opt) record.msd = (record.iterate - *w_opt).squaredNorm();
    if (config.record_gradient_noise) {
        std::vector<std::vector<SampleDraw>> batch_plan;
        batch_plan.reserve(runs.size());
        for (const LocalRunResult& run : runs) batch_plan.push_back(run.batches);
        record.gradient_noise = gradient_noise_sample(instance, w_prev, record.participants,
                                                      *sampling_schedule, batch_plan, config);
    }
    return record;
}

TrainOutput train(const ProblemInstance& instance, const FederationConfig& config,
                  const Eigen::VectorXd* w_opt, const Eigen::VectorXd* w_reference) {
    TrainState state = initial_state(instance, config, w_reference ? w_reference : w_opt);
    TrainOutput out;
    out.records.reserve(static_cast<size_t>(config.iterations));
    for (int i = 0; i < config.iterations; ++i)
        out.records.push_back(iterate(instance, state, config, w_opt));
    out.final_probabilities = std::move(state.schedule);
    return out;
}

Eigen::VectorXd gradient_noise_sample(const ProblemInstance& instance, const Eigen::VectorXd& w,
                                      const SampleDraw& participants,
                                      const ProbabilitySchedule& probs,
                                      const std::vector<std::vector<SampleDraw>>& batch_plan,
                                      const FederationConfig& config) {
    const int total_agents = instance.agent_count();
    const ProbabilityVector agent_probs = effective_agent_probabilities(probs.agents, config);
    Eigen::VectorXd combined = Eigen::VectorXd::Zero(instance.dim());
    for (size_t slot = 0; slot < participants.indices.size(); ++slot) {
        const int agent = participants.indices[slot];
        const ProbabilityVector data_probs = effective_data_probabilities(
            probs.data[static_cast<size_t>(agent)],
            config.batch_sizes[static_cast<size_t>(agent)], config);
        Eigen::VectorXd estimate =
            ht_local_gradient_estimate(instance, agent, w, batch_plan[slot], data_probs);
        combined += estimate / (total_agents * agent_probs[agent]);
    }
    combined /= static_cast<double>(participants.indices.size());
    return combined - global_gradient(instance, w);
}

Eigen::VectorXd draw_gradient_noise(const ProblemInstance& instance, const Eigen::VectorXd& w,
                                    const ProbabilitySchedule& probs,
                                    const FederationConfig& config, Rng& rng) {
    const ProbabilityVector agent_probs = effective_agent_probabilities(probs.agents, config);
    SampleDraw participants = config.replacement == Replacement::with_replacement
                                  ? sample_with_replacement(agent_probs, config.participants, rng)
                                  : systematic_sample_without_replacement(
                                        agent_probs, config.participants, rng);
    std::vector<std::vector<SampleDraw>> batch_plan;
    batch_plan.reserve(participants.indices.size());
    for (int agent : participants.indices) {
        const ProbabilityVector data_probs = effective_data_probabilities(
            probs.data[static_cast<size_t>(agent)],
            config.batch_sizes[static_cast<size_t>(agent)], config);
        std::vector<SampleDraw> epochs;
        for (int e = 0; e < config.epochs[static_cast<size_t>(agent)]; ++e)
            epochs.push_back(draw_batch(data_probs,
                                        config.batch_sizes[static_cast<size_t>(agent)],
                                        config.replacement, rng));
        batch_plan.push_back(std::move(epochs));
    }
    return gradient_noise_sample(instance, w, participants, probs, batch_plan, config);
}

Eigen::VectorXd incremental_noise_sample(const ProblemInstance& instance,
                                         const Eigen::VectorXd& w_prev,
                                         const SampleDraw& participants,
                                         const std::vector<LocalRunResult>& runs,
                                         const ProbabilitySchedule& probs,
                                         const FederationConfig& config) {
    const int total_agents = instance.agent_count();
    const ProbabilityVector agent_probs = effective_agent_probabilities(probs.agents, config);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(instance.dim());
    for (size_t slot = 0; slot < participants.indices.size(); ++slot) {
        const int agent = participants.indices[slot];
        const LocalRunResult& run = runs[slot];
        if (run.epoch_starts.size() != run.batches.size())
            throw IndexOutOfRangeError("local run was not traced");
        const int count = instance.samples(agent);
        const int epochs = config.epochs[static_cast<size_t>(agent)];
        const int batch = config.batch_sizes[static_cast<size_t>(agent)];
        const ProbabilityVector data_probs = effective_data_probabilities(
            probs.data[static_cast<size_t>(agent)], batch, config);
        Eigen::VectorXd inner = Eigen::VectorXd::Zero(instance.dim());
        Eigen::VectorXd at_epoch(instance.dim()), at_start(instance.dim());
        for (size_t e = 0; e < run.batches.size(); ++e) {
            for (int idx : run.batches[e].indices) {
                const double weight = 1.0 / (count * data_probs[idx]);
                // evaluate both gradients by the identical instruction
                // sequence and difference them elementwise, so identical
                // iterates (E_k = 1) cancel exactly
                at_epoch.setZero();
                at_start.setZero();
                accumulate_sample_gradient(instance, agent, idx, run.epoch_starts[e], weight,
                                           at_epoch);
                accumulate_sample_gradient(instance, agent, idx, w_prev, weight, at_start);
                inner += at_epoch - at_start;
            }
        }
        total += inner / (total_agents * agent_probs[agent] * epochs * batch);
    }
    return total / static_cast<double>(participants.indices.size());
}

}  // namespace isfed
