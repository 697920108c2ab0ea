#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "isfed/probabilities.hpp"
#include "isfed/problems.hpp"
#include "isfed/sampling.hpp"

namespace isfed {

// How the inclusion probabilities are chosen:
//   uniform  - fixed 1/K and 1/N_k (the FedAvg baseline),
//   optimal  - closed-form optima evaluated once at the minimizer,
//   plugin   - closed-form optima re-evaluated at the current iterate,
//   adaptive - running estimates updated from sampled gradients only.
enum class Scheme { uniform, optimal, plugin, adaptive };

struct FederationConfig {
    int participants = 1;          // L agents per iteration
    std::vector<int> epochs;       // E_k, one per agent
    std::vector<int> batch_sizes;  // B_k, one per agent
    double step_size = 0.01;       // mu
    int iterations = 100;
    Scheme scheme = Scheme::uniform;
    Replacement replacement = Replacement::without_replacement;
    std::uint64_t seed = 0;
    double probability_floor = 1e-6;  // clamp before use in importance weights
    bool record_gradient_noise = false;  // fill IterationRecord::gradient_noise

    void validate(const ProblemInstance& instance) const;
};

struct IterationRecord {
    Eigen::VectorXd iterate;  // w_i
    SampleDraw participants;  // L_i
    double msd;               // ||w_i - w_opt||^2, NaN when no reference model
    std::optional<Eigen::VectorXd> gradient_noise;  // realized s_i, when recorded
};

struct TrainOutput {
    std::vector<IterationRecord> records;
    ProbabilitySchedule final_probabilities;  // schedule in force after the last iteration
};

// One agent's local run: E_k epochs of HT-reweighted mini-batch steps
//   g = (1/B_k) sum_b grad Q(w; x_b) / (N_k p_b),   w <- w - mu g / (E_k K p_k).
struct LocalRunResult {
    Eigen::VectorXd final_iterate;               // w_{k, E_k}
    Eigen::VectorXd start_gradient_estimate;     // HT estimate of grad P_k at w_start
    std::vector<SampleDraw> batches;             // one draw per epoch
    std::vector<Eigen::VectorXd> epoch_starts;   // w_{k, e-1}; filled when tracing
};

LocalRunResult local_run(const ProblemInstance& instance, int agent,
                         const Eigen::VectorXd& w_start, const FederationConfig& config,
                         double agent_prob, const ProbabilityVector& data_probs, Rng& rng,
                         bool record_trace = false);

// The HT estimator of grad P_k over explicit epoch draws, all gradients
// evaluated at w:
//   (1/(E_k B_k)) sum_e sum_b grad Q(w; x_b) / (N_k p_b).
Eigen::VectorXd ht_local_gradient_estimate(const ProblemInstance& instance, int agent,
                                           const Eigen::VectorXd& w,
                                           const std::vector<SampleDraw>& batches,
                                           const ProbabilityVector& data_probs);

// Mutable loop state; iterate() advances it by one federated iteration.
struct TrainState {
    Eigen::VectorXd w;
    ProbabilitySchedule schedule;              // schedule in force (uniform/optimal fixed)
    std::optional<AdaptiveState> adaptive;     // present for Scheme::adaptive
    int iteration = 0;

    // Floored/capped vectors cached for the fixed schedules.
    bool schedule_fixed = false;
    ProbabilityVector effective_agents;
    std::vector<ProbabilityVector> effective_data;
};

TrainState initial_state(const ProblemInstance& instance, const FederationConfig& config,
                         const Eigen::VectorXd* w_reference = nullptr);

// Runs one iteration: draws L_i, runs each participant locally from the
// shared iterate, averages the L results with equal weights, and (adaptive
// scheme) applies the probability updates from this iteration's gradients.
IterationRecord iterate(const ProblemInstance& instance, TrainState& state,
                        const FederationConfig& config, const Eigen::VectorXd* w_opt = nullptr);

// Full training loop from w_0 = 0. w_opt, when given, fills per-iteration
// MSD. w_reference, when given, seeds the optimal schedule without
// recomputing the minimizer (defaults to w_opt, then to an internal solve).
TrainOutput train(const ProblemInstance& instance, const FederationConfig& config,
                  const Eigen::VectorXd* w_opt = nullptr,
                  const Eigen::VectorXd* w_reference = nullptr);

// Realized gradient error (the deviation of the combined HT estimate from the
// true global gradient at fixed w):
//   s = (1/L) sum_l htP_l(w) / (K p_l) - (1/K) sum_k grad P_k(w),
// with batch_plan[slot] holding the epoch draws of each participant.
Eigen::VectorXd gradient_noise_sample(const ProblemInstance& instance, const Eigen::VectorXd& w,
                                      const SampleDraw& participants,
                                      const ProbabilitySchedule& probs,
                                      const std::vector<std::vector<SampleDraw>>& batch_plan,
                                      const FederationConfig& config);

// Draws participants and batches per the configured scheme and evaluates the
// realized gradient error at w.
Eigen::VectorXd draw_gradient_noise(const ProblemInstance& instance, const Eigen::VectorXd& w,
                                    const ProbabilitySchedule& probs,
                                    const FederationConfig& config, Rng& rng);

// Realized incremental error from recorded local traces (the deviation caused
// by evaluating gradients at intermediate epoch iterates instead of w_prev).
Eigen::VectorXd incremental_noise_sample(const ProblemInstance& instance,
                                         const Eigen::VectorXd& w_prev,
                                         const SampleDraw& participants,
                                         const std::vector<LocalRunResult>& runs,
                                         const ProbabilitySchedule& probs,
                                         const FederationConfig& config);

// Floored (and, without replacement, capped) vectors actually handed to the
// samplers and importance weights.
ProbabilityVector effective_agent_probabilities(const ProbabilityVector& stored,
                                                const FederationConfig& config);
ProbabilityVector effective_data_probabilities(const ProbabilityVector& stored, int batch,
                                               const FederationConfig& config);

}  // namespace isfed
