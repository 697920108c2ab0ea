#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "isfed/probability_vector.hpp"
#include "isfed/problems.hpp"
#include "isfed/sampling.hpp"

namespace isfed {

// Normalized inclusion probabilities for both sampling levels: one vector
// over agents and one per-agent vector over that agent's data.
struct ProbabilitySchedule {
    ProbabilityVector agents;
    std::vector<ProbabilityVector> data;
};

// Optimal local data probabilities: p_n proportional to the per-sample
// gradient norm at the reference point. All-zero norms fall back to uniform.
ProbabilityVector optimal_data_probabilities(const std::vector<double>& gradient_norms);

// alpha_k = 3 + 6/(E_k B_k).
double epoch_batch_alpha(int epochs, int batch);

// Optimal agent probabilities: p_k proportional to
// sqrt(sigma_sk2[k] + alpha_k[k] * grad_norms_at_opt[k]^2).
ProbabilityVector optimal_agent_probabilities(const std::vector<double>& sigma_sk2,
                                              const std::vector<double>& grad_norms_at_opt,
                                              const std::vector<double>& alpha_k);

// Data-variability constant sigma_{s,k}^2 of agent `agent` evaluated at w:
//   (6 / (E_k B_k N_k^2)) * sum_n ||grad Q(w; x_n)||^2 / p_n.
double data_variability(const ProblemInstance& instance, int agent,
                        const ProbabilityVector& data_probs, const Eigen::VectorXd& w,
                        int epochs, int batch);

// Full schedule from the closed-form optima evaluated at w_ref (w^o for the
// optimal schedule, the current iterate for the plug-in schedule). Data
// probabilities follow the gradient norms; sigma_{s,k}^2 is evaluated with
// those same data probabilities, which collapses to
// (6/(E_k B_k N_k^2)) (sum_n ||grad Q||)^2.
ProbabilitySchedule schedule_at(const ProblemInstance& instance, const Eigen::VectorXd& w_ref,
                                std::span<const int> epochs, std::span<const int> batches);

ProbabilitySchedule uniform_schedule(const ProblemInstance& instance);

// State of the running probability estimates maintained by the adaptive
// scheme. Only sampled entries are ever rewritten; the rest keep their
// stored values bit for bit.
struct AdaptiveState {
    ProbabilityVector agent_probs;
    std::vector<ProbabilityVector> data_probs;
    std::vector<double> sigma_sk2;  // latest per-agent data-variability estimates
    std::vector<double> alpha;      // alpha_k, fixed per run
};

AdaptiveState initial_adaptive_state(const ProblemInstance& instance, std::span<const int> epochs,
                                     std::span<const int> batches);

// Reassigns the participants' probabilities proportionally to
// sqrt(sigma_sk2 + alpha * norm^2), scaled by the mass the non-participants
// keep, so the vector stays on the simplex. Participants listed more than
// once (with-replacement draws) are deduplicated. Throws MassOverflowError
// when the participants hold no probability mass at all (the update is then
// undefined; the training loop restarts the vector from uniform).
void update_agent_probabilities(AdaptiveState& state, const SampleDraw& participants,
                                const std::vector<double>& stochastic_grad_norms);

// Same renormalization contract for one agent's data vector; scores are the
// raw per-sample gradient norms of the sampled points.
void update_data_probabilities(AdaptiveState& state, int agent, const SampleDraw& batch,
                               const std::vector<double>& sample_grad_norms);

}  // namespace isfed
