#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "isfed/analysis.hpp"
#include "isfed/config.hpp"
#include "isfed/federated.hpp"
#include "isfed/problems.hpp"

namespace isfed {

// A full experiment: one problem instance, several sampling schemes compared
// on it, repetitions averaged.
struct ExperimentSpec {
    ProblemKind kind = ProblemKind::regression;

    // regression generation
    int agents = 10;
    int samples_per_agent = 100;
    int dim = 2;
    double ridge = 0.001;
    std::string noise_profile = "loguniform";  // constant | loguniform | spike
    double noise_sigma2 = 0.01;
    double noise_sigma2_min = 1e-3;
    double noise_sigma2_max = 1.0;
    double noise_spike_fraction = 0.05;
    double noise_spike_sigma2 = 4.0;
    std::string noise_shape = "gaussian";  // gaussian | sign
    double feature_cov_min = 0.5;
    double feature_cov_max = 2.0;

    // classification ingestion
    std::string dataset;
    std::string test_dataset;
    int partition_min = 79;
    int partition_max = 688;

    // federation
    int participants = 6;
    int batch_min = 1, batch_max = 10;
    int epoch_min = 1, epoch_max = 5;
    double step_size = 0.01;
    int iterations = 0;  // 0 = plateau-detected horizon (regression only)
    int max_iterations = 2000;
    double probability_floor = 1e-6;
    std::string replacement_policy = "paper";  // paper | with | without

    // experiment
    std::vector<Scheme> schemes{Scheme::uniform, Scheme::optimal, Scheme::plugin,
                                Scheme::adaptive};
    int repetitions = 1;
    std::uint64_t master_seed = 1;
    std::string out_dir;
    int threads = 0;  // 0 = hardware concurrency
    bool emit_constants = true;
};

ExperimentSpec spec_from_config(const Config& config);
Scheme scheme_from_name(const std::string& name);
std::string scheme_name(Scheme scheme);

// Instantiates the problem: generated regression data, or a LIBSVM pool
// partitioned non-IID. test_set is filled for classification when a test
// file is configured.
ProblemInstance build_problem(const ExperimentSpec& spec, AgentDataset* test_set);

// Per-agent epoch/batch assignment drawn once per experiment (shared by all
// schemes and repetitions).
void draw_agent_plan(const ExperimentSpec& spec, const ProblemInstance& instance,
                     std::vector<int>& epochs, std::vector<int>& batches);

struct SchemeResult {
    Scheme scheme;
    bool classification = false;
    std::vector<std::vector<double>> per_repetition;  // [rep][iteration], linear MSD or error %
    std::vector<double> mean;                         // arithmetic mean over repetitions
    double agent_probability_distance = 0.0;          // ||p^o - p_hat||, adaptive only
    double data_probability_distance = 0.0;           // (1/K) sum_k ||p^o_k - p_hat_k||
};

struct MetricTrace {
    ProblemKind kind = ProblemKind::regression;
    int horizon = 0;
    std::vector<SchemeResult> schemes;
    std::vector<std::string> constants_csv_rows;  // preformatted scheme,name,agent,value
};

// Runs every scheme for `repetitions` seeded trainings over the shared
// instance; only the sampling randomness varies with the repetition. When
// spec.out_dir is set, finished schemes are flushed to CSV immediately so a
// failure still leaves partial results on disk.
MetricTrace run_experiment(const ExperimentSpec& spec);

double msd(const Eigen::VectorXd& w, const Eigen::VectorXd& w_opt);
double msd_db(double linear);  // 10 log10, clamped at -320 dB for zero

// Percentage of test samples with sign(u'w) != y; sign(0) counts as +1.
double testing_error(const Eigen::VectorXd& w, const AgentDataset& test_set);

// One CSV per scheme (iteration,msd_linear,msd_db or iteration,test_error_pct)
// plus constants.csv.
void emit_csv(const MetricTrace& trace, const std::string& directory);

// Steady-state level of a trace: mean of the last max(50, 10%) entries.
double steady_state(const std::vector<double>& series);

std::string format_double(double value);  // shortest round-trip decimal

}  // namespace isfed
