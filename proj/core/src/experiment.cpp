#include "isfed/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "isfed/errors.hpp"
#include "isfed/rng.hpp"

namespace isfed {

namespace {

constexpr std::uint64_t kInstanceStream = 0x1257;
constexpr std::uint64_t kPlanStream = 0x9147;
constexpr std::uint64_t kRepetitionStream = 0x4E57;

const std::vector<std::string> kKnownKeys = {
    "problem", "K", "Nk", "M", "rho", "noise_profile", "noise_sigma2", "noise_sigma2_min",
    "noise_sigma2_max", "noise_spike_fraction", "noise_spike_sigma2", "noise_shape",
    "feature_cov_min",
    "feature_cov_max", "dataset", "test_dataset", "partition_min", "partition_max", "L",
    "Bk_min", "Bk_max", "Ek_min", "Ek_max", "mu", "iterations", "max_iterations",
    "probability_floor", "replacement", "schemes", "repetitions", "seed", "out", "threads",
    "emit_constants"};

Replacement replacement_for(const ExperimentSpec& spec, Scheme scheme) {
    if (spec.replacement_policy == "with") return Replacement::with_replacement;
    if (spec.replacement_policy == "without") return Replacement::without_replacement;
    if (spec.replacement_policy != "paper")
        throw ConfigError("replacement must be paper, with or without");
    // The baseline samples uniformly with replacement; the importance-sampling
    // runs use the systematic without-replacement scheme.
    return scheme == Scheme::uniform ? Replacement::with_replacement
                                     : Replacement::without_replacement;
}

std::vector<double> noise_profile_variances(const ExperimentSpec& spec, Rng& rng) {
    std::vector<double> variances(static_cast<size_t>(spec.agents));
    if (spec.noise_profile == "constant") {
        std::fill(variances.begin(), variances.end(), spec.noise_sigma2);
    } else if (spec.noise_profile == "loguniform") {
        const double lo = std::log(spec.noise_sigma2_min), hi = std::log(spec.noise_sigma2_max);
        for (double& v : variances) v = std::exp(lo + (hi - lo) * rng.uniform());
    } else if (spec.noise_profile == "spike") {
        // exactly round(fraction * K) spiked agents at random positions
        std::fill(variances.begin(), variances.end(), spec.noise_sigma2);
        long spiked = std::lround(spec.noise_spike_fraction * spec.agents);
        std::vector<int> order(static_cast<size_t>(spec.agents));
        for (int k = 0; k < spec.agents; ++k) order[static_cast<size_t>(k)] = k;
        for (int k = spec.agents - 1; k > 0; --k)
            std::swap(order[static_cast<size_t>(k)],
                      order[static_cast<size_t>(rng.uniform_int(k + 1))]);
        for (long i = 0; i < spiked && i < spec.agents; ++i)
            variances[static_cast<size_t>(order[static_cast<size_t>(i)])] =
                spec.noise_spike_sigma2;
    } else {
        throw ConfigError("noise_profile must be constant, loguniform or spike");
    }
    return variances;
}

}  // namespace

Scheme scheme_from_name(const std::string& name) {
    if (name == "uniform") return Scheme::uniform;
    if (name == "optimal") return Scheme::optimal;
    if (name == "plugin") return Scheme::plugin;
    if (name == "adaptive") return Scheme::adaptive;
    throw ConfigError("unknown scheme '" + name + "'");
}

std::string scheme_name(Scheme scheme) {
    switch (scheme) {
        case Scheme::uniform: return "uniform";
        case Scheme::optimal: return "optimal";
        case Scheme::plugin: return "plugin";
        case Scheme::adaptive: return "adaptive";
    }
    return "unknown";
}

ExperimentSpec spec_from_config(const Config& config) {
    std::vector<std::string> unknown = config.unknown_keys(kKnownKeys);
    if (!unknown.empty()) throw ConfigError("unknown config key '" + unknown.front() + "'");

    ExperimentSpec spec;
    std::string problem = config.get_string("problem", "regression");
    if (problem == "regression")
        spec.kind = ProblemKind::regression;
    else if (problem == "logistic")
        spec.kind = ProblemKind::logistic;
    else
        throw ConfigError("problem must be regression or logistic");

    spec.agents = config.get_int("K", spec.agents);
    spec.samples_per_agent = config.get_int("Nk", spec.samples_per_agent);
    spec.dim = config.get_int("M", spec.dim);
    spec.ridge = config.get_double("rho", spec.ridge);
    spec.noise_profile = config.get_string("noise_profile", spec.noise_profile);
    spec.noise_sigma2 = config.get_double("noise_sigma2", spec.noise_sigma2);
    spec.noise_sigma2_min = config.get_double("noise_sigma2_min", spec.noise_sigma2_min);
    spec.noise_sigma2_max = config.get_double("noise_sigma2_max", spec.noise_sigma2_max);
    spec.noise_spike_fraction =
        config.get_double("noise_spike_fraction", spec.noise_spike_fraction);
    spec.noise_spike_sigma2 = config.get_double("noise_spike_sigma2", spec.noise_spike_sigma2);
    spec.noise_shape = config.get_string("noise_shape", spec.noise_shape);
    if (spec.noise_shape != "gaussian" && spec.noise_shape != "sign")
        throw ConfigError("noise_shape must be gaussian or sign");
    spec.feature_cov_min = config.get_double("feature_cov_min", spec.feature_cov_min);
    spec.feature_cov_max = config.get_double("feature_cov_max", spec.feature_cov_max);
    spec.dataset = config.get_string("dataset", spec.dataset);
    spec.test_dataset = config.get_string("test_dataset", spec.test_dataset);
    spec.partition_min = config.get_int("partition_min", spec.partition_min);
    spec.partition_max = config.get_int("partition_max", spec.partition_max);
    spec.participants = config.get_int("L", spec.participants);
    spec.batch_min = config.get_int("Bk_min", spec.batch_min);
    spec.batch_max = config.get_int("Bk_max", spec.batch_max);
    spec.epoch_min = config.get_int("Ek_min", spec.epoch_min);
    spec.epoch_max = config.get_int("Ek_max", spec.epoch_max);
    spec.step_size = config.get_double("mu", spec.step_size);
    std::string iterations = config.get_string("iterations", "");
    if (iterations == "auto")
        spec.iterations = 0;
    else
        spec.iterations = config.get_int("iterations", spec.iterations);
    spec.max_iterations = config.get_int("max_iterations", spec.max_iterations);
    spec.probability_floor = config.get_double("probability_floor", spec.probability_floor);
    spec.replacement_policy = config.get_string("replacement", spec.replacement_policy);
    if (config.has("schemes")) {
        spec.schemes.clear();
        for (const std::string& name : config.get_list("schemes"))
            spec.schemes.push_back(scheme_from_name(name));
    }
    spec.repetitions = config.get_int("repetitions", spec.repetitions);
    spec.master_seed = config.get_seed("seed", spec.master_seed);
    spec.out_dir = config.get_string("out", spec.out_dir);
    spec.threads = config.get_int("threads", spec.threads);
    spec.emit_constants = config.get_int("emit_constants", spec.emit_constants ? 1 : 0) != 0;

    if (spec.repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (spec.schemes.empty()) throw ConfigError("schemes must be non-empty");
    return spec;
}

ProblemInstance build_problem(const ExperimentSpec& spec, AgentDataset* test_set) {
    Rng rng(derive_seed(spec.master_seed, kInstanceStream));
    if (spec.kind == ProblemKind::regression) {
        RegressionSpec gen;
        gen.agents = spec.agents;
        gen.samples_per_agent = spec.samples_per_agent;
        gen.dim = spec.dim;
        gen.ridge = spec.ridge;
        gen.noise_variances = noise_profile_variances(spec, rng);
        gen.feature_scales = log_uniform_feature_scales(spec.agents, spec.dim,
                                                        spec.feature_cov_min,
                                                        spec.feature_cov_max, rng);
        gen.noise_shape =
            spec.noise_shape == "sign" ? NoiseShape::sign : NoiseShape::gaussian;
        return generate_regression(gen, rng);
    }
    if (spec.dataset.empty()) throw ConfigError("logistic problem requires dataset=<path>");
    AgentDataset pool = load_libsvm(spec.dataset);
    if (test_set && !spec.test_dataset.empty())
        *test_set = load_libsvm(spec.test_dataset, pool.dim());
    return partition_non_iid(pool, spec.agents, spec.partition_min, spec.partition_max,
                             spec.ridge, rng);
}

void draw_agent_plan(const ExperimentSpec& spec, const ProblemInstance& instance,
                     std::vector<int>& epochs, std::vector<int>& batches) {
    Rng rng(derive_seed(spec.master_seed, kPlanStream));
    epochs.resize(static_cast<size_t>(instance.agent_count()));
    batches.resize(static_cast<size_t>(instance.agent_count()));
    for (int k = 0; k < instance.agent_count(); ++k) {
        epochs[static_cast<size_t>(k)] =
            spec.epoch_min + rng.uniform_int(spec.epoch_max - spec.epoch_min + 1);
        int batch = spec.batch_min + rng.uniform_int(spec.batch_max - spec.batch_min + 1);
        batches[static_cast<size_t>(k)] = std::min(batch, instance.samples(k));
    }
}

double msd(const Eigen::VectorXd& w, const Eigen::VectorXd& w_opt) {
    if (w.size() != w_opt.size()) throw DimensionMismatchError("msd dimension mismatch");
    return (w - w_opt).squaredNorm();
}

double msd_db(double linear) {
    if (linear <= 0.0) return -320.0;
    return std::max(10.0 * std::log10(linear), -320.0);
}

double testing_error(const Eigen::VectorXd& w, const AgentDataset& test_set) {
    if (test_set.size() == 0) throw EmptyTestSetError("empty test set");
    const Eigen::VectorXd margins = test_set.features * w;
    long wrong = 0;
    for (int n = 0; n < test_set.size(); ++n) {
        double predicted = margins[n] >= 0.0 ? 1.0 : -1.0;
        if (predicted != test_set.targets[n]) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / test_set.size();
}

double steady_state(const std::vector<double>& series) {
    if (series.empty()) return 0.0;
    size_t window = std::max<size_t>(50, series.size() / 10);
    window = std::min(window, series.size());
    double sum = 0.0;
    for (size_t i = series.size() - window; i < series.size(); ++i) sum += series[i];
    return sum / static_cast<double>(window);
}

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

namespace {

struct SchemeRunContext {
    const ExperimentSpec& spec;
    const ProblemInstance& instance;
    const AgentDataset* test_set;
    const Eigen::VectorXd* w_opt;        // regression minimizer (MSD reference)
    const Eigen::VectorXd* w_reference;  // minimizer for the optimal schedule
    std::vector<int> epochs, batches;
    int horizon;
};

FederationConfig make_config(const SchemeRunContext& ctx, Scheme scheme, std::uint64_t seed) {
    FederationConfig config;
    config.participants = ctx.spec.participants;
    config.epochs = ctx.epochs;
    config.batch_sizes = ctx.batches;
    config.step_size = ctx.spec.step_size;
    config.iterations = ctx.horizon;
    config.scheme = scheme;
    config.replacement = replacement_for(ctx.spec, scheme);
    config.seed = seed;
    config.probability_floor = ctx.spec.probability_floor;
    return config;
}

// One repetition: train and reduce the records to the metric series.
std::vector<double> run_repetition(const SchemeRunContext& ctx, Scheme scheme, int repetition,
                                   ProbabilitySchedule* final_probs) {
    FederationConfig config = make_config(
        ctx, scheme, derive_seed(ctx.spec.master_seed, kRepetitionStream,
                                 static_cast<std::uint64_t>(repetition)));
    TrainOutput output = train(ctx.instance, config, ctx.w_opt, ctx.w_reference);
    std::vector<double> series;
    series.reserve(output.records.size());
    for (const IterationRecord& record : output.records) {
        if (ctx.spec.kind == ProblemKind::regression)
            series.push_back(record.msd);
        else
            series.push_back(testing_error(record.iterate, *ctx.test_set));
    }
    if (final_probs) *final_probs = std::move(output.final_probabilities);
    return series;
}

SchemeResult run_scheme(const SchemeRunContext& ctx, Scheme scheme,
                        const ProbabilitySchedule* optimal_schedule) {
    SchemeResult result;
    result.scheme = scheme;
    result.classification = ctx.spec.kind == ProblemKind::logistic;
    result.per_repetition.resize(static_cast<size_t>(ctx.spec.repetitions));
    std::vector<ProbabilitySchedule> finals(static_cast<size_t>(ctx.spec.repetitions),
                                            ProbabilitySchedule{ProbabilityVector::uniform(1), {}});

    int thread_count = ctx.spec.threads > 0
                           ? ctx.spec.threads
                           : static_cast<int>(std::thread::hardware_concurrency());
    thread_count = std::max(1, std::min(thread_count, ctx.spec.repetitions));

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            int rep = next.fetch_add(1);
            if (rep >= ctx.spec.repetitions || failed.load()) return;
            try {
                ProbabilitySchedule* sink =
                    scheme == Scheme::adaptive ? &finals[static_cast<size_t>(rep)] : nullptr;
                result.per_repetition[static_cast<size_t>(rep)] =
                    run_repetition(ctx, scheme, rep, sink);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                failed = true;
                failure = e.what();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    for (int t = 1; t < thread_count; ++t) threads.emplace_back(worker);
    worker();
    for (std::thread& t : threads) t.join();
    if (failed) throw Error("scheme " + scheme_name(scheme) + " failed: " + failure);

    const size_t horizon = result.per_repetition.front().size();
    result.mean.assign(horizon, 0.0);
    for (const std::vector<double>& series : result.per_repetition)
        for (size_t i = 0; i < horizon; ++i) result.mean[i] += series[i];
    for (double& m : result.mean) m /= ctx.spec.repetitions;

    if (scheme == Scheme::adaptive && optimal_schedule) {
        double agent_distance = 0.0, data_distance = 0.0;
        for (const ProbabilitySchedule& finals_r : finals) {
            double agent_sq = 0.0;
            for (int k = 0; k < optimal_schedule->agents.size(); ++k) {
                double diff = optimal_schedule->agents[k] - finals_r.agents[k];
                agent_sq += diff * diff;
            }
            agent_distance += std::sqrt(agent_sq);
            double per_agent = 0.0;
            for (size_t k = 0; k < optimal_schedule->data.size(); ++k) {
                double sq = 0.0;
                for (int n = 0; n < optimal_schedule->data[k].size(); ++n) {
                    double diff = optimal_schedule->data[k][n] - finals_r.data[k][n];
                    sq += diff * diff;
                }
                per_agent += std::sqrt(sq);
            }
            data_distance += per_agent / static_cast<double>(optimal_schedule->data.size());
        }
        result.agent_probability_distance = agent_distance / ctx.spec.repetitions;
        result.data_probability_distance = data_distance / ctx.spec.repetitions;
    }
    return result;
}

void write_scheme_csv(const SchemeResult& result, const std::string& directory) {
    std::filesystem::create_directories(directory);
    const std::string path = directory + "/" + scheme_name(result.scheme) + ".csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    if (result.classification) {
        out << "iteration,test_error_pct\n";
        for (size_t i = 0; i < result.mean.size(); ++i)
            out << (i + 1) << "," << format_double(result.mean[i]) << "\n";
    } else {
        out << "iteration,msd_linear,msd_db\n";
        for (size_t i = 0; i < result.mean.size(); ++i)
            out << (i + 1) << "," << format_double(result.mean[i]) << ","
                << format_double(msd_db(result.mean[i])) << "\n";
    }
}

void write_constants_csv(const std::vector<std::string>& rows, const std::string& directory) {
    std::filesystem::create_directories(directory);
    const std::string path = directory + "/constants.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "scheme,name,agent,value\n";
    for (const std::string& row : rows) out << row << "\n";
}

void append_constants_rows(std::vector<std::string>& rows, const std::string& scheme,
                           const TheoryConstants& constants) {
    auto global = [&](const std::string& name, double value) {
        rows.push_back(scheme + "," + name + ",," + format_double(value));
    };
    global("nu", constants.strong_convexity);
    global("delta", constants.lipschitz);
    global("xi", constants.minimizer_spread);
    global("beta_s2", constants.beta_s2);
    global("sigma_s2", constants.sigma_s2);
    global("lambda", constants.contraction);
    global("mu_max", constants.mu_max);
    for (size_t k = 0; k < constants.beta_sk2.size(); ++k) {
        const std::string agent = std::to_string(k);
        rows.push_back(scheme + ",beta_sk2," + agent + "," + format_double(constants.beta_sk2[k]));
        rows.push_back(scheme + ",sigma_sk2," + agent + "," +
                       format_double(constants.sigma_sk2[k]));
        rows.push_back(scheme + ",sigma_qk2," + agent + "," +
                       format_double(constants.sigma_qk2[k]));
        rows.push_back(scheme + ",alpha_k," + agent + "," + format_double(constants.alpha_k[k]));
        rows.push_back(scheme + ",lambda_k," + agent + "," +
                       format_double(constants.local_contraction[k]));
    }
}

// First iteration at which the averaged series has settled: relative change
// below 1% across a 50-iteration window.
int plateau_horizon(const std::vector<double>& mean) {
    const size_t window = 50;
    for (size_t i = window; i < mean.size(); ++i) {
        double prev = mean[i - window];
        if (prev <= 0.0) return static_cast<int>(i + 1);
        if (std::abs(mean[i] - prev) / prev < 0.01) return static_cast<int>(i + 1);
    }
    return static_cast<int>(mean.size());
}

}  // namespace

MetricTrace run_experiment(const ExperimentSpec& spec) {
    AgentDataset test_set;
    ProblemInstance instance = build_problem(spec, &test_set);
    if (spec.kind == ProblemKind::logistic && test_set.size() == 0)
        throw ConfigError("classification experiment requires test_dataset=<path>");

    SchemeRunContext ctx{spec, instance, &test_set, nullptr, nullptr, {}, {}, 0};
    draw_agent_plan(spec, instance, ctx.epochs, ctx.batches);

    Eigen::VectorXd w_opt;
    Eigen::VectorXd w_reference;
    bool needs_reference = false;
    for (Scheme scheme : spec.schemes)
        if (scheme != Scheme::uniform) needs_reference = true;
    if (spec.kind == ProblemKind::regression) {
        w_opt = closed_form_minimizer(instance);
        ctx.w_opt = &w_opt;
        w_reference = w_opt;
        ctx.w_reference = &w_reference;
    } else if (needs_reference || spec.emit_constants) {
        w_reference = numeric_minimizer(instance, -1, 1e-8);
        ctx.w_reference = &w_reference;
    }

    MetricTrace trace;
    trace.kind = spec.kind;

    // Horizon: explicit, or detected from the uniform scheme's plateau.
    ctx.horizon = spec.iterations;
    if (ctx.horizon == 0) {
        if (spec.kind != ProblemKind::regression)
            throw ConfigError("iterations=auto requires a regression problem");
        SchemeRunContext probe = ctx;
        probe.horizon = spec.max_iterations;
        SchemeResult uniform_run = run_scheme(probe, Scheme::uniform, nullptr);
        ctx.horizon = plateau_horizon(uniform_run.mean);
    }
    trace.horizon = ctx.horizon;

    ProbabilitySchedule optimal_schedule = uniform_schedule(instance);
    if (ctx.w_reference)
        optimal_schedule = schedule_at(instance, *ctx.w_reference, ctx.epochs, ctx.batches);

    if (spec.emit_constants && ctx.w_reference) {
        for (Scheme scheme : spec.schemes) {
            FederationConfig config = make_config(ctx, scheme, 0);
            const ProbabilitySchedule& schedule =
                scheme == Scheme::uniform ? uniform_schedule(instance) : optimal_schedule;
            // Describe the sampler actually used: floored and, without
            // replacement, capped vectors.
            ProbabilitySchedule effective{
                effective_agent_probabilities(schedule.agents, config), {}};
            for (int k = 0; k < instance.agent_count(); ++k)
                effective.data.push_back(effective_data_probabilities(
                    schedule.data[static_cast<size_t>(k)],
                    config.batch_sizes[static_cast<size_t>(k)], config));
            TheoryConstants constants =
                theory_constants(instance, effective, config, *ctx.w_reference);
            append_constants_rows(trace.constants_csv_rows, scheme_name(scheme), constants);
        }
        if (!spec.out_dir.empty()) write_constants_csv(trace.constants_csv_rows, spec.out_dir);
    }

    try {
        for (Scheme scheme : spec.schemes) {
            SchemeResult result = run_scheme(ctx, scheme, &optimal_schedule);
            if (!spec.out_dir.empty()) write_scheme_csv(result, spec.out_dir);
            trace.schemes.push_back(std::move(result));
        }
    } catch (...) {
        // Partial results were already flushed scheme by scheme.
        throw;
    }
    return trace;
}

void emit_csv(const MetricTrace& trace, const std::string& directory) {
    for (const SchemeResult& result : trace.schemes) write_scheme_csv(result, directory);
    write_constants_csv(trace.constants_csv_rows, directory);
}

}  // namespace isfed
