// Command-line front end for the federated importance-sampling simulator.
//
//   isfed run       --config <path> [--scheme s]... [--seed n] [--out dir]
//   isfed verify    [--seed n] [--trials n]
//   isfed sweep     --config <path> --param mu --values 0.02,0.01,...
//   isfed constants --config <path>
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 verify failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "isfed/analysis.hpp"
#include "isfed/config.hpp"
#include "isfed/errors.hpp"
#include "isfed/experiment.hpp"
#include "isfed/verify.hpp"

namespace {

using namespace isfed;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerify = 3;

ExperimentSpec load_spec(const std::string& config_path, const std::vector<std::string>& schemes,
                         const std::string& seed, const std::string& out) {
    Config config = Config::from_file(config_path);
    if (!schemes.empty()) {
        std::string joined;
        for (const std::string& s : schemes) joined += (joined.empty() ? "" : ",") + s;
        config.set("schemes", joined);
    }
    if (!seed.empty()) config.set("seed", seed);
    if (!out.empty()) config.set("out", out);
    return spec_from_config(config);
}

int command_run(const std::string& config_path, const std::vector<std::string>& schemes,
                const std::string& seed, const std::string& out) {
    ExperimentSpec spec = load_spec(config_path, schemes, seed, out);
    MetricTrace trace = run_experiment(spec);
    std::printf("horizon: %d iterations\n", trace.horizon);
    for (const SchemeResult& result : trace.schemes) {
        double level = steady_state(result.mean);
        if (result.classification)
            std::printf("%-9s final test error %.4f%%\n", scheme_name(result.scheme).c_str(),
                        result.mean.empty() ? 0.0 : result.mean.back());
        else
            std::printf("%-9s steady-state MSD %.6e (%.2f dB)\n",
                        scheme_name(result.scheme).c_str(), level, msd_db(level));
        if (result.scheme == Scheme::adaptive)
            std::printf("          probability distance: agents %.4e, data %.4e\n",
                        result.agent_probability_distance, result.data_probability_distance);
    }
    if (!spec.out_dir.empty()) std::printf("CSV written to %s\n", spec.out_dir.c_str());
    return kExitOk;
}

int command_verify(std::uint64_t seed, long trials) {
    std::vector<CheckResult> results = run_oracle_suite(seed);
    // The Monte-Carlo check honours the trial override separately.
    if (trials > 0) results[1] = check_inclusion_probabilities(seed, trials);
    bool all_passed = true;
    for (const CheckResult& result : results) {
        std::printf("[%s] %s: %s\n", result.passed ? "PASS" : "FAIL", result.name.c_str(),
                    result.detail.c_str());
        all_passed = all_passed && result.passed;
    }
    return all_passed ? kExitOk : kExitVerify;
}

int command_sweep(const std::string& config_path, const std::string& param,
                  const std::vector<std::string>& values, const std::string& out) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::string base_out = out;
    if (base_out.empty()) {
        Config config = Config::from_file(config_path);
        base_out = config.get_string("out", "sweep_out");
    }
    std::filesystem::create_directories(base_out);
    std::ofstream summary(base_out + "/sweep_summary.csv", std::ios::binary);
    summary << param << ",scheme,steady_state,steady_state_db\n";
    for (const std::string& value : values) {
        Config config = Config::from_file(config_path);
        config.set(param, value);
        config.set("out", base_out + "/" + param + "=" + value);
        ExperimentSpec spec = spec_from_config(config);
        MetricTrace trace = run_experiment(spec);
        for (const SchemeResult& result : trace.schemes) {
            double level = steady_state(result.mean);
            summary << value << "," << scheme_name(result.scheme) << "," << format_double(level)
                    << "," << format_double(msd_db(level)) << "\n";
            std::printf("%s=%s %-9s steady state %.6e\n", param.c_str(), value.c_str(),
                        scheme_name(result.scheme).c_str(), level);
        }
    }
    std::printf("summary written to %s/sweep_summary.csv\n", base_out.c_str());
    return kExitOk;
}

int command_constants(const std::string& config_path) {
    Config config = Config::from_file(config_path);
    ExperimentSpec spec = spec_from_config(config);
    AgentDataset test_set;
    ProblemInstance instance = build_problem(spec, &test_set);
    std::vector<int> epochs, batches;
    draw_agent_plan(spec, instance, epochs, batches);

    Eigen::VectorXd w_reference = reference_minimizer(instance);
    FederationConfig federation;
    federation.participants = spec.participants;
    federation.epochs = epochs;
    federation.batch_sizes = batches;
    federation.step_size = spec.step_size;
    federation.iterations = 1;
    federation.probability_floor = spec.probability_floor;

    std::printf("scheme,name,agent,value\n");
    for (Scheme scheme : spec.schemes) {
        federation.scheme = scheme;
        federation.replacement = spec.replacement_policy == "with"
                                     ? Replacement::with_replacement
                                 : spec.replacement_policy == "without"
                                     ? Replacement::without_replacement
                                 : scheme == Scheme::uniform ? Replacement::with_replacement
                                                             : Replacement::without_replacement;
        ProbabilitySchedule schedule =
            scheme == Scheme::uniform
                ? uniform_schedule(instance)
                : schedule_at(instance, w_reference, federation.epochs, federation.batch_sizes);
        ProbabilitySchedule effective{
            effective_agent_probabilities(schedule.agents, federation), {}};
        for (int k = 0; k < instance.agent_count(); ++k)
            effective.data.push_back(effective_data_probabilities(
                schedule.data[static_cast<size_t>(k)],
                federation.batch_sizes[static_cast<size_t>(k)], federation));
        TheoryConstants constants =
            theory_constants(instance, effective, federation, w_reference);
        const std::string name = scheme_name(scheme);
        std::printf("%s,nu,,%s\n", name.c_str(), format_double(constants.strong_convexity).c_str());
        std::printf("%s,delta,,%s\n", name.c_str(), format_double(constants.lipschitz).c_str());
        std::printf("%s,xi,,%s\n", name.c_str(),
                    format_double(constants.minimizer_spread).c_str());
        std::printf("%s,beta_s2,,%s\n", name.c_str(), format_double(constants.beta_s2).c_str());
        std::printf("%s,sigma_s2,,%s\n", name.c_str(), format_double(constants.sigma_s2).c_str());
        std::printf("%s,lambda,,%s\n", name.c_str(), format_double(constants.contraction).c_str());
        std::printf("%s,mu_max,,%s\n", name.c_str(), format_double(constants.mu_max).c_str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated averaging under two-level importance sampling"};
    app.require_subcommand(1);

    std::string config_path, out, seed, param;
    std::vector<std::string> schemes, values;
    std::uint64_t verify_seed = 0x15FEDULL;
    long trials = 0;

    CLI::App* run = app.add_subcommand("run", "run a configured experiment");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--scheme", schemes, "restrict to these schemes");
    run->add_option("--seed", seed, "master seed override");
    run->add_option("--out", out, "output directory override");

    CLI::App* verify = app.add_subcommand("verify", "run the enumeration/Monte-Carlo oracle suite");
    verify->add_option("--seed", verify_seed, "oracle seed");
    verify->add_option("--trials", trials, "Monte-Carlo trials override");

    CLI::App* sweep = app.add_subcommand("sweep", "repeat an experiment over parameter values");
    sweep->add_option("--config", config_path, "config file")->required();
    sweep->add_option("--param", param, "config key to sweep")->required();
    sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
    sweep->add_option("--out", out, "output directory");

    CLI::App* constants = app.add_subcommand("constants", "print the convergence constants");
    constants->add_option("--config", config_path, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return command_run(config_path, schemes, seed, out);
        if (verify->parsed()) return command_verify(verify_seed, trials);
        if (sweep->parsed()) return command_sweep(config_path, param, values, out);
        if (constants->parsed()) return command_constants(config_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
