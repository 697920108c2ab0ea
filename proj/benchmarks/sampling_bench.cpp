#include <benchmark/benchmark.h>

#include "isfed/estimator.hpp"
#include "isfed/rng.hpp"
#include "isfed/sampling.hpp"

using namespace isfed;

namespace {

ProbabilityVector random_probabilities(int n, Rng& rng) {
    std::vector<double> raw(static_cast<size_t>(n));
    double sum = 0;
    for (double& r : raw) sum += (r = 0.1 + rng.uniform());
    for (double& r : raw) r /= sum;
    return ProbabilityVector::validated(raw);
}

void systematic_sampler(benchmark::State& state) {
    Rng rng(1);
    const int n = static_cast<int>(state.range(0));
    const int take = std::max(1, n / 50);
    ProbabilityVector p = cap_inclusion_probabilities(random_probabilities(n, rng), take);
    for (auto _ : state) benchmark::DoNotOptimize(systematic_sample_without_replacement(p, take, rng));
}
BENCHMARK(systematic_sampler)->Arg(100)->Arg(300)->Arg(3000);

void with_replacement_sampler(benchmark::State& state) {
    Rng rng(2);
    const int n = static_cast<int>(state.range(0));
    ProbabilityVector p = random_probabilities(n, rng);
    for (auto _ : state) benchmark::DoNotOptimize(sample_with_replacement(p, 10, rng));
}
BENCHMARK(with_replacement_sampler)->Arg(100)->Arg(3000);

void inclusion_subset_dp(benchmark::State& state) {
    Rng rng(3);
    ProbabilityVector p = random_probabilities(static_cast<int>(state.range(0)), rng);
    for (auto _ : state)
        benchmark::DoNotOptimize(exact_inclusion_probabilities(p, 3, InclusionScheme::sequential));
}
BENCHMARK(inclusion_subset_dp)->Arg(8)->Arg(12);

void ht_estimator(benchmark::State& state) {
    Rng rng(4);
    const int n = static_cast<int>(state.range(0));
    ProbabilityVector p = random_probabilities(n, rng);
    std::vector<Eigen::VectorXd> values;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd v(8);
        for (int j = 0; j < 8; ++j) v[j] = rng.normal();
        values.push_back(v);
    }
    SampleDraw draw = sample_with_replacement(p, 16, rng);
    for (auto _ : state) benchmark::DoNotOptimize(ht_estimate(values, p, draw));
}
BENCHMARK(ht_estimator)->Arg(100)->Arg(1000);

}  // namespace
