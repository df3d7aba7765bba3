#include <benchmark/benchmark.h>

#include <random>

#include "kktset/attack.hpp"
#include "kktset/kkt.hpp"
#include "kktset/lab.hpp"
#include "kktset/net.hpp"
#include "kktset/rng.hpp"

using namespace kktset;

namespace {

NetworkParams random_network(Index k, Index d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    NetworkParams p = NetworkParams::zeros(k, d);
    for (Index j = 0; j < k; ++j) {
        for (Index c = 0; c < d; ++c) p.W(j, c) = n(rng);
        p.b(j) = n(rng);
        p.v(j) = n(rng);
    }
    return p;
}

void BM_Forward(benchmark::State& state) {
    const Index d = state.range(0);
    const Index k = state.range(1);
    const NetworkParams p = random_network(k, d, 1);
    const Vector x = gen_sphere_dataset(2, d, 2).X.row(0).transpose();
    for (auto _ : state) benchmark::DoNotOptimize(forward(p, x));
}
BENCHMARK(BM_Forward)->Args({50, 200})->Args({784, 1000});

void BM_GradTheta(benchmark::State& state) {
    const Index d = state.range(0);
    const Index k = state.range(1);
    const NetworkParams p = random_network(k, d, 1);
    const Vector x = gen_sphere_dataset(2, d, 2).X.row(0).transpose();
    for (auto _ : state) benchmark::DoNotOptimize(grad_theta(p, x, 1.0));
}
BENCHMARK(BM_GradTheta)->Args({50, 200})->Args({784, 1000});

void BM_FitMultipliers(benchmark::State& state) {
    const Index n = state.range(0);
    const LabeledDataset ds = gen_sphere_dataset(n, 50, 3);
    const NetworkParams p = random_network(200, 50, 4);
    for (auto _ : state) benchmark::DoNotOptimize(fit_multipliers(p, ds));
}
BENCHMARK(BM_FitMultipliers)->Arg(50)->Arg(100)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_AttackGradients(benchmark::State& state) {
    const Index m = state.range(0);
    const NetworkParams p = random_network(200, 50, 5);
    AttackConfig config;
    config.m = m;
    const AttackState s = initial_attack_state(p, config, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(attack_gradients(p, s.candidates, s.labels, s.multipliers, config.weights));
    }
}
BENCHMARK(BM_AttackGradients)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_AttackIterations(benchmark::State& state) {
    const NetworkParams p = random_network(200, 50, 6);
    AttackConfig config;
    config.m = 200;
    config.iterations = 10;
    config.restarts = 1;
    for (auto _ : state) benchmark::DoNotOptimize(reconstruct(p, config));
}
BENCHMARK(BM_AttackIterations)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
