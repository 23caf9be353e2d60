#include <benchmark/benchmark.h>

#include "contrastad/dgcl.hpp"
#include "contrastad/dtw.hpp"
#include "contrastad/rng.hpp"

using namespace contrastad;

namespace {

std::vector<double> random_series(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(0.0, 3.0);
    return v;
}

void BM_dtw_full(benchmark::State& state) {
    std::size_t len = static_cast<std::size_t>(state.range(0));
    std::vector<double> a = random_series(len, 1), b = random_series(len, 2);
    for (auto _ : state) benchmark::DoNotOptimize(dgcl::dtw_distance(a, b));
}
BENCHMARK(BM_dtw_full)->Arg(10)->Arg(50)->Arg(200);

void BM_dtw_banded(benchmark::State& state) {
    std::size_t len = static_cast<std::size_t>(state.range(0));
    std::vector<double> a = random_series(len, 1), b = random_series(len, 2);
    for (auto _ : state) benchmark::DoNotOptimize(dgcl::dtw_distance(a, b, 5));
}
BENCHMARK(BM_dtw_banded)->Arg(10)->Arg(50)->Arg(200);

void BM_snapshot_graph(benchmark::State& state) {
    std::size_t n = static_cast<std::size_t>(state.range(0));
    std::size_t w = 100, s_count = 10;
    Rng rng(3);
    std::vector<double> window(n * w);
    for (double& v : window) v = rng.uniform(-1.0, 1.0);
    std::size_t budget = dgcl::edge_budget(3.0, n);
    for (auto _ : state)
        benchmark::DoNotOptimize(dgcl::build_snapshot_graph(window, n, w, 1, s_count, budget));
}
BENCHMARK(BM_snapshot_graph)->Arg(8)->Arg(25)->Arg(55);

}  // namespace

BENCHMARK_MAIN();
