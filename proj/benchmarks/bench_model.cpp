#include <benchmark/benchmark.h>

#include "contrastad/model.hpp"
#include "contrastad/rng.hpp"
#include "contrastad/training.hpp"

using namespace contrastad;

namespace {

training::TrainConfig bench_config(bool full) {
    training::TrainConfig cfg;
    if (!full) {
        cfg.window = 16;
        cfg.snapshots = 4;
        cfg.mpe_channels = 4;
        cfg.gat_dim = 4;
        cfg.gat_channels = 4;
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.spectral_k = 2;
        cfg.ffn_hidden = 8;
        cfg.gcn_hidden = 8;
        cfg.gcn_dim = 4;
    }
    return cfg;
}

data::Window bench_window(std::size_t n, std::size_t w) {
    Rng rng(5);
    data::Window win;
    win.start = 0;
    win.n_features = n;
    win.length = w;
    win.values.resize(n * w);
    for (double& v : win.values) v = rng.uniform(0.0, 1.0);
    win.forecast_target.assign(n, 0.5);
    return win;
}

void BM_window_forward(benchmark::State& state) {
    bool full = state.range(0) != 0;
    training::TrainConfig cfg = bench_config(full);
    std::size_t n = full ? 8 : 4;
    model::Model m = model::init_model(cfg.model_config(n), 1);
    data::Window win = bench_window(n, cfg.window);
    for (auto _ : state) {
        model::WindowGraph wg = model::build_forward_graph(m, win, false, 0);
        benchmark::DoNotOptimize(wg.graph.value(wg.forecast).values[0]);
    }
}
BENCHMARK(BM_window_forward)->Arg(0)->Arg(1);

void BM_window_train_step(benchmark::State& state) {
    bool full = state.range(0) != 0;
    training::TrainConfig cfg = bench_config(full);
    std::size_t n = full ? 8 : 4;
    model::Model m = model::init_model(cfg.model_config(n), 1);
    data::Window win = bench_window(n, cfg.window);
    for (auto _ : state) {
        model::WindowGraph wg =
            model::build_loss_graph(m, win, cfg.lambda, cfg.beta, true, 7, true);
        wg.graph.backward();
        benchmark::DoNotOptimize(wg.graph.grad(wg.bound.at("head.forecast.w"))[0]);
    }
}
BENCHMARK(BM_window_train_step)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
