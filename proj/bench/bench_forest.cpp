// Forest training: the OpenMP kernel against the serial reference on the
// synthetic network's panel.
//
//   build/bench/bench_forest --benchmark_counters_tabular=true

#include <benchmark/benchmark.h>

#include <vector>

#include "pipesurv/data.hpp"
#include "pipesurv/survival_forest.hpp"

namespace {

using namespace pipesurv;

const Panel& panel_for(std::size_t n_pipes) {
  static std::vector<std::pair<std::size_t, Panel>> cache;
  for (const auto& [n, p] : cache) {
    if (n == n_pipes) return p;
  }
  SynthConfig config;
  config.n_pipes = n_pipes;
  const auto data = synth_generate(config, 2024);
  cache.emplace_back(n_pipes, build_panel(data.pipes, data.work_orders, PanelConfig{1, 8, 9, 15},
                                          config.include_ground_level));
  return cache.back().second;
}

ForestParams params(std::size_t n_trees) {
  ForestParams p;
  p.n_trees = n_trees;
  p.master_seed = 7;
  p.tree.min_unique_deaths = 20;
  p.tree.candidate_features = 3;
  return p;
}

void BM_TrainSerial(benchmark::State& state) {
  const auto& panel = panel_for(static_cast<std::size_t>(state.range(0)));
  const auto p = params(32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_serial(panel.samples, panel.schema, p));
  }
  state.counters["rows"] = static_cast<double>(panel.samples.size());
  state.counters["trees/s"] = benchmark::Counter(32.0, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_TrainParallel(benchmark::State& state) {
  const auto& panel = panel_for(static_cast<std::size_t>(state.range(0)));
  const auto p = params(32);
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(panel.samples, panel.schema, p, threads));
  }
  state.counters["rows"] = static_cast<double>(panel.samples.size());
  state.counters["threads"] = threads;
  state.counters["trees/s"] = benchmark::Counter(32.0, benchmark::Counter::kIsIterationInvariantRate);
}

}  // namespace

BENCHMARK(BM_TrainSerial)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TrainParallel)
    ->ArgsProduct({{2000, 10000}, {1, 2, 4, 8}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
