// Serial references against the OpenMP kernels. Thread count comes from
// OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include "otsforge/eval.hpp"
#include "otsforge/fitter.hpp"
#include "otsforge/funcimg.hpp"
#include "otsforge/metrics.hpp"
#include "otsforge/treegen.hpp"

using namespace otsforge;

namespace {

const Vocab& V() { return default_vocab(); }

const OpTree& tree() {
  static const OpTree t = parse_tree("add(mul(x0,sin(L[1.3,0.2](x0))),exp(mul(C[-0.4],abs(x0))))", V());
  return t;
}

Points points(std::int64_t n) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < xs.size(); ++i)
    xs[i] = -10.0 + 20.0 * static_cast<double>(i) / static_cast<double>(xs.size() - 1);
  return Points(1, std::move(xs));
}

std::vector<OpTree> five_node_trees(int count, std::uint64_t seed) {
  GenConfig cfg;
  cfg.node_min = cfg.node_max = 5;
  TreeGenerator gen(V(), cfg);
  Rng rng(seed, 0);
  std::vector<OpTree> out;
  for (std::uint64_t attempt = 0; static_cast<int>(out.size()) < count; ++attempt) {
    Rng r = rng.split(attempt);
    OpTree t = gen.generate_valid_tree(r, RenderConfig{});
    if (t.n_constants() > 0) out.push_back(std::move(t));
  }
  return out;
}

void BM_EvalReference(benchmark::State& state) {
  const Points p = points(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_reference(tree(), p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EvalTape(benchmark::State& state) {
  const Points p = points(state.range(0));
  EvalTape tape;
  for (auto _ : state) {
    tape.forward(tree(), p);
    benchmark::DoNotOptimize(tape.output().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GradConstants(benchmark::State& state) {
  const Points p = points(state.range(0));
  const auto target = evaluate_reference(tree(), p);
  const OpTree start = tree().with_constants(std::vector<double>{1.0, 0.0, -0.2});
  for (auto _ : state) benchmark::DoNotOptimize(grad_constants(start, p, target));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

EvalSet eval_set() {
  const auto preds = five_node_trees(500, 21);
  const auto targets = five_node_trees(500, 22);
  EvalSet omega;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto t = encode_bfs(targets[i]);
    omega.push_back({encode_bfs(preds[i]).ots, t.ots,
                     ConstArray(targets[i].constants().begin(), targets[i].constants().end()),
                     std::nullopt});
  }
  return omega;
}

void BM_MetricsSerial(benchmark::State& state) {
  const EvalSet omega = eval_set();
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_metrics_serial(omega, V()));
}

void BM_MetricsParallel(benchmark::State& state) {
  const EvalSet omega = eval_set();
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_metrics(omega, V()));
}

std::vector<BatchItem> batch() {
  std::vector<BatchItem> items;
  for (const auto& t : five_node_trees(20, 31)) items.push_back({encode_bfs(t).ots, render(t, RenderConfig{})});
  return items;
}

FitConfig batch_config() {
  FitConfig cfg;
  cfg.restarts = 1;
  cfg.screen_samples = 0;
  cfg.stop_delta = 1e-5;
  return cfg;
}

void BM_FitBatchSerial(benchmark::State& state) {
  const auto items = batch();
  for (auto _ : state) benchmark::DoNotOptimize(fit_batch_serial(items, batch_config(), V()));
}

void BM_FitBatchParallel(benchmark::State& state) {
  const auto items = batch();
  for (auto _ : state) benchmark::DoNotOptimize(fit_batch(items, batch_config(), V()));
}

}  // namespace

BENCHMARK(BM_EvalReference)->Arg(4096)->Arg(1 << 16);
BENCHMARK(BM_EvalTape)->Arg(4096)->Arg(1 << 16);
BENCHMARK(BM_GradConstants)->Arg(4096)->Arg(1 << 16);
BENCHMARK(BM_MetricsSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MetricsParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitBatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitBatchParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
