#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include <random>
#include <vector>

#include "osr/evaluation.hpp"
#include "osr/models.hpp"

namespace {

std::vector<double> uniform_scores(int64_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = u(rng);
  return v;
}

void BM_Auroc(benchmark::State& state) {
  auto a = uniform_scores(state.range(0), 1);
  auto b = uniform_scores(state.range(0), 2);
  for (auto _ : state) benchmark::DoNotOptimize(osr::auroc(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auroc)->RangeMultiplier(4)->Range(256, 65536)->Complexity(benchmark::oNLogN);

void BM_SlicedWasserstein(benchmark::State& state) {
  torch::manual_seed(0);
  auto a = torch::randn({state.range(0), 48});
  auto b = torch::randn({state.range(0), 48}) + 0.5;
  auto proj = osr::random_projections(48, 128, 0);
  for (auto _ : state) benchmark::DoNotOptimize(osr::sliced_wasserstein(a, b, proj));
}
BENCHMARK(BM_SlicedWasserstein)->Arg(256)->Arg(1024);

void BM_ClassifierForward(benchmark::State& state) {
  torch::NoGradGuard no_grad;
  osr::NetConfig cfg;
  cfg.widths = {state.range(0), state.range(0) * 2, state.range(0) * 3};
  osr::GroupedNet net(cfg);
  net->eval();
  auto x = torch::randn({64, 1, 32, 32});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ClassifierForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
