#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dag/metrics.hpp"

namespace {

struct Inputs {
  std::vector<double> pred, gt;
};

Inputs make_inputs(int n) {
  std::mt19937_64 rng(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Inputs in;
  for (int i = 0; i < n; ++i) {
    in.pred.push_back(unit(rng));
    in.gt.push_back(unit(rng));
  }
  return in;
}

void BM_Auc(benchmark::State& state) {
  const auto in = make_inputs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dag::metrics::auc(in.pred, in.gt));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Auc)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_MiouSweep(benchmark::State& state) {
  const auto in = make_inputs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dag::metrics::miou(in.pred, in.gt));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MiouSweep)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_SampleMetrics(benchmark::State& state) {
  const auto in = make_inputs(2048);
  for (auto _ : state) benchmark::DoNotOptimize(dag::metrics::evaluate_sample(in.pred, in.gt));
}
BENCHMARK(BM_SampleMetrics);

}  // namespace
