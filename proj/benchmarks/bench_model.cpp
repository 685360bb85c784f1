#include <benchmark/benchmark.h>

#include "dag/losses.hpp"
#include "dag/model.hpp"

namespace {

dag::AffordanceSample sample(int n_points, int image_size) {
  dag::SyntheticConfig s;
  s.n_points = n_points;
  s.image_size = image_size;
  s.region_radius = 1.0;
  return dag::generate_synthetic(s, 1).front();
}

void BM_ForwardPass(benchmark::State& state) {
  torch::NoGradGuard guard;
  dag::RunConfig config;
  dag::DagModel model(config);
  const auto prepared = model.prepare(sample(2048, static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(prepared));
}
BENCHMARK(BM_ForwardPass)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  dag::RunConfig config;
  config.level_sizes = {128, 32};
  dag::DagModel model(config);
  const auto prepared = model.prepare(sample(512, 64));
  torch::optim::Adam adam(model.trainable_parameters(), torch::optim::AdamOptions(1e-4));
  for (auto _ : state) {
    adam.zero_grad();
    dag::total_loss(model.predict(prepared), prepared.labels).total.backward();
    adam.step();
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace
