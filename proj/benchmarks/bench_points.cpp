#include <benchmark/benchmark.h>

#include "dag/point_backbone.hpp"

namespace {

torch::Tensor cloud(int64_t n) {
  auto gen = at::detail::createCPUGenerator(n);
  auto v = torch::randn({n, 3}, gen);
  return v / v.norm(2, 1, true);
}

void BM_FarthestPointSample(benchmark::State& state) {
  const auto pts = cloud(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(dag::farthest_point_sample(pts, 512));
}
BENCHMARK(BM_FarthestPointSample)->Arg(1024)->Arg(2048)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_BallQuery(benchmark::State& state) {
  const auto pts = cloud(2048);
  const auto centers = pts.slice(0, 0, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(dag::ball_query(centers, pts, 0.2, 32));
}
BENCHMARK(BM_BallQuery)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_PointEncoder(benchmark::State& state) {
  torch::NoGradGuard guard;
  dag::PointEncoder enc(dag::PointEncoderOptions{});
  const auto pts = cloud(2048);
  for (auto _ : state) benchmark::DoNotOptimize(enc(pts).cls);
}
BENCHMARK(BM_PointEncoder)->Unit(benchmark::kMillisecond);

}  // namespace
