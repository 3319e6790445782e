#include <benchmark/benchmark.h>

#include <random>

#include "fixtures.hpp"
#include "rownav/nmpc.hpp"
#include "rownav/pcd_pipeline.hpp"
#include "rownav/sim.hpp"

namespace {

using namespace rownav;

// One rendered frame from the middle of the default straight row.
const std::vector<Point3>& sample_frame() {
  static const auto cloud = [] {
    const World w = generate_world(WorldSpec{});
    std::mt19937_64 rng(1);
    return render_cloud(w, pose_from(8.0, 0.05, 0.05), CameraSpec{}, rng);
  }();
  return cloud;
}

void BM_Process(benchmark::State& state) {
  const auto& cloud = sample_frame();
  const PipelineConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(process(cloud, cfg));
  state.counters["points"] = static_cast<double>(cloud.size());
}
BENCHMARK(BM_Process)->Unit(benchmark::kMillisecond);

void BM_VoxelDownsample(benchmark::State& state) {
  const auto& cloud = sample_frame();
  for (auto _ : state) benchmark::DoNotOptimize(voxel_downsample(cloud, 0.05));
}
BENCHMARK(BM_VoxelDownsample)->Unit(benchmark::kMillisecond);

void BM_ShadowFill(benchmark::State& state) {
  const auto grid = project_to_grid(sample_frame(), PipelineConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(shadow_fill(grid));
}
BENCHMARK(BM_ShadowFill)->Unit(benchmark::kMillisecond);

void BM_SolveFree(benchmark::State& state) {
  NmpcConfig cfg;
  cfg.horizon_n = static_cast<int>(state.range(0));
  const auto lane = testing::straight_lane(0.75, -0.75, 0.3);
  const QuatPose s = pose_from(0.0, 0.1, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(solve(s, lane, {}, {0.4, 0}, cfg));
}
BENCHMARK(BM_SolveFree)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_SolveObstacle(benchmark::State& state) {
  const NmpcConfig cfg;
  const auto lane = testing::straight_lane(1.25, -1.25, 0.3);
  std::vector<Point2> obs;
  for (int i = 0; i < 30; ++i) obs.push_back({1.2 + 0.01 * i, -0.15 + 0.01 * i});
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve(QuatPose{}, lane, obs, {0.4, 0}, cfg));
  }
}
BENCHMARK(BM_SolveObstacle)->Unit(benchmark::kMillisecond);

void BM_RenderCloud(benchmark::State& state) {
  const World w = generate_world(WorldSpec{});
  std::mt19937_64 rng(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_cloud(w, pose_from(8.0, 0.0, 0.0), CameraSpec{}, rng));
  }
}
BENCHMARK(BM_RenderCloud)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
