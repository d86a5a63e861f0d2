#include <benchmark/benchmark.h>

#include "featalign/initpose.hpp"
#include "featalign/scene.hpp"
#include "featalign/solver.hpp"

using namespace featalign;

namespace {

const GeneratedScene& bench_scene() {
  static const GeneratedScene gen = [] {
    SceneSpec spec;
    spec.seed = 0;
    spec.n_points = 200;
    spec.scales = {0.25, 1.0};
    return generate(spec);
  }();
  return gen;
}

void BM_BuildSystem(benchmark::State& state) {
  const auto& gen = bench_scene();
  const SolverConfig config;
  const int level = int(state.range(0));
  const Pose pose0 = perturb(gen.gt, 0.01, 0.02, 7);
  for (auto _ : state) {
    const auto sys = build_system<double>(pose0, gen.scene, gen.query[1],
                                          gen.camera, level, config);
    benchmark::DoNotOptimize(sys.g);
  }
}
BENCHMARK(BM_BuildSystem)->DenseRange(0, 2);

void BM_OptimizeLevel(benchmark::State& state) {
  const auto& gen = bench_scene();
  SolverConfig config;
  config.max_iters_per_level = 10;
  const int level = int(state.range(0));
  const Pose pose0 = perturb(gen.gt, 0.01, 0.02, 7);
  for (auto _ : state) {
    const Pose out = optimize_level<double>(pose0, gen.scene, gen.query[1],
                                            gen.camera, level, config,
                                            Vec6::Constant(0.316));
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_OptimizeLevel)->DenseRange(0, 2);

void BM_OptimizeFull(benchmark::State& state) {
  const auto& gen = bench_scene();
  const SolverConfig config;
  const DampingParams params = DampingParams::zeros(gen.spec.pyramid.num_levels());
  const Pose pose0 = perturb(gen.gt, 0.02, 0.05, 11);
  for (auto _ : state) {
    const auto result =
        optimize<double>(pose0, gen.scene, gen.query, gen.camera, config, params);
    benchmark::DoNotOptimize(result.pose);
  }
}
BENCHMARK(BM_OptimizeFull);

void BM_Interpolate(benchmark::State& state) {
  const auto& gen = bench_scene();
  const auto& level = gen.query[1].levels.back();
  double x = 40.0, y = 50.0;
  for (auto _ : state) {
    const auto r = interpolate<double>(level, Vec2(x, y));
    benchmark::DoNotOptimize(r.feature);
    x = 30.0 + std::fmod(x * 1.1, 180.0);
    y = 30.0 + std::fmod(y * 1.3, 180.0);
  }
}
BENCHMARK(BM_Interpolate);

}  // namespace
