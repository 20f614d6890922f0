// Serial reference kernels vs the OpenMP versions on a 512x512 speckle.
// Thread count follows OMP_NUM_THREADS.

#include "speckle/ebsd.hpp"
#include "speckle/geometry.hpp"
#include "speckle/polywarp.hpp"
#include "speckle/reference.hpp"
#include "speckle/similarity.hpp"
#include "speckle/synth.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace speckle;

const SynthResult &instance() {
  static const SynthResult r = [] {
    SynthSpec s;
    s.seed = 42;
    return synth(s);
  }();
  return r;
}

const PolyWarp &warp() {
  static const PolyWarp w = [] {
    const auto &r = instance();
    const auto mesh = regular_mesh(10, 10, r.spec.width, r.spec.height);
    std::vector<Point> target;
    for (const auto &p : mesh.points())
      target.push_back(r.truth_map(p.x, p.y));
    return PolyFitter(mesh, 3).fit(target);
  }();
  return w;
}

void BM_dice_openmp(benchmark::State &st) {
  for (auto _ : st)
    benchmark::DoNotOptimize(dice(instance().clean, instance().distorted));
}
void BM_dice_serial(benchmark::State &st) {
  for (auto _ : st)
    benchmark::DoNotOptimize(reference::dice(instance().clean, instance().distorted));
}

void BM_apply_affine_openmp(benchmark::State &st) {
  const AffineParams p{3, -2, 0.5};
  for (auto _ : st)
    benchmark::DoNotOptimize(apply_affine(instance().clean, p));
}
void BM_apply_affine_serial(benchmark::State &st) {
  const AffineParams p{3, -2, 0.5};
  for (auto _ : st)
    benchmark::DoNotOptimize(reference::apply_affine(instance().clean, p));
}

void BM_warped_dice_openmp(benchmark::State &st) {
  for (auto _ : st)
    benchmark::DoNotOptimize(warped_dice(instance().distorted, warp(), instance().clean));
}
void BM_warped_dice_serial(benchmark::State &st) {
  for (auto _ : st)
    benchmark::DoNotOptimize(reference::warped_dice(instance().distorted, warp(), instance().clean));
}

void BM_grid_search_openmp(benchmark::State &st) {
  const Range t{-3, 3, 1};
  for (auto _ : st)
    benchmark::DoNotOptimize(grid_search_align(instance().clean, instance().distorted, t, t, Range::single(0)));
}
void BM_grid_search_serial(benchmark::State &st) {
  const Range t{-3, 3, 1};
  for (auto _ : st)
    benchmark::DoNotOptimize(
        reference::grid_search_align(instance().clean, instance().distorted, t, t, Range::single(0)));
}

void BM_regenerate_openmp(benchmark::State &st) {
  static const EbsdMap map = synthetic_map(instance().distorted, 1.0, 1);
  for (auto _ : st)
    benchmark::DoNotOptimize(regenerate(map, warp(), instance().clean));
}
void BM_regenerate_serial(benchmark::State &st) {
  static const EbsdMap map = synthetic_map(instance().distorted, 1.0, 1);
  for (auto _ : st)
    benchmark::DoNotOptimize(reference::regenerate(map, warp(), instance().clean));
}

} // namespace

BENCHMARK(BM_dice_openmp);
BENCHMARK(BM_dice_serial);
BENCHMARK(BM_apply_affine_openmp);
BENCHMARK(BM_apply_affine_serial);
BENCHMARK(BM_warped_dice_openmp);
BENCHMARK(BM_warped_dice_serial);
BENCHMARK(BM_grid_search_openmp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_grid_search_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_regenerate_openmp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_regenerate_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
