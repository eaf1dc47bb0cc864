#include <random>

#include <benchmark/benchmark.h>

#include "invloc/fusion.hpp"
#include "invloc/generator.hpp"
#include "invloc/placerec.hpp"
#include "invloc/posereg.hpp"
#include "invloc/ssim.hpp"

using namespace invloc;

namespace {

FusionMap noise_map(int size, std::uint64_t seed, FrameId frame = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  FusionMap m;
  m.height = m.width = size;
  m.source_frame = frame;
  m.data.resize(static_cast<std::size_t>(size) * size);
  for (auto& v : m.data) v = n(rng);
  return m;
}

void BM_SsimPair(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = noise_map(size, 1), b = noise_map(size, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SsimPair)->Arg(16)->Arg(64)->Arg(256);

void BM_SsimPrepared(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SsimOperand a(noise_map(size, 1)), b(noise_map(size, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SsimPrepared)->Arg(16)->Arg(64)->Arg(256);

void BM_ScoreMatrix(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<FusionMap> q, db;
  std::vector<FrameId> ids;
  for (int i = 0; i < n; ++i) {
    q.push_back(noise_map(64, 100 + i, i));
    db.push_back(noise_map(64, 900 + i, i));
    ids.push_back(i);
  }
  const auto gt = identity_correspondences(ids);
  for (auto _ : state) benchmark::DoNotOptimize(score_matrix(q, db, gt, {}, 1));
  state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_ScoreMatrix)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_PrCurve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u;
  ScoreMatrix m;
  m.rows = m.cols = n;
  m.scores.resize(n * n);
  for (auto& v : m.scores) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    m.query_ids.push_back(static_cast<FrameId>(i));
    m.db_ids.push_back(static_cast<FrameId>(i));
  }
  m.gt = identity_correspondences(m.query_ids);
  for (auto _ : state) benchmark::DoNotOptimize(pr_curve(m));
}
BENCHMARK(BM_PrCurve)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_GeneratorToConv3(benchmark::State& state) {
  GeneratorSpec spec;
  spec.image_size = static_cast<int>(state.range(0));
  spec.base_channels = static_cast<int>(state.range(1));
  Generator g(spec);
  const ImageTensor img(spec.image_size, spec.image_size, 3, 0.1f);
  for (auto _ : state) benchmark::DoNotOptimize(extract(g, img, "Conv3"));
}
BENCHMARK(BM_GeneratorToConv3)->Args({64, 32})->Args({256, 64})->Unit(benchmark::kMillisecond);

void BM_GeneratorFull(benchmark::State& state) {
  GeneratorSpec spec;
  spec.image_size = static_cast<int>(state.range(0));
  spec.base_channels = static_cast<int>(state.range(1));
  Generator g(spec);
  const ImageTensor img(spec.image_size, spec.image_size, 3, 0.1f);
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(g, img));
}
BENCHMARK(BM_GeneratorFull)->Args({64, 32})->Args({256, 64})->Unit(benchmark::kMillisecond);

void BM_QuaternionAngle(benchmark::State& state) {
  const Eigen::Quaterniond a(0.3, 0.5, -0.1, 0.8), b(0.9, -0.2, 0.3, 0.1);
  const auto an = a.normalized(), bn = b.normalized();
  for (auto _ : state) benchmark::DoNotOptimize(quaternion_angle(an, bn));
}
BENCHMARK(BM_QuaternionAngle);

}  // namespace
BENCHMARK_MAIN();
