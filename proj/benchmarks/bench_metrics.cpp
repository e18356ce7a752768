#include <benchmark/benchmark.h>

#include <random>

#include "biasforge/metrics.hpp"
#include "biasforge/preprocess.hpp"

using biasforge::Image;
using biasforge::RangeTag;

namespace {

Image noise_image(int size, int channels, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(static_cast<std::size_t>(size) * size * channels);
  for (auto& v : px) v = u(rng);
  return Image(size, size, channels, RangeTag::unit, std::move(px));
}

void BM_Ssim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Image a = noise_image(size, 3, 1), b = noise_image(size, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::ssim(a, b));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Ssim)->Arg(16)->Arg(128)->Arg(256);

void BM_Psnr(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Image a = noise_image(size, 3, 3), b = noise_image(size, 3, 4);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::psnr(a, b));
}
BENCHMARK(BM_Psnr)->Arg(128)->Arg(256);

void BM_Slic(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Image a = noise_image(size, 3, 5);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::slic_superpixels(a, static_cast<int>(state.range(1))));
}
BENCHMARK(BM_Slic)->Args({64, 64})->Args({128, 256})->Unit(benchmark::kMillisecond);

void BM_EdgeSmooth(benchmark::State& state) {
  const Image a = noise_image(static_cast<int>(state.range(0)), 3, 6);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::edge_smooth(a, 0.3, 1.0));
}
BENCHMARK(BM_EdgeSmooth)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
