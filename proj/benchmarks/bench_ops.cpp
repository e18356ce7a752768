#include <benchmark/benchmark.h>

#include <random>

#include "biasforge/tensor.hpp"

namespace ad = biasforge::ad;

namespace {

std::vector<float> noise_values(const ad::Shape& shape, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return v;
}

ad::Tensor<float> noise(ad::Shape shape, unsigned seed) {
  auto v = noise_values(shape, seed);
  return ad::Tensor<float>::from(std::move(shape), std::move(v));
}

void BM_Conv2dForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int ch = static_cast<int>(state.range(1));
  const auto x = noise({4, ch, size, size}, 1);
  const auto w = noise({ch, ch, 3, 3}, 2);
  ad::NoGrad no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(x, w, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 4LL * ch * ch * 9 * size * size);
}
BENCHMARK(BM_Conv2dForward)->Args({16, 8})->Args({32, 16})->Args({64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int ch = static_cast<int>(state.range(1));
  const auto x = noise({4, ch, size, size}, 3);
  auto w = ad::Tensor<float>::parameter({ch, ch, 3, 3}, noise_values({ch, ch, 3, 3}, 4));
  for (auto _ : state) {
    const auto loss = ad::sum(ad::square(ad::conv2d(x, w, {1, 1})));
    const std::vector<ad::Tensor<float>> params{w};
    benchmark::DoNotOptimize(ad::grad<float>(loss, params));
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 8})->Args({32, 16});

void BM_StridedConvDoubleBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  auto x = ad::Tensor<float>::parameter({8, 3, size, size}, noise_values({8, 3, size, size}, 5));
  auto w = ad::Tensor<float>::parameter({16, 3, 4, 4}, noise_values({16, 3, 4, 4}, 6));
  const std::vector<ad::Tensor<float>> xs{x}, ws{w};
  for (auto _ : state) {
    const auto out = ad::sum(ad::leaky_relu(ad::conv2d(x, w, {2, 1}), 0.2));
    const auto gx = ad::grad<float>(out, xs, true);
    const auto penalty = ad::sum(ad::square(gx[0]));
    benchmark::DoNotOptimize(ad::grad<float>(penalty, ws));
  }
}
BENCHMARK(BM_StridedConvDoubleBackward)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
