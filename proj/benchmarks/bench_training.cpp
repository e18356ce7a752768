#include <benchmark/benchmark.h>

#include "biasforge/dataset.hpp"
#include "biasforge/enhance.hpp"
#include "biasforge/ergan.hpp"
#include "biasforge/skin_gan.hpp"

namespace {

std::vector<biasforge::Image> faces(int n, int size) {
  std::vector<biasforge::Image> out;
  for (int i = 0; i < n; ++i) {
    biasforge::SyntheticFaceSpec spec;
    spec.skin_rgb = {0.3 + 0.08 * i, 0.22 + 0.06 * i, 0.18 + 0.05 * i};
    spec.has_glasses = false;
    spec.seed = i;
    out.push_back(biasforge::generate_synthetic_face(spec, size, size));
  }
  return out;
}

void BM_SkinTrainStep(benchmark::State& state) {
  biasforge::skin::SkinGanConfig cfg;
  cfg.image_size = 16;
  cfg.z_dim = 8;
  cfg.encoder_channels = {8, 16};
  cfg.feature_dim = 16;
  cfg.fc_channels = 8;
  cfg.deconv1_channels = 16;
  cfg.deconv2_channels = 8;
  cfg.critic_channels = {16, 32};
  cfg.batch_size = static_cast<int>(state.range(0));
  biasforge::skin::ImagePoolSource source(faces(8, 16), 16, true);
  biasforge::skin::SkinTrainState train(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::skin::train_step(train, source));
}
BENCHMARK(BM_SkinTrainStep)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ErganTrainStep(benchmark::State& state) {
  biasforge::ergan::ErganConfig cfg;
  cfg.image_size = 32;
  cfg.encoder_channels = {4, 8, 8, 8};
  cfg.decoder_channels = 4;
  cfg.disc_channels = {4, 8, 8};
  cfg.batch_size = 2;
  biasforge::ergan::CompositePairSource source(faces(8, 32), 32);
  biasforge::ergan::ErganTrainState train(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::ergan::train_step(train, source));
}
BENCHMARK(BM_ErganTrainStep)->Unit(benchmark::kMillisecond);

void BM_EnhanceTrainStep(benchmark::State& state) {
  biasforge::enhance::EnhanceConfig cfg;
  cfg.work_size = 32;
  cfg.superpixels = 64;
  cfg.support_channels = 4;
  cfg.main_channels = 6;
  cfg.disc_channels = {4, 8};
  cfg.batch_size = 2;
  const biasforge::enhance::EnhancePairSource source(cfg, faces(4, 32), 1);
  biasforge::enhance::EnhanceTrainState train(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(biasforge::enhance::train_step(train, source));
}
BENCHMARK(BM_EnhanceTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
