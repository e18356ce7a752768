#pragma once

// Eyeglasses removal: U-Net style generator with an attention blend, a
// PatchGAN discriminator, and least-squares / identity / L1 objectives.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "biasforge/bias.hpp"
#include "biasforge/image.hpp"
#include "biasforge/nn.hpp"
#include "biasforge/random.hpp"
#include "biasforge/tensor.hpp"

namespace biasforge::ergan {

using ad::Tensor;

struct ErganConfig {
  int image_size = 128;
  int channels = 3;
  std::vector<int> encoder_channels{32, 64, 128, 256};  // exactly four stages
  int decoder_channels = 32;                             // width of the last decoder stage
  std::vector<int> disc_channels{32, 64, 128};
  double w_adv = 1.0;
  double w_id = 1.0;
  double w_rec = 10.0;
  double w_mask = 0.0;  // optional supervision of the mask by the known glasses coverage
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Strided 4x4 conv stack with leaky ReLU followed by a stride-1 4x4 conv to
// one channel. 128x128 in -> 15x15 scores, 32x32 in -> 3x3.
template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator(int in_channels, const std::vector<int>& widths, Rng& rng);

  // [N, C, H, W] -> [N, 1, h, w]
  Tensor<T> operator()(const Tensor<T>& x) const;
  // Score-map side length for a square input of `size`; < 1 when too small.
  int output_size(int size) const;

  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

 private:
  int in_channels_;
  nn::ParameterSet<T> params_;
  std::vector<nn::Conv2d<T>> convs_;
  nn::Conv2d<T> score_;
};

struct ForwardOptions {
  std::optional<double> forced_mask;  // replaces the attention mask with a constant
  int zeroed_skip = -1;               // encoder stage (0..2) whose skip tensor is zeroed
};

template <typename T>
struct ErganOutput {
  Tensor<T> y;     // blended result, model range
  Tensor<T> mask;  // [N, 1, H, W] in [0, 1]
  Tensor<T> raw;   // decoder output before blending
};

template <typename T>
class Generator {
 public:
  Generator(const ErganConfig& config, Rng& rng);

  ErganOutput<T> operator()(const Tensor<T>& x, const ForwardOptions& options = {}) const;

  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

 private:
  ErganConfig config_;
  nn::ParameterSet<T> params_;
  std::vector<nn::Conv2d<T>> encoder_;
  std::vector<nn::ConvTranspose2d<T>> decoder_;
  nn::Conv2d<T> attention_;
  nn::Conv2d<T> output_;
};

// Distance between unit-normalized embeddings, in [0, 2].
double identity_loss(const FeatureExtractor& embedder, const Image& a, const Image& b);
// Batch mean of the same distance on model-range tensors.
template <typename T>
Tensor<T> identity_loss(const FeatureExtractor& embedder, const Tensor<T>& a, const Tensor<T>& b);

// mean((real - 1)^2) + mean(fake^2)
template <typename T>
Tensor<T> lsgan_discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);
// mean((fake - 1)^2)
template <typename T>
Tensor<T> lsgan_generator_loss(const Tensor<T>& fake_scores);

template <typename T>
struct GeneratorLoss {
  Tensor<T> total;
  Tensor<T> adversarial;  // unweighted
  Tensor<T> identity;
  Tensor<T> reconstruction;
  Tensor<T> mask;         // undefined unless a mask target was given
};

// Weighted sum of the generator terms given D(y), y and the clean target.
template <typename T>
GeneratorLoss<T> generator_loss(const ErganConfig& config, const FeatureExtractor& embedder,
                                const Tensor<T>& fake_scores, const Tensor<T>& y, const Tensor<T>& x_clean,
                                const Tensor<T>& mask = {}, const Tensor<T>& mask_target = {});

template <typename T>
struct ErganLosses {
  Tensor<T> discriminator;  // on detached fakes
  GeneratorLoss<T> generator;
  ErganOutput<T> output;
};

template <typename T>
ErganLosses<T> ergan_losses(const Generator<T>& generator, const PatchDiscriminator<T>& discriminator,
                            const ErganConfig& config, const FeatureExtractor& embedder,
                            const Tensor<T>& x_glasses, const Tensor<T>& x_clean,
                            const Tensor<T>& mask_target = {});

struct PairBatch {
  Tensor<float> glasses;      // model range
  Tensor<float> clean;        // model range
  Tensor<float> mask_target;  // [N, 1, H, W] glasses coverage in [0, 1]
};

class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual PairBatch sample(Rng& rng, int batch) = 0;
};

// Pairs built on the fly by compositing glasses over clean unit images.
class CompositePairSource final : public PairSource {
 public:
  CompositePairSource(std::vector<Image> clean, int size);
  PairBatch sample(Rng& rng, int batch) override;

 private:
  std::vector<Image> clean_;
  int size_;
};

// Deterministic paired batch from explicit composite seeds.
PairBatch make_pair_batch(std::span<const Image> clean, std::span<const std::uint64_t> seeds, int size);

struct ErganDiagnostics {
  std::int64_t iteration = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
  double adversarial = 0.0;
  double identity = 0.0;
  double reconstruction = 0.0;  // mean |y - x_clean|, model range
  double mask_min = 0.0;
  double mask_max = 0.0;
};

struct ErganTrainState {
  explicit ErganTrainState(const ErganConfig& config,
                           std::shared_ptr<const FeatureExtractor> embedder = stub_extractor());

  ErganConfig config;
  std::shared_ptr<const FeatureExtractor> embedder;
  Rng rng;
  Generator<float> generator;
  PatchDiscriminator<float> discriminator;
  nn::AdamState<float> adam_generator;
  nn::AdamState<float> adam_discriminator;
  std::int64_t iteration = 0;
};

// One discriminator update followed by one generator update.
ErganDiagnostics train_step(ErganTrainState& state, PairSource& source);

// mean |G(x_glasses).y - x_clean| without recording a graph.
double reconstruction_l1(const Generator<float>& generator, const PairBatch& batch);

struct RemovalResult {
  Image output;  // unit range, input size
  Image mask;    // single channel, unit range
};

RemovalResult remove_glasses(const Generator<float>& generator, const ErganConfig& config, const Image& img);

}  // namespace biasforge::ergan
