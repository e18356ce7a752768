#pragma once

// Double-tail enhancement generator with LADE normalization and the
// grayscale-texture (D1) / colour-clarity (D2) patch discriminators.

#include <cstdint>
#include <vector>

#include "biasforge/ergan.hpp"
#include "biasforge/image.hpp"
#include "biasforge/nn.hpp"
#include "biasforge/random.hpp"
#include "biasforge/tensor.hpp"

namespace biasforge::enhance {

using ad::Tensor;

struct EnhanceConfig {
  int work_size = 256;
  int superpixels = 256;
  double edge_threshold = 0.3;
  double blur_sigma = 1.0;
  int slic_iterations = 10;
  int support_channels = 16;
  int main_channels = 32;
  std::vector<int> disc_channels{32, 64, 128};
  double w_d1 = 1.0;
  double w_d2 = 1.0;
  double w_content = 10.0;
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 4;
  double degrade_noise = 0.03;  // noise sigma of the synthetic degradation used for training inputs
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kLadeEpsilon = 1e-5;

// gamma = W_g [mu; sigma] + b_g, beta = W_b [mu; sigma] + b_b over per-sample,
// per-channel spatial statistics; out = gamma * (f - mu) / sigma + beta.
template <typename T>
struct Lade {
  Tensor<T> w_gamma;  // [C, 2C]
  Tensor<T> b_gamma;  // [C]
  Tensor<T> w_beta;   // [C, 2C]
  Tensor<T> b_beta;   // [C]

  struct Affine {
    Tensor<T> gamma;  // [N, C]
    Tensor<T> beta;   // [N, C]
  };

  Affine affine(const Tensor<T>& f) const;
  Tensor<T> operator()(const Tensor<T>& f) const;
};

// Starts as plain instance normalization: W = 0, b_gamma = 1, b_beta = 0.
template <typename T>
Lade<T> make_lade(nn::ParameterSet<T>& params, const std::string& name, int channels);

template <typename T>
struct EnhanceOutput {
  Tensor<T> coarse;
  Tensor<T> refined;
};

template <typename T>
class DoubleTailGenerator {
 public:
  DoubleTailGenerator(const EnhanceConfig& config, Rng& rng);

  // zero_coarse replaces the support-tail output fed to the main tail by zeros.
  EnhanceOutput<T> operator()(const Tensor<T>& x, bool zero_coarse = false) const;

  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

 private:
  struct Block {
    nn::Conv2d<T> conv;
    Lade<T> norm;
  };

  static Tensor<T> run(const std::vector<Block>& blocks, const nn::Conv2d<T>& head, Tensor<T> h);

  EnhanceConfig config_;
  nn::ParameterSet<T> params_;
  std::vector<Block> support_;
  nn::Conv2d<T> support_head_;
  std::vector<Block> main_;
  nn::Conv2d<T> main_head_;
};

template <typename T>
struct Discriminators {
  Discriminators(const EnhanceConfig& config, Rng& rng);

  ergan::PatchDiscriminator<T> d1;  // luma input
  ergan::PatchDiscriminator<T> d2;  // colour input
};

template <typename T>
Tensor<T> d1_texture_scores(const ergan::PatchDiscriminator<T>& d1, const Tensor<T>& img);
template <typename T>
Tensor<T> d2_clarity_scores(const ergan::PatchDiscriminator<T>& d2, const Tensor<T>& img);

// Resize to the working size, edge smoothing, superpixel recolouring.
Image preprocess(const EnhanceConfig& config, const Image& img);

// Seeded training degradation: 2x down/up resampling plus Gaussian noise.
Image degrade(const Image& img, double noise_sigma, std::uint64_t seed);

Image enhance_image(const EnhanceConfig& config, const DoubleTailGenerator<float>& generator, const Image& img);

struct EnhanceBatch {
  Tensor<float> input;  // preprocessed degraded images, model range
  Tensor<float> real;   // clean images, model range
};

// Pool of (preprocessed degraded, clean) pairs prepared once at construction.
class EnhancePairSource {
 public:
  EnhancePairSource(const EnhanceConfig& config, std::vector<Image> clean, std::uint64_t seed);
  EnhanceBatch sample(Rng& rng, int batch) const;

 private:
  std::vector<Image> inputs_;
  std::vector<Image> reals_;
};

struct EnhanceDiagnostics {
  std::int64_t iteration = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
  double adversarial_d1 = 0.0;
  double adversarial_d2 = 0.0;
  double content = 0.0;
};

struct EnhanceTrainState {
  explicit EnhanceTrainState(const EnhanceConfig& config);

  EnhanceConfig config;
  Rng rng;
  DoubleTailGenerator<float> generator;
  Discriminators<float> discriminators;
  nn::AdamState<float> adam_generator;
  nn::AdamState<float> adam_d1;
  nn::AdamState<float> adam_d2;
  std::int64_t iteration = 0;
};

// Least-squares adversarial terms against D1 and D2 plus L1 content loss of
// both tails to the preprocessed input.
EnhanceDiagnostics train_step(EnhanceTrainState& state, const EnhancePairSource& source);

}  // namespace biasforge::enhance
