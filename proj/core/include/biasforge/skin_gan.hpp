#pragma once

// WGAN-GP skin-tone model: image-conditioned generator, critic, Wasserstein
// losses with gradient penalty and the alternating training loop.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "biasforge/image.hpp"
#include "biasforge/nn.hpp"
#include "biasforge/random.hpp"
#include "biasforge/tensor.hpp"

namespace biasforge::skin {

using ad::Tensor;

enum class CriticKind {
  conv,   // strided conv stack + linear score
  dense,  // MLP over flattened pixels; for inputs too small for 4x4 kernels
};

struct SkinGanConfig {
  int image_size = 128;
  int channels = 3;
  int z_dim = 64;
  double lambda_gp = 10.0;
  int n_critic = 5;
  double lr_critic = 1e-4;
  double lr_generator = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int batch_size = 64;
  std::uint64_t seed = 0;

  // Feed raw flattened pixels (not encoder features) into the FC layer.
  bool literal_concat = false;
  std::vector<int> encoder_channels{16, 32, 64};
  int feature_dim = 64;
  int fc_channels = 32;  // channels of the FC output map at image_size/4
  int deconv1_channels = 64;
  int deconv2_channels = 32;

  CriticKind critic_kind = CriticKind::conv;
  std::vector<int> critic_channels{32, 64};
  int dense_hidden = 64;

  // Throws Errc::config_error describing the first violated constraint.
  void validate() const;
};

// G(x, z): x [N, C, S, S] in model range, z [N, z_dim] -> [N, C, S, S] in (-1, 1).
template <typename T>
class Generator {
 public:
  Generator(const SkinGanConfig& config, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& z) const;

  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

 private:
  SkinGanConfig config_;
  nn::ParameterSet<T> params_;
  std::vector<nn::Conv2d<T>> encoder_;
  nn::Linear<T> to_features_;
  nn::Linear<T> fc_;
  nn::ConvTranspose2d<T> deconv1_;
  nn::ConvTranspose2d<T> deconv2_;
  nn::Conv2d<T> to_rgb_;
};

// D(x): [N, C, S, S] -> [N] unbounded scores. No normalization layers.
template <typename T>
class Critic {
 public:
  Critic(const SkinGanConfig& config, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;

  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

 private:
  SkinGanConfig config_;
  nn::ParameterSet<T> params_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::Linear<T>> dense_;
};

template <typename T>
using CriticFn = std::function<Tensor<T>(const Tensor<T>&)>;

// x_hat_i = eps_i * x_i + (1 - eps_i) * x_fake_i; eps_i in [0, 1].
template <typename T>
Tensor<T> interpolate(const Tensor<T>& x, const Tensor<T>& x_fake, std::span<const double> eps);

template <typename T>
struct GradientPenalty {
  Tensor<T> value;                  // lambda * mean_i (||grad_i|| - 1)^2, differentiable in critic params
  std::vector<double> grad_norms;   // ||grad D(x_hat_i)||_2 per sample
};

template <typename T>
GradientPenalty<T> gradient_penalty(const CriticFn<T>& critic, const Tensor<T>& x_hat, double lambda_gp);

// mean(fake) - mean(real) + penalty
template <typename T>
Tensor<T> wasserstein_critic_objective(const Tensor<T>& scores_real, const Tensor<T>& scores_fake,
                                       const Tensor<T>& penalty);

template <typename T>
struct CriticLoss {
  Tensor<T> total;
  Tensor<T> penalty;
  std::vector<double> grad_norms;
  double wasserstein_estimate = 0.0;  // mean D(real) - mean D(fake)
};

template <typename T>
CriticLoss<T> critic_loss(const CriticFn<T>& critic, const Tensor<T>& x_real, const Tensor<T>& x_fake,
                          double lambda_gp, std::span<const double> eps);

// -mean(scores_fake)
template <typename T>
Tensor<T> generator_loss(const Tensor<T>& scores_fake);

// Exact 1-D W1 between equal-size empirical samples via order statistics.
double quantile_w1_1d(std::span<const double> samples_a, std::span<const double> samples_b);

// [N, z_dim] standard normal draws.
template <typename T>
Tensor<T> sample_noise(Rng& rng, int batch, int z_dim);

// Source of real model-range training batches.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual Tensor<float> sample(Rng& rng, int batch) = 0;
};

// Draws uniformly from a fixed pool of unit-range images, optionally
// augmenting online, resizing to `size`, and mapping to model range.
class ImagePoolSource final : public ImageSource {
 public:
  ImagePoolSource(std::vector<Image> pool, int size, bool augment);
  Tensor<float> sample(Rng& rng, int batch) override;

 private:
  std::vector<Image> pool_;
  int size_;
  bool augment_;
};

struct SkinDiagnostics {
  std::int64_t iteration = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double gradient_penalty = 0.0;
  double mean_grad_norm = 0.0;  // over all interpolates of this step's critic updates
  double wasserstein_estimate = 0.0;
};

struct SkinTrainState {
  explicit SkinTrainState(const SkinGanConfig& config);

  SkinGanConfig config;
  Rng rng;
  Generator<float> generator;
  Critic<float> critic;
  nn::AdamState<float> adam_generator;
  nn::AdamState<float> adam_critic;
  std::int64_t iteration = 0;
  std::int64_t critic_steps = 0;
  std::int64_t generator_steps = 0;
};

// n_critic critic updates followed by one generator update. Throws
// Errc::non_finite (with the iteration index) on a NaN/inf loss.
SkinDiagnostics train_step(SkinTrainState& state, ImageSource& source);

// Inference: unit image in, unit image of the same size out.
Image recolor(const Generator<float>& generator, const SkinGanConfig& config, const Image& img,
              std::uint64_t z_seed);

}  // namespace biasforge::skin
