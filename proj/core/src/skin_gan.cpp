#include "biasforge/skin_gan.hpp"

#include <algorithm>
#include <cmath>

#include "biasforge/dataset.hpp"
#include "biasforge/error.hpp"

namespace biasforge::skin {

namespace {

constexpr double kLeak = 0.2;

[[noreturn]] void config_error(const std::string& what) { fail(Errc::config_error, "skin model: " + what); }

}  // namespace

void SkinGanConfig::validate() const {
  if (image_size < 1) config_error("image_size must be positive");
  if (channels != 1 && channels != 3) config_error("channels must be 1 or 3");
  if (z_dim < 1) config_error("z_dim must be positive");
  if (!(lambda_gp >= 0.0)) config_error("lambda_gp must be non-negative");
  if (n_critic < 1) config_error("n_critic must be at least 1");
  if (!(lr_critic > 0.0) || !(lr_generator > 0.0)) config_error("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    config_error("Adam betas must be in [0, 1)");
  if (batch_size < 2) config_error("batch_size must be at least 2");
  if (feature_dim < 1 || fc_channels < 1 || deconv1_channels < 1 || deconv2_channels < 1)
    config_error("layer widths must be positive");
  if (critic_kind == CriticKind::conv) {
    if (critic_channels.empty()) config_error("conv critic needs at least one stage");
    const int div = 1 << critic_channels.size();
    if (image_size % div != 0)
      config_error("image_size must be divisible by " + std::to_string(div) + " for the conv critic");
  } else if (dense_hidden < 1) {
    config_error("dense_hidden must be positive");
  }
}

// ---- generator -------------------------------------------------------------

namespace {

void validate_generator(const SkinGanConfig& c) {
  c.validate();
  if (c.image_size % 4 != 0 || c.image_size < 4) config_error("generator needs image_size divisible by 4");
  if (!c.literal_concat) {
    const int div = 1 << c.encoder_channels.size();
    if (c.encoder_channels.empty() || c.image_size % div != 0)
      config_error("image_size must be divisible by " + std::to_string(div) + " for the encoder");
  }
}

}  // namespace

template <typename T>
Generator<T>::Generator(const SkinGanConfig& config, Rng& rng) : config_(config) {
  validate_generator(config_);
  const int s = config_.image_size;
  int flat = 0;
  if (config_.literal_concat) {
    flat = config_.channels * s * s;
  } else {
    int in = config_.channels;
    int size = s;
    for (std::size_t i = 0; i < config_.encoder_channels.size(); ++i) {
      const int out = config_.encoder_channels[i];
      encoder_.push_back(nn::make_conv(params_, "enc" + std::to_string(i), in, out, 4, 2, 1, rng));
      in = out;
      size /= 2;
    }
    to_features_ = nn::make_linear(params_, "enc_fc", in * size * size, config_.feature_dim, rng);
    flat = config_.feature_dim;
  }
  const int q = s / 4;
  fc_ = nn::make_linear(params_, "fc", flat + config_.z_dim, config_.fc_channels * q * q, rng);
  deconv1_ = nn::make_conv_transpose(params_, "deconv1", config_.fc_channels, config_.deconv1_channels, 4, 2, 1, rng);
  deconv2_ = nn::make_conv_transpose(params_, "deconv2", config_.deconv1_channels, config_.deconv2_channels, 4, 2, 1, rng);
  to_rgb_ = nn::make_conv(params_, "to_rgb", config_.deconv2_channels, config_.channels, 3, 1, 1, rng);
}

template <typename T>
Tensor<T> Generator<T>::operator()(const Tensor<T>& x, const Tensor<T>& z) const {
  const int s = config_.image_size;
  if (x.rank() != 4 || x.dim(1) != config_.channels || x.dim(2) != s || x.dim(3) != s)
    fail(Errc::shape_mismatch, "generator input " + ad::shape_string(x.shape()) + " does not match image_size " +
                                   std::to_string(s));
  const int n = x.dim(0);
  if (z.rank() != 2 || z.dim(0) != n || z.dim(1) != config_.z_dim)
    fail(Errc::shape_mismatch, "noise " + ad::shape_string(z.shape()) + " does not match batch/z_dim");

  Tensor<T> features;
  if (config_.literal_concat) {
    features = ad::reshape(x, {n, config_.channels * s * s});
  } else {
    Tensor<T> h = x;
    for (const auto& conv : encoder_) h = ad::leaky_relu(conv(h), kLeak);
    h = ad::reshape(h, {n, static_cast<int>(h.size() / n)});
    features = ad::leaky_relu(to_features_(h), kLeak);
  }
  const int f = features.dim(1);
  Tensor<T> joined = ad::concat_channels<T>({ad::reshape(features, {n, f, 1, 1}),
                                             ad::reshape(z, {n, config_.z_dim, 1, 1})});
  joined = ad::reshape(joined, {n, f + config_.z_dim});
  const int q = s / 4;
  Tensor<T> h = ad::reshape(ad::relu(fc_(joined)), {n, config_.fc_channels, q, q});
  h = ad::relu(deconv1_(h));
  h = ad::relu(deconv2_(h));
  return ad::tanh(to_rgb_(h));
}

// ---- critic ------------------------------------------------------------------

template <typename T>
Critic<T>::Critic(const SkinGanConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int s = config_.image_size;
  if (config_.critic_kind == CriticKind::conv) {
    int in = config_.channels;
    int size = s;
    for (std::size_t i = 0; i < config_.critic_channels.size(); ++i) {
      const int out = config_.critic_channels[i];
      convs_.push_back(nn::make_conv(params_, "conv" + std::to_string(i), in, out, 4, 2, 1, rng));
      in = out;
      size /= 2;
    }
    dense_.push_back(nn::make_linear(params_, "score", in * size * size, 1, rng));
  } else {
    const int flat = config_.channels * s * s;
    dense_.push_back(nn::make_linear(params_, "dense0", flat, config_.dense_hidden, rng));
    dense_.push_back(nn::make_linear(params_, "dense1", config_.dense_hidden, config_.dense_hidden, rng));
    dense_.push_back(nn::make_linear(params_, "score", config_.dense_hidden, 1, rng));
  }
}

template <typename T>
Tensor<T> Critic<T>::operator()(const Tensor<T>& x) const {
  const int s = config_.image_size;
  if (x.rank() != 4 || x.dim(1) != config_.channels || x.dim(2) != s || x.dim(3) != s)
    fail(Errc::shape_mismatch, "critic input " + ad::shape_string(x.shape()) + " does not match image_size " +
                                   std::to_string(s));
  const int n = x.dim(0);
  Tensor<T> h = x;
  for (const auto& conv : convs_) h = ad::leaky_relu(conv(h), kLeak);
  h = ad::reshape(h, {n, static_cast<int>(h.size() / n)});
  for (std::size_t i = 0; i + 1 < dense_.size(); ++i) h = ad::leaky_relu(dense_[i](h), kLeak);
  return ad::reshape(dense_.back()(h), {n});
}

// ---- losses --------------------------------------------------------------------

template <typename T>
Tensor<T> interpolate(const Tensor<T>& x, const Tensor<T>& x_fake, std::span<const double> eps) {
  if (x.shape() != x_fake.shape())
    fail(Errc::shape_mismatch, "interpolate: real " + ad::shape_string(x.shape()) + " vs fake " +
                                   ad::shape_string(x_fake.shape()));
  if (x.rank() < 1 || eps.size() != static_cast<std::size_t>(x.dim(0)))
    fail(Errc::shape_mismatch, "interpolate: need one epsilon per sample");
  std::vector<T> e(eps.size()), one_minus(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] >= 0.0 && eps[i] <= 1.0)) fail(Errc::invalid_argument, "interpolate: epsilon outside [0, 1]");
    e[i] = static_cast<T>(eps[i]);
    one_minus[i] = static_cast<T>(1.0 - eps[i]);
  }
  const int n = x.dim(0);
  return ad::add(ad::mul_per_sample(x, Tensor<T>::from({n}, e)),
                 ad::mul_per_sample(x_fake, Tensor<T>::from({n}, one_minus)));
}

template <typename T>
GradientPenalty<T> gradient_penalty(const CriticFn<T>& critic, const Tensor<T>& x_hat, double lambda_gp) {
  if (x_hat.rank() < 1 || x_hat.dim(0) < 1) fail(Errc::empty_input, "gradient_penalty: empty batch");
  ad::GradModeGuard recording(true);
  auto leaf = Tensor<T>::parameter(x_hat.shape(), std::vector<T>(x_hat.data().begin(), x_hat.data().end()));
  // Samples are independent, so d(sum_i D(x_i))/dx_i = grad D(x_i).
  auto total = ad::sum(critic(leaf));
  auto input_grad = ad::grad(total, std::span<const Tensor<T>>(&leaf, 1), /*create_graph=*/true)[0];
  for (T v : input_grad.data())
    if (!std::isfinite(v)) fail(Errc::non_finite, "gradient_penalty: non-finite critic gradient");
  auto norms = ad::sqrt(ad::sum_per_sample(ad::square(input_grad)));
  GradientPenalty<T> out;
  out.value = ad::scale(ad::mean(ad::square(ad::add_scalar(norms, -1.0))), lambda_gp);
  out.grad_norms.assign(norms.data().begin(), norms.data().end());
  return out;
}

template <typename T>
Tensor<T> wasserstein_critic_objective(const Tensor<T>& scores_real, const Tensor<T>& scores_fake,
                                       const Tensor<T>& penalty) {
  if (scores_real.size() == 0 || scores_fake.size() == 0) fail(Errc::empty_input, "critic loss: empty batch");
  if (scores_real.size() != scores_fake.size()) fail(Errc::shape_mismatch, "critic loss: batch sizes differ");
  return ad::add(ad::sub(ad::mean(scores_fake), ad::mean(scores_real)), ad::reshape(penalty, {}));
}

template <typename T>
CriticLoss<T> critic_loss(const CriticFn<T>& critic, const Tensor<T>& x_real, const Tensor<T>& x_fake,
                          double lambda_gp, std::span<const double> eps) {
  if (x_real.rank() < 1 || x_real.dim(0) == 0) fail(Errc::empty_input, "critic loss: empty batch");
  if (x_real.shape() != x_fake.shape()) fail(Errc::shape_mismatch, "critic loss: real and fake batches differ");
  CriticLoss<T> out;
  auto real = critic(x_real);
  auto fake = critic(x_fake);
  if (lambda_gp > 0.0) {
    auto gp = gradient_penalty(critic, interpolate(x_real.detach(), x_fake.detach(), eps), lambda_gp);
    out.penalty = gp.value;
    out.grad_norms = std::move(gp.grad_norms);
  } else {
    out.penalty = Tensor<T>::zeros({});
  }
  out.total = wasserstein_critic_objective(real, fake, out.penalty);
  double mr = 0.0, mf = 0.0;
  for (T v : real.data()) mr += v;
  for (T v : fake.data()) mf += v;
  out.wasserstein_estimate = mr / real.size() - mf / fake.size();
  return out;
}

template <typename T>
Tensor<T> generator_loss(const Tensor<T>& scores_fake) {
  if (scores_fake.size() == 0) fail(Errc::empty_input, "generator loss: empty batch");
  return ad::neg(ad::mean(scores_fake));
}

double quantile_w1_1d(std::span<const double> samples_a, std::span<const double> samples_b) {
  if (samples_a.size() != samples_b.size())
    fail(Errc::invalid_argument, "quantile_w1_1d needs equal sample counts");
  if (samples_a.empty()) fail(Errc::empty_input, "quantile_w1_1d needs samples");
  std::vector<double> a(samples_a.begin(), samples_a.end());
  std::vector<double> b(samples_b.begin(), samples_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

template <typename T>
Tensor<T> sample_noise(Rng& rng, int batch, int z_dim) {
  std::vector<T> values(static_cast<std::size_t>(batch) * z_dim);
  for (auto& v : values) v = static_cast<T>(standard_normal(rng));
  return Tensor<T>::from({batch, z_dim}, std::move(values));
}

// ---- training -------------------------------------------------------------------

ImagePoolSource::ImagePoolSource(std::vector<Image> pool, int size, bool augment)
    : pool_(std::move(pool)), size_(size), augment_(augment) {
  if (pool_.empty()) fail(Errc::empty_input, "image source has no images");
}

Tensor<float> ImagePoolSource::sample(Rng& rng, int batch) {
  std::vector<Image> picked;
  picked.reserve(static_cast<std::size_t>(batch));
  std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
  for (int i = 0; i < batch; ++i) {
    Image img = pool_[pick(rng)];
    if (augment_) img = biasforge::augment(img, rng());
    if (img.height() != size_ || img.width() != size_) img = resize_bilinear(img, size_, size_);
    picked.push_back(to_model_range(img));
  }
  return to_tensor<float>(picked);
}

SkinTrainState::SkinTrainState(const SkinGanConfig& cfg)
    : config(cfg), rng(cfg.seed), generator(cfg, rng), critic(cfg, rng) {}

namespace {

void require_finite(double v, const char* what, std::int64_t iteration) {
  if (!std::isfinite(v))
    fail(Errc::non_finite, std::string("non-finite ") + what + " at step " + std::to_string(iteration));
}

}  // namespace

SkinDiagnostics train_step(SkinTrainState& state, ImageSource& source) {
  const auto& cfg = state.config;
  const int n = cfg.batch_size;
  const nn::AdamOptions critic_opt{cfg.lr_critic, cfg.adam_beta1, cfg.adam_beta2};
  const nn::AdamOptions gen_opt{cfg.lr_generator, cfg.adam_beta1, cfg.adam_beta2};
  CriticFn<float> critic = [&](const Tensor<float>& x) { return state.critic(x); };

  SkinDiagnostics diag;
  diag.iteration = state.iteration;
  double norm_total = 0.0;
  std::size_t norm_count = 0;
  for (int k = 0; k < cfg.n_critic; ++k) {
    Tensor<float> real = source.sample(state.rng, n);
    Tensor<float> z = sample_noise<float>(state.rng, n, cfg.z_dim);
    Tensor<float> fake;
    {
      ad::NoGrad no_grad;
      fake = state.generator(real, z);
    }
    std::vector<double> eps(static_cast<std::size_t>(n));
    for (auto& e : eps) e = uniform01(state.rng);
    auto loss = critic_loss(critic, real, fake, cfg.lambda_gp, eps);
    require_finite(loss.total.item(), "critic loss", state.iteration);
    auto grads = ad::grad(loss.total, std::span<const Tensor<float>>(state.critic.params().tensors()));
    nn::adam_update<float>(state.critic.params().tensors(), grads, state.adam_critic, critic_opt);
    ++state.critic_steps;

    diag.critic_loss = loss.total.item();
    diag.gradient_penalty = loss.penalty.item();
    diag.wasserstein_estimate = loss.wasserstein_estimate;
    for (double g : loss.grad_norms) norm_total += g;
    norm_count += loss.grad_norms.size();
  }
  diag.mean_grad_norm = norm_count ? norm_total / static_cast<double>(norm_count) : 0.0;

  Tensor<float> real = source.sample(state.rng, n);
  Tensor<float> z = sample_noise<float>(state.rng, n, cfg.z_dim);
  auto lg = generator_loss(state.critic(state.generator(real, z)));
  require_finite(lg.item(), "generator loss", state.iteration);
  auto grads = ad::grad(lg, std::span<const Tensor<float>>(state.generator.params().tensors()));
  nn::adam_update<float>(state.generator.params().tensors(), grads, state.adam_generator, gen_opt);
  ++state.generator_steps;
  diag.generator_loss = lg.item();

  ++state.iteration;
  return diag;
}

Image recolor(const Generator<float>& generator, const SkinGanConfig& config, const Image& img,
              std::uint64_t z_seed) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "recolor expects a unit-range image");
  if (img.channels() != config.channels) fail(Errc::shape_mismatch, "recolor: channel count differs from model");
  const int s = config.image_size;
  Image input = (img.height() == s && img.width() == s) ? img : resize_bilinear(img, s, s);
  Rng rng(z_seed);
  ad::NoGrad no_grad;
  auto out = generator(to_tensor<float>(to_model_range(input)), sample_noise<float>(rng, 1, config.z_dim));
  Image result = from_model_range(from_tensor(out, 0, RangeTag::model));
  if (result.height() != img.height() || result.width() != img.width())
    result = resize_bilinear(result, img.height(), img.width());
  return result;
}

#define BIASFORGE_INSTANTIATE(T)                                                                         \
  template class Generator<T>;                                                                           \
  template class Critic<T>;                                                                              \
  template Tensor<T> interpolate(const Tensor<T>&, const Tensor<T>&, std::span<const double>);           \
  template GradientPenalty<T> gradient_penalty(const CriticFn<T>&, const Tensor<T>&, double);            \
  template Tensor<T> wasserstein_critic_objective(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template CriticLoss<T> critic_loss(const CriticFn<T>&, const Tensor<T>&, const Tensor<T>&, double,     \
                                     std::span<const double>);                                           \
  template Tensor<T> generator_loss(const Tensor<T>&);                                                   \
  template Tensor<T> sample_noise(Rng&, int, int);

BIASFORGE_INSTANTIATE(float)
BIASFORGE_INSTANTIATE(double)

#undef BIASFORGE_INSTANTIATE

}  // namespace biasforge::skin
