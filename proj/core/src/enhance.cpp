#include "biasforge/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "biasforge/error.hpp"
#include "biasforge/preprocess.hpp"

namespace biasforge::enhance {

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(Errc::config_error, "enhance: " + what); }

template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
  return ad::mean(ad::abs(ad::sub(a, b)));
}

}  // namespace

void EnhanceConfig::validate() const {
  if (work_size < 4 || work_size % 4 != 0) config_error("work_size must be a positive multiple of 4");
  if (superpixels < 1) config_error("superpixel count must be at least 1");
  if (!(edge_threshold > 0.0 && edge_threshold < 1.0)) config_error("edge threshold must be in (0, 1)");
  if (!(blur_sigma > 0.0)) config_error("blur sigma must be positive");
  if (slic_iterations < 0) config_error("slic iterations must be non-negative");
  if (support_channels < 1 || main_channels < 1) config_error("tail widths must be positive");
  if (disc_channels.empty()) config_error("discriminator needs at least one stage");
  if (!(w_d1 >= 0.0) || !(w_d2 >= 0.0) || !(w_content >= 0.0)) config_error("loss weights must be non-negative");
  if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) config_error("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    config_error("Adam betas must be in [0, 1)");
  if (batch_size < 1) config_error("batch_size must be positive");
  if (!(degrade_noise >= 0.0)) config_error("degrade noise must be non-negative");
}

// ---- LADE ----------------------------------------------------------------------

template <typename T>
typename Lade<T>::Affine Lade<T>::affine(const Tensor<T>& f) const {
  const int n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
  const auto mu = ad::spatial_mean(f);
  const auto centered = ad::sub(f, ad::spatial_expand(mu, h, w));
  const auto sigma = ad::sqrt(ad::add_scalar(ad::spatial_mean(ad::square(centered)), kLadeEpsilon));
  auto stats = ad::concat_channels<T>({ad::reshape(mu, {n, c, 1, 1}), ad::reshape(sigma, {n, c, 1, 1})});
  stats = ad::reshape(stats, {n, 2 * c});
  return {ad::linear(stats, w_gamma, b_gamma), ad::linear(stats, w_beta, b_beta)};
}

template <typename T>
Tensor<T> Lade<T>::operator()(const Tensor<T>& f) const {
  if (f.rank() != 4 || f.dim(1) != b_gamma.dim(0))
    fail(Errc::shape_mismatch, "lade input " + ad::shape_string(f.shape()));
  const int h = f.dim(2), w = f.dim(3);
  const auto mu = ad::spatial_mean(f);
  const auto centered = ad::sub(f, ad::spatial_expand(mu, h, w));
  const auto sigma = ad::sqrt(ad::add_scalar(ad::spatial_mean(ad::square(centered)), kLadeEpsilon));
  const auto normalized = ad::mul(centered, ad::spatial_expand(ad::reciprocal_or_zero(sigma), h, w));
  const auto ab = affine(f);
  return ad::add(ad::mul(ad::spatial_expand(ab.gamma, h, w), normalized), ad::spatial_expand(ab.beta, h, w));
}

template <typename T>
Lade<T> make_lade(nn::ParameterSet<T>& params, const std::string& name, int channels) {
  const std::size_t c = static_cast<std::size_t>(channels);
  Lade<T> out;
  out.w_gamma = params.add(name + ".w_gamma", {channels, 2 * channels}, std::vector<T>(2 * c * c, T(0)));
  out.b_gamma = params.add(name + ".b_gamma", {channels}, std::vector<T>(c, T(1)));
  out.w_beta = params.add(name + ".w_beta", {channels, 2 * channels}, std::vector<T>(2 * c * c, T(0)));
  out.b_beta = params.add(name + ".b_beta", {channels}, std::vector<T>(c, T(0)));
  return out;
}

// ---- generator --------------------------------------------------------------------

template <typename T>
DoubleTailGenerator<T>::DoubleTailGenerator(const EnhanceConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  int in = 3;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "support" + std::to_string(i);
    support_.push_back({nn::make_conv(params_, name + ".conv", in, config_.support_channels, 3, 1, 0, rng, 1),
                        make_lade(params_, name + ".lade", config_.support_channels)});
    in = config_.support_channels;
  }
  support_head_ = nn::make_conv(params_, "support_head", in, 3, 3, 1, 0, rng, 1);
  in = 6;
  for (int i = 0; i < 4; ++i) {
    const std::string name = "main" + std::to_string(i);
    main_.push_back({nn::make_conv(params_, name + ".conv", in, config_.main_channels, 3, 1, 0, rng, 1),
                     make_lade(params_, name + ".lade", config_.main_channels)});
    in = config_.main_channels;
  }
  main_head_ = nn::make_conv(params_, "main_head", in, 3, 3, 1, 0, rng, 1);
}

template <typename T>
Tensor<T> DoubleTailGenerator<T>::run(const std::vector<Block>& blocks, const nn::Conv2d<T>& head, Tensor<T> h) {
  for (const auto& b : blocks) h = ad::relu(b.norm(b.conv(h)));
  return ad::tanh(head(h));
}

template <typename T>
EnhanceOutput<T> DoubleTailGenerator<T>::operator()(const Tensor<T>& x, bool zero_coarse) const {
  if (x.rank() != 4 || x.dim(1) != 3) fail(Errc::shape_mismatch, "enhance input " + ad::shape_string(x.shape()));
  if (x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0 || x.dim(2) < 4 || x.dim(3) < 4)
    fail(Errc::shape_mismatch, "enhance input size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                                   " is not divisible by 4");
  EnhanceOutput<T> out;
  out.coarse = run(support_, support_head_, x);
  const auto fed = zero_coarse ? Tensor<T>::zeros(out.coarse.shape()) : out.coarse;
  out.refined = run(main_, main_head_, ad::concat_channels<T>({fed, x}));
  return out;
}

template <typename T>
Discriminators<T>::Discriminators(const EnhanceConfig& config, Rng& rng)
    : d1(1, config.disc_channels, rng), d2(3, config.disc_channels, rng) {}

template <typename T>
Tensor<T> d1_texture_scores(const ergan::PatchDiscriminator<T>& d1, const Tensor<T>& img) {
  return d1(ad::luma(img));
}

template <typename T>
Tensor<T> d2_clarity_scores(const ergan::PatchDiscriminator<T>& d2, const Tensor<T>& img) {
  return d2(img);
}

// ---- images -------------------------------------------------------------------------

Image preprocess(const EnhanceConfig& config, const Image& img) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "enhance preprocessing expects a unit-range image");
  if (img.channels() != 3) fail(Errc::shape_mismatch, "enhance preprocessing expects a 3-channel image");
  const int s = config.work_size;
  Image work = (img.height() == s && img.width() == s) ? img : resize_bilinear(img, s, s);
  work = edge_smooth(work, config.edge_threshold, config.blur_sigma);
  const int k = std::min(config.superpixels, s * s);
  return slic_superpixels(work, k, config.slic_iterations).recolored;
}

Image degrade(const Image& img, double noise_sigma, std::uint64_t seed) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "degrade expects a unit-range image");
  const int h = img.height(), w = img.width();
  Image low = resize_bilinear(resize_bilinear(img, std::max(1, h / 2), std::max(1, w / 2)), h, w);
  if (noise_sigma == 0.0) return low;
  Rng rng(seed);
  std::vector<double> px(low.pixels().begin(), low.pixels().end());
  for (auto& v : px) v += noise_sigma * standard_normal(rng);
  return make_clamped(h, w, img.channels(), RangeTag::unit, std::move(px));
}

Image enhance_image(const EnhanceConfig& config, const DoubleTailGenerator<float>& generator, const Image& img) {
  const Image pre = preprocess(config, img);
  ad::NoGrad no_grad;
  const auto out = generator(to_tensor<float>(to_model_range(pre)));
  Image refined = from_model_range(from_tensor(out.refined, 0, RangeTag::model));
  if (refined.height() != img.height() || refined.width() != img.width())
    refined = resize_bilinear(refined, img.height(), img.width());
  return refined;
}

EnhancePairSource::EnhancePairSource(const EnhanceConfig& config, std::vector<Image> clean, std::uint64_t seed) {
  config.validate();
  if (clean.empty()) fail(Errc::empty_input, "enhance source has no images");
  const int s = config.work_size;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Image real = (clean[i].height() == s && clean[i].width() == s) ? clean[i] : resize_bilinear(clean[i], s, s);
    inputs_.push_back(to_model_range(preprocess(config, degrade(real, config.degrade_noise, mix64(seed + i)))));
    reals_.push_back(to_model_range(real));
  }
}

EnhanceBatch EnhancePairSource::sample(Rng& rng, int batch) const {
  std::uniform_int_distribution<std::size_t> pick(0, inputs_.size() - 1);
  std::vector<Image> in, real;
  for (int i = 0; i < batch; ++i) {
    const std::size_t idx = pick(rng);
    in.push_back(inputs_[idx]);
    real.push_back(reals_[idx]);
  }
  return {to_tensor<float>(in), to_tensor<float>(real)};
}

// ---- training -------------------------------------------------------------------------

EnhanceTrainState::EnhanceTrainState(const EnhanceConfig& cfg)
    : config(cfg), rng(cfg.seed), generator(cfg, rng), discriminators(cfg, rng) {
  if (discriminators.d2.output_size(cfg.work_size) < 1)
    config_error("work_size " + std::to_string(cfg.work_size) + " is too small for the discriminators");
}

EnhanceDiagnostics train_step(EnhanceTrainState& state, const EnhancePairSource& source) {
  const auto& cfg = state.config;
  const auto batch = source.sample(state.rng, cfg.batch_size);
  const auto& d1 = state.discriminators.d1;
  const auto& d2 = state.discriminators.d2;

  const auto out = state.generator(batch.input);
  const auto fake = out.refined.detach();
  const auto d1_loss = ergan::lsgan_discriminator_loss(d1_texture_scores(d1, batch.real), d1_texture_scores(d1, fake));
  const auto d2_loss = ergan::lsgan_discriminator_loss(d2_clarity_scores(d2, batch.real), d2_clarity_scores(d2, fake));

  const auto adv1 = ergan::lsgan_generator_loss(d1_texture_scores(d1, out.refined));
  const auto adv2 = ergan::lsgan_generator_loss(d2_clarity_scores(d2, out.refined));
  const auto content = ad::add(l1(out.refined, batch.input), l1(out.coarse, batch.input));
  const auto g_loss = ad::add(ad::add(ad::scale(adv1, cfg.w_d1), ad::scale(adv2, cfg.w_d2)),
                              ad::scale(content, cfg.w_content));

  EnhanceDiagnostics diag;
  diag.iteration = state.iteration;
  diag.discriminator_loss = d1_loss.item() + d2_loss.item();
  diag.generator_loss = g_loss.item();
  diag.adversarial_d1 = adv1.item();
  diag.adversarial_d2 = adv2.item();
  diag.content = content.item();
  if (!std::isfinite(diag.discriminator_loss) || !std::isfinite(diag.generator_loss))
    fail(Errc::non_finite, "non-finite enhance loss at step " + std::to_string(state.iteration));

  const auto& p1 = d1.params().tensors();
  const auto& p2 = d2.params().tensors();
  const auto& pg = state.generator.params().tensors();
  const auto g1 = ad::grad(d1_loss, std::span<const Tensor<float>>(p1));
  const auto g2 = ad::grad(d2_loss, std::span<const Tensor<float>>(p2));
  const auto gg = ad::grad(g_loss, std::span<const Tensor<float>>(pg));
  const nn::AdamOptions d_opt{cfg.lr_discriminator, cfg.adam_beta1, cfg.adam_beta2};
  nn::adam_update<float>(p1, g1, state.adam_d1, d_opt);
  nn::adam_update<float>(p2, g2, state.adam_d2, d_opt);
  nn::adam_update<float>(pg, gg, state.adam_generator, {cfg.lr_generator, cfg.adam_beta1, cfg.adam_beta2});
  ++state.iteration;
  return diag;
}

#define BIASFORGE_INSTANTIATE(T)                                                                        \
  template struct Lade<T>;                                                                              \
  template Lade<T> make_lade(nn::ParameterSet<T>&, const std::string&, int);                            \
  template class DoubleTailGenerator<T>;                                                                \
  template struct Discriminators<T>;                                                                    \
  template Tensor<T> d1_texture_scores(const ergan::PatchDiscriminator<T>&, const Tensor<T>&);          \
  template Tensor<T> d2_clarity_scores(const ergan::PatchDiscriminator<T>&, const Tensor<T>&);

BIASFORGE_INSTANTIATE(float)
BIASFORGE_INSTANTIATE(double)

#undef BIASFORGE_INSTANTIATE

}  // namespace biasforge::enhance
