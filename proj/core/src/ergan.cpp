#include "biasforge/ergan.hpp"

#include <algorithm>
#include <cmath>

#include "biasforge/dataset.hpp"
#include "biasforge/error.hpp"

namespace biasforge::ergan {

namespace {

constexpr double kLeak = 0.2;

[[noreturn]] void config_error(const std::string& what) { fail(Errc::config_error, "ergan: " + what); }

int conv_out(int size, int kernel, int stride, int padding) {
  const int span = size + 2 * padding - kernel;
  return span < 0 ? 0 : span / stride + 1;
}

template <typename T>
Tensor<T> to_unit(const Tensor<T>& model) {
  return ad::add_scalar(ad::scale(model, 0.5), 0.5);
}

template <typename T>
Tensor<T> repeat_channels(const Tensor<T>& single, int channels) {
  if (channels == 1) return single;
  return ad::concat_channels(std::vector<Tensor<T>>(static_cast<std::size_t>(channels), single));
}

}  // namespace

void ErganConfig::validate() const {
  if (encoder_channels.size() != 4) config_error("encoder needs exactly four stages");
  for (int c : encoder_channels)
    if (c < 1) config_error("encoder widths must be positive");
  if (decoder_channels < 1) config_error("decoder width must be positive");
  if (disc_channels.empty()) config_error("discriminator needs at least one stage");
  if (channels != 1 && channels != 3) config_error("channels must be 1 or 3");
  if (image_size < 16 || image_size % 16 != 0) config_error("image_size must be a positive multiple of 16");
  if (!(w_adv >= 0.0) || !(w_id >= 0.0) || !(w_rec >= 0.0) || !(w_mask >= 0.0))
    config_error("loss weights must be non-negative");
  if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) config_error("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    config_error("Adam betas must be in [0, 1)");
  if (batch_size < 1) config_error("batch_size must be positive");
}

// ---- discriminator -------------------------------------------------------------

template <typename T>
PatchDiscriminator<T>::PatchDiscriminator(int in_channels, const std::vector<int>& widths, Rng& rng)
    : in_channels_(in_channels) {
  if (widths.empty()) fail(Errc::config_error, "patch discriminator needs at least one stage");
  int in = in_channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    convs_.push_back(nn::make_conv(params_, "conv" + std::to_string(i), in, widths[i], 4, 2, 1, rng));
    in = widths[i];
  }
  score_ = nn::make_conv(params_, "score", in, 1, 4, 1, 1, rng);
}

template <typename T>
int PatchDiscriminator<T>::output_size(int size) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) size = conv_out(size, 4, 2, 1);
  return conv_out(size, 4, 1, 1);
}

template <typename T>
Tensor<T> PatchDiscriminator<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != in_channels_)
    fail(Errc::shape_mismatch, "patch discriminator input " + ad::shape_string(x.shape()));
  if (output_size(x.dim(2)) < 1 || output_size(x.dim(3)) < 1)
    fail(Errc::shape_mismatch, "patch discriminator input " + ad::shape_string(x.shape()) +
                                   " is too small to yield a patch");
  Tensor<T> h = x;
  for (const auto& conv : convs_) h = ad::leaky_relu(conv(h), kLeak);
  return score_(h);
}

// ---- generator -------------------------------------------------------------------

template <typename T>
Generator<T>::Generator(const ErganConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const auto& e = config_.encoder_channels;
  int in = config_.channels;
  for (int i = 0; i < 4; ++i) {
    encoder_.push_back(nn::make_conv(params_, "enc" + std::to_string(i), in, e[i], 4, 2, 1, rng));
    in = e[i];
  }
  decoder_.push_back(nn::make_conv_transpose(params_, "dec0", e[3], e[2], 4, 2, 1, rng));
  decoder_.push_back(nn::make_conv_transpose(params_, "dec1", 2 * e[2], e[1], 4, 2, 1, rng));
  decoder_.push_back(nn::make_conv_transpose(params_, "dec2", 2 * e[1], e[0], 4, 2, 1, rng));
  decoder_.push_back(nn::make_conv_transpose(params_, "dec3", 2 * e[0], config_.decoder_channels, 4, 2, 1, rng));
  attention_ = nn::make_conv(params_, "attention", config_.decoder_channels, 1, 1, 1, 0, rng);
  output_ = nn::make_conv(params_, "output", config_.decoder_channels, config_.channels, 3, 1, 1, rng);
}

template <typename T>
ErganOutput<T> Generator<T>::operator()(const Tensor<T>& x, const ForwardOptions& options) const {
  if (x.rank() != 4 || x.dim(1) != config_.channels)
    fail(Errc::shape_mismatch, "ergan input " + ad::shape_string(x.shape()));
  if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0 || x.dim(2) < 16 || x.dim(3) < 16)
    fail(Errc::shape_mismatch, "ergan input size " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                                   " is not divisible by 16");

  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  for (const auto& conv : encoder_) {
    h = ad::relu(conv(h));
    skips.push_back(h);
  }
  for (int stage = 0; stage < 3; ++stage) {
    h = ad::relu(decoder_[stage](h));
    const int idx = 2 - stage;
    Tensor<T> skip = skips[idx];
    if (options.zeroed_skip == idx) skip = Tensor<T>::zeros(skip.shape());
    h = ad::concat_channels<T>({h, skip});
  }
  h = ad::relu(decoder_[3](h));

  ErganOutput<T> out;
  out.raw = ad::tanh(output_(h));
  if (options.forced_mask) {
    const double m = *options.forced_mask;
    if (!(m >= 0.0 && m <= 1.0)) fail(Errc::invalid_argument, "forced mask outside [0, 1]");
    out.mask = Tensor<T>::full({x.dim(0), 1, x.dim(2), x.dim(3)}, static_cast<T>(m));
  } else {
    out.mask = ad::sigmoid(attention_(h));
  }
  const auto m = repeat_channels(out.mask, config_.channels);
  const auto keep = ad::add_scalar(ad::neg(m), 1.0);
  out.y = ad::add(ad::mul(m, out.raw), ad::mul(keep, x));
  return out;
}

// ---- losses ---------------------------------------------------------------------

double identity_loss(const FeatureExtractor& embedder, const Image& a, const Image& b) {
  auto unit = [](std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x = n > 0.0 ? x / n : 0.0;
    return v;
  };
  const auto ea = unit(embedder.embed(a));
  const auto eb = unit(embedder.embed(b));
  double d = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) d += (ea[i] - eb[i]) * (ea[i] - eb[i]);
  return std::sqrt(d);
}

template <typename T>
Tensor<T> identity_loss(const FeatureExtractor& embedder, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) fail(Errc::shape_mismatch, "identity loss: batches differ in shape");
  auto unit = [](const Tensor<T>& e) {
    return ad::mul_per_sample(e, ad::reciprocal_or_zero(ad::sqrt(ad::sum_per_sample(ad::square(e)))));
  };
  const auto ea = unit(embedder.embed(to_unit(a)));
  const auto eb = unit(embedder.embed(to_unit(b)));
  return ad::mean(ad::sqrt(ad::sum_per_sample(ad::square(ad::sub(ea, eb)))));
}

template <typename T>
Tensor<T> lsgan_discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  if (real_scores.size() == 0 || fake_scores.size() == 0) fail(Errc::empty_input, "discriminator loss: empty batch");
  return ad::add(ad::mean(ad::square(ad::add_scalar(real_scores, -1.0))), ad::mean(ad::square(fake_scores)));
}

template <typename T>
Tensor<T> lsgan_generator_loss(const Tensor<T>& fake_scores) {
  if (fake_scores.size() == 0) fail(Errc::empty_input, "generator loss: empty batch");
  return ad::mean(ad::square(ad::add_scalar(fake_scores, -1.0)));
}

template <typename T>
GeneratorLoss<T> generator_loss(const ErganConfig& config, const FeatureExtractor& embedder,
                                const Tensor<T>& fake_scores, const Tensor<T>& y, const Tensor<T>& x_clean,
                                const Tensor<T>& mask, const Tensor<T>& mask_target) {
  if (y.size() == 0) fail(Errc::empty_input, "ergan generator loss: empty batch");
  if (y.shape() != x_clean.shape())
    fail(Errc::shape_mismatch, "ergan generator loss: output " + ad::shape_string(y.shape()) + " vs clean " +
                                   ad::shape_string(x_clean.shape()));
  GeneratorLoss<T> out;
  out.adversarial = lsgan_generator_loss(fake_scores);
  out.identity = identity_loss(embedder, y, x_clean);
  out.reconstruction = ad::mean(ad::abs(ad::sub(y, x_clean)));
  out.total = ad::add(ad::add(ad::scale(out.adversarial, config.w_adv), ad::scale(out.identity, config.w_id)),
                      ad::scale(out.reconstruction, config.w_rec));
  if (mask.defined() && mask_target.defined() && config.w_mask > 0.0) {
    out.mask = ad::mean(ad::square(ad::sub(mask, mask_target)));
    out.total = ad::add(out.total, ad::scale(out.mask, config.w_mask));
  }
  return out;
}

template <typename T>
ErganLosses<T> ergan_losses(const Generator<T>& generator, const PatchDiscriminator<T>& discriminator,
                            const ErganConfig& config, const FeatureExtractor& embedder,
                            const Tensor<T>& x_glasses, const Tensor<T>& x_clean, const Tensor<T>& mask_target) {
  if (x_glasses.rank() != 4 || x_glasses.dim(0) == 0) fail(Errc::empty_input, "ergan: empty batch");
  if (x_glasses.shape() != x_clean.shape()) fail(Errc::shape_mismatch, "ergan: unpaired batch shapes");
  ErganLosses<T> out;
  out.output = generator(x_glasses);
  out.discriminator = lsgan_discriminator_loss(discriminator(x_clean), discriminator(out.output.y.detach()));
  out.generator = generator_loss(config, embedder, discriminator(out.output.y), out.output.y, x_clean,
                                 out.output.mask, mask_target);
  return out;
}

// ---- data -----------------------------------------------------------------------

PairBatch make_pair_batch(std::span<const Image> clean, std::span<const std::uint64_t> seeds, int size) {
  if (clean.empty()) fail(Errc::empty_input, "ergan pairs: no images");
  if (clean.size() != seeds.size()) fail(Errc::count_mismatch, "ergan pairs: one seed per image required");
  std::vector<Image> glasses, targets, masks;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Image base = clean[i];
    if (base.height() != size || base.width() != size) base = resize_bilinear(base, size, size);
    glasses.push_back(to_model_range(composite_glasses(base, seeds[i])));
    targets.push_back(to_model_range(base));
    masks.push_back(glasses_coverage(size, size, seeds[i]));
  }
  return {to_tensor<float>(glasses), to_tensor<float>(targets), to_tensor<float>(masks)};
}

CompositePairSource::CompositePairSource(std::vector<Image> clean, int size) : clean_(std::move(clean)), size_(size) {
  if (clean_.empty()) fail(Errc::empty_input, "ergan pair source has no images");
  for (auto& img : clean_)
    if (img.height() != size_ || img.width() != size_) img = resize_bilinear(img, size_, size_);
}

PairBatch CompositePairSource::sample(Rng& rng, int batch) {
  std::uniform_int_distribution<std::size_t> pick(0, clean_.size() - 1);
  std::vector<Image> chosen;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < batch; ++i) {
    chosen.push_back(clean_[pick(rng)]);
    seeds.push_back(rng());
  }
  return make_pair_batch(chosen, seeds, size_);
}

// ---- training ---------------------------------------------------------------------

ErganTrainState::ErganTrainState(const ErganConfig& cfg, std::shared_ptr<const FeatureExtractor> emb)
    : config(cfg),
      embedder(emb ? std::move(emb) : stub_extractor()),
      rng(cfg.seed),
      generator(cfg, rng),
      discriminator(cfg.channels, cfg.disc_channels, rng) {
  if (discriminator.output_size(cfg.image_size) < 1)
    config_error("image_size " + std::to_string(cfg.image_size) + " is too small for the discriminator");
}

namespace {

void require_finite(double v, const char* what, std::int64_t iteration) {
  if (!std::isfinite(v))
    fail(Errc::non_finite, std::string("non-finite ") + what + " at step " + std::to_string(iteration));
}

}  // namespace

ErganDiagnostics train_step(ErganTrainState& state, PairSource& source) {
  const auto& cfg = state.config;
  PairBatch batch = source.sample(state.rng, cfg.batch_size);
  ErganDiagnostics diag;
  diag.iteration = state.iteration;

  auto losses = ergan_losses(state.generator, state.discriminator, cfg, *state.embedder, batch.glasses, batch.clean,
                             batch.mask_target);
  const auto mask = losses.output.mask.data();
  diag.mask_min = *std::min_element(mask.begin(), mask.end());
  diag.mask_max = *std::max_element(mask.begin(), mask.end());
  if (!(diag.mask_min >= 0.0 && diag.mask_max <= 1.0))
    fail(Errc::non_finite, "attention mask left [0, 1] at step " + std::to_string(state.iteration));

  diag.discriminator_loss = losses.discriminator.item();
  diag.generator_loss = losses.generator.total.item();
  diag.adversarial = losses.generator.adversarial.item();
  diag.identity = losses.generator.identity.item();
  diag.reconstruction = losses.generator.reconstruction.item();
  require_finite(diag.discriminator_loss, "discriminator loss", state.iteration);
  require_finite(diag.generator_loss, "generator loss", state.iteration);

  const auto& dp = state.discriminator.params().tensors();
  const auto& gp = state.generator.params().tensors();
  auto d_grads = ad::grad(losses.discriminator, std::span<const Tensor<float>>(dp));
  auto g_grads = ad::grad(losses.generator.total, std::span<const Tensor<float>>(gp));
  nn::adam_update<float>(dp, d_grads, state.adam_discriminator,
                         {cfg.lr_discriminator, cfg.adam_beta1, cfg.adam_beta2});
  nn::adam_update<float>(gp, g_grads, state.adam_generator, {cfg.lr_generator, cfg.adam_beta1, cfg.adam_beta2});
  ++state.iteration;
  return diag;
}

double reconstruction_l1(const Generator<float>& generator, const PairBatch& batch) {
  ad::NoGrad no_grad;
  const auto y = generator(batch.glasses).y;
  const auto a = y.data();
  const auto b = batch.clean.data();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(static_cast<double>(a[i]) - b[i]);
  return total / static_cast<double>(a.size());
}

RemovalResult remove_glasses(const Generator<float>& generator, const ErganConfig& config, const Image& img) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "remove_glasses expects a unit-range image");
  if (img.channels() != config.channels) fail(Errc::shape_mismatch, "remove_glasses: channel count differs");
  const int s = config.image_size;
  Image input = (img.height() == s && img.width() == s) ? img : resize_bilinear(img, s, s);
  ad::NoGrad no_grad;
  const auto out = generator(to_tensor<float>(to_model_range(input)));
  Image y = from_model_range(from_tensor(out.y, 0, RangeTag::model));
  Image mask = from_tensor(out.mask, 0, RangeTag::unit);
  if (y.height() != img.height() || y.width() != img.width()) {
    y = resize_bilinear(y, img.height(), img.width());
    mask = resize_bilinear(mask, img.height(), img.width());
  }
  return {std::move(y), std::move(mask)};
}

#define BIASFORGE_INSTANTIATE(T)                                                                                \
  template class PatchDiscriminator<T>;                                                                         \
  template class Generator<T>;                                                                                  \
  template Tensor<T> identity_loss(const FeatureExtractor&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> lsgan_discriminator_loss(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> lsgan_generator_loss(const Tensor<T>&);                                                    \
  template GeneratorLoss<T> generator_loss(const ErganConfig&, const FeatureExtractor&, const Tensor<T>&,       \
                                           const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                           const Tensor<T>&);                                                   \
  template ErganLosses<T> ergan_losses(const Generator<T>&, const PatchDiscriminator<T>&, const ErganConfig&,   \
                                       const FeatureExtractor&, const Tensor<T>&, const Tensor<T>&,             \
                                       const Tensor<T>&);

BIASFORGE_INSTANTIATE(float)
BIASFORGE_INSTANTIATE(double)

#undef BIASFORGE_INSTANTIATE

}  // namespace biasforge::ergan
