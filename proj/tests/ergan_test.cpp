#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "biasforge/dataset.hpp"
#include "biasforge/error.hpp"
#include "biasforge/ergan.hpp"
#include "test_support.hpp"

namespace ad = biasforge::ad;
namespace ergan = biasforge::ergan;
using ad::Tensor;
using biasforge::Image;
using biasforge::RangeTag;
using testing_support::check_parameter_gradients;
using testing_support::random_tensor;

namespace {

ergan::ErganConfig tiny_config() {
  ergan::ErganConfig c;
  c.image_size = 16;
  c.encoder_channels = {1, 1, 1, 1};
  c.decoder_channels = 1;
  c.disc_channels = {2, 2};
  return c;
}

ergan::ErganConfig small_config() {
  ergan::ErganConfig c;
  c.image_size = 32;
  c.encoder_channels = {4, 8, 8, 8};
  c.decoder_channels = 4;
  c.disc_channels = {4, 8, 8};
  c.batch_size = 2;
  c.seed = 3;
  return c;
}

Image quadrant_image(int quadrant, int channel) {
  std::vector<double> px(8 * 8 * 3, 0.0);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const int q = (r >= 4) * 2 + (c >= 4);
      if (q == quadrant) px[(r * 8 + c) * 3 + channel] = 1.0;
    }
  return Image(8, 8, 3, RangeTag::unit, px);
}

std::vector<Image> clean_faces(int n, int size) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    biasforge::SyntheticFaceSpec spec;
    spec.skin_rgb = {0.35 + 0.1 * (i % 5), 0.25 + 0.08 * (i % 5), 0.2 + 0.06 * (i % 5)};
    spec.noise_sigma = 0.01;
    spec.seed = 100 + i;
    out.push_back(biasforge::generate_synthetic_face(spec, size, size));
  }
  return out;
}

// Input interval [lo, hi] that can influence score cells [a, b] along one axis.
std::pair<int, int> receptive_interval(int a, int b, int stages) {
  int lo = a - 1, hi = b + 2;  // score conv: k4 s1 p1
  for (int s = 0; s < stages; ++s) {
    lo = 2 * lo - 1;  // k4 s2 p1
    hi = 2 * hi + 2;
  }
  return {lo, hi};
}

}  // namespace

TEST(Forward, ForcedMaskZeroReturnsInputExactly) {
  biasforge::Rng rng(1);
  const auto cfg = small_config();
  ergan::Generator<float> gen(cfg, rng);
  const auto x = Tensor<float>::from({2, 3, 32, 32}, [] {
    std::vector<float> v(2 * 3 * 32 * 32);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(std::sin(0.37 * i));
    return v;
  }());
  const auto out = gen(x, {0.0, -1});
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(out.y[i], x[i]);
  const auto full = gen(x, {1.0, -1});
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(full.y[i], full.raw[i]);
  const auto half = gen(x, {0.5, -1});
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(half.y[i], 0.5f * (half.raw[i] + x[i]), 1e-6f);
  EXPECT_THROW(gen(x, {1.5, -1}), biasforge::Error);
}

TEST(Forward, BlendIsConvexAndMaskInRange) {
  biasforge::Rng rng(2);
  const auto cfg = small_config();
  ergan::Generator<double> gen(cfg, rng);
  const auto x = random_tensor({2, 3, 32, 32}, 3);
  const auto out = gen(x);
  EXPECT_EQ(out.y.shape(), x.shape());
  EXPECT_EQ(out.mask.shape(), (ad::Shape{2, 1, 32, 32}));
  for (double m : out.mask.data()) {
    ASSERT_GE(m, 0.0);
    ASSERT_LE(m, 1.0);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    ASSERT_GE(out.y[i], std::min(out.raw[i], x[i]) - 1e-12);
    ASSERT_LE(out.y[i], std::max(out.raw[i], x[i]) + 1e-12);
  }
}

TEST(Forward, RejectsIndivisibleSize) {
  biasforge::Rng rng(3);
  ergan::Generator<float> gen(small_config(), rng);
  EXPECT_THROW(gen(Tensor<float>::zeros({1, 3, 24, 24})), biasforge::Error);
}

TEST(Forward, ZeroingAnySkipChangesTheOutput) {
  biasforge::Rng rng(4);
  ergan::Generator<double> gen(small_config(), rng);
  const auto x = random_tensor({1, 3, 32, 32}, 5);
  const auto base = gen(x);
  for (int stage = 0; stage < 3; ++stage)
    EXPECT_GT(testing_support::max_abs_diff(base.y, gen(x, {std::nullopt, stage}).y), 0.0) << stage;
}

TEST(PatchDiscriminator, ScoreMapSizes) {
  biasforge::Rng rng(5);
  ergan::PatchDiscriminator<float> d(3, {32, 64, 128}, rng);
  EXPECT_EQ(d.output_size(128), 15);
  EXPECT_EQ(d.output_size(32), 3);
  EXPECT_EQ(d(Tensor<float>::zeros({1, 3, 32, 32})).shape(), (ad::Shape{1, 1, 3, 3}));
  EXPECT_LT(d.output_size(8), 1);
  EXPECT_THROW(d(Tensor<float>::zeros({1, 3, 8, 8})), biasforge::Error);
}

TEST(PatchDiscriminator, CornerChangeStaysInsideReceptiveField) {
  biasforge::Rng rng(6);
  ergan::PatchDiscriminator<double> d(3, {4, 4, 4}, rng);
  const auto a = random_tensor({1, 3, 128, 128}, 7);
  std::vector<double> bv(a.data().begin(), a.data().end());
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) bv[(ch * 128 + r) * 128 + c] += 0.5;
  const auto b = Tensor<double>::from(a.shape(), bv);
  const auto sa = d(a), sb = d(b);
  ASSERT_EQ(sa.shape(), (ad::Shape{1, 1, 15, 15}));
  int inside_changed = 0;
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) {
      const auto [rlo, rhi] = receptive_interval(i, i, 3);
      const auto [clo, chi] = receptive_interval(j, j, 3);
      const bool overlaps = rlo <= 15 && rhi >= 0 && clo <= 15 && chi >= 0;
      const bool differs = sa[i * 15 + j] != sb[i * 15 + j];
      if (!overlaps) EXPECT_FALSE(differs) << i << "," << j;
      inside_changed += overlaps && differs;
    }
  EXPECT_GT(inside_changed, 0);
}

TEST(PatchDiscriminator, PerSampleAndFinite) {
  biasforge::Rng rng(7);
  ergan::PatchDiscriminator<double> d(3, {4, 4, 4}, rng);
  const auto a = random_tensor({1, 3, 32, 32}, 8);
  std::vector<double> twice(a.data().begin(), a.data().end());
  twice.insert(twice.end(), a.data().begin(), a.data().end());
  const auto s = d(Tensor<double>::from({2, 3, 32, 32}, twice));
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(s[i], s[9 + i]);
    EXPECT_TRUE(std::isfinite(s[i]));
  }
}

TEST(IdentityLoss, OrthogonalEmbeddingsGiveRootTwo) {
  const auto ex = biasforge::stub_extractor();
  const Image a = quadrant_image(0, 0), b = quadrant_image(3, 1);
  EXPECT_NEAR(ergan::identity_loss(*ex, a, b), std::sqrt(2.0), 1e-12);
  EXPECT_EQ(ergan::identity_loss(*ex, a, a), 0.0);
  const Image black = Image::filled(8, 8, 3, RangeTag::unit, 0.0);
  EXPECT_NEAR(ergan::identity_loss(*ex, a, black), 1.0, 1e-12);
}

TEST(IdentityLoss, SymmetricAndBounded) {
  const auto ex = biasforge::stub_extractor();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image a = testing_support::random_image(8, 8, 3, s), b = testing_support::random_image(8, 8, 3, s + 99);
    const double ab = ergan::identity_loss(*ex, a, b);
    EXPECT_EQ(ab, ergan::identity_loss(*ex, b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 2.0);
  }
}

TEST(IdentityLoss, TensorVersionMatchesImageVersion) {
  const auto ex = biasforge::stub_extractor();
  const Image a = testing_support::random_image(8, 8, 3, 1), b = testing_support::random_image(8, 8, 3, 2);
  const auto ta = biasforge::to_tensor<double>(biasforge::to_model_range(a));
  const auto tb = biasforge::to_tensor<double>(biasforge::to_model_range(b));
  EXPECT_NEAR(ergan::identity_loss<double>(*ex, ta, tb).item(), ergan::identity_loss(*ex, a, b), 1e-12);
}

TEST(Losses, PerfectCases) {
  const auto ex = biasforge::stub_extractor();
  ergan::ErganConfig cfg;
  cfg.w_adv = 0.0;
  const auto y = random_tensor({2, 3, 4, 4}, 9);
  const auto scores = random_tensor({2, 1, 2, 2}, 10);
  EXPECT_NEAR(ergan::generator_loss<double>(cfg, *ex, scores, y, y).total.item(), 0.0, 1e-12);
  EXPECT_EQ(ergan::lsgan_discriminator_loss<double>(Tensor<double>::full({2, 1, 3, 3}, 1.0),
                                                    Tensor<double>::zeros({2, 1, 3, 3}))
                .item(),
            0.0);
}

TEST(Losses, ReconstructionWeightIsLinear) {
  const auto ex = biasforge::stub_extractor();
  ergan::ErganConfig cfg;
  const auto y = random_tensor({2, 3, 4, 4}, 11), clean = random_tensor({2, 3, 4, 4}, 12);
  const auto scores = random_tensor({2, 1, 2, 2}, 13);
  const auto one = ergan::generator_loss<double>(cfg, *ex, scores, y, clean);
  cfg.w_rec *= 2.0;
  const auto two = ergan::generator_loss<double>(cfg, *ex, scores, y, clean);
  EXPECT_EQ(one.reconstruction.item(), two.reconstruction.item());
  EXPECT_EQ(one.adversarial.item(), two.adversarial.item());
  EXPECT_EQ(one.identity.item(), two.identity.item());
  EXPECT_NEAR(two.total.item() - one.total.item(), 10.0 * one.reconstruction.item(), 1e-12);
}

TEST(FiniteDifferences, GeneratorAndDiscriminatorLosses) {
  biasforge::Rng rng(14);
  auto cfg = tiny_config();
  cfg.w_mask = 0.5;
  ergan::Generator<double> gen(cfg, rng);
  ergan::PatchDiscriminator<double> disc(3, cfg.disc_channels, rng);
  ASSERT_LE(gen.params().scalar_count(), 500u);
  ASSERT_LE(disc.params().scalar_count(), 500u);
  const auto ex = biasforge::stub_extractor();
  const auto xg = random_tensor({2, 3, 16, 16}, 15), xc = random_tensor({2, 3, 16, 16}, 16);
  const auto mt = random_tensor({2, 1, 16, 16}, 17, 0.0, 1.0);
  const auto g = check_parameter_gradients(gen.params(), [&] {
    return ergan::ergan_losses<double>(gen, disc, cfg, *ex, xg, xc, mt).generator.total;
  });
  EXPECT_LE(g.max_rel_error, 1e-3) << g.worst;
  const auto d = check_parameter_gradients(disc.params(), [&] {
    return ergan::ergan_losses<double>(gen, disc, cfg, *ex, xg, xc, mt).discriminator;
  });
  EXPECT_LE(d.max_rel_error, 1e-3) << d.worst;
}

TEST(FiniteDifferences, EachGeneratorComponent) {
  biasforge::Rng rng(18);
  const auto cfg = tiny_config();
  ergan::Generator<double> gen(cfg, rng);
  ergan::PatchDiscriminator<double> disc(3, cfg.disc_channels, rng);
  const auto ex = biasforge::stub_extractor();
  const auto xg = random_tensor({2, 3, 16, 16}, 19), xc = random_tensor({2, 3, 16, 16}, 20);
  using Pick = Tensor<double> (*)(const ergan::GeneratorLoss<double>&);
  const Pick picks[] = {[](const ergan::GeneratorLoss<double>& l) { return l.adversarial; },
                        [](const ergan::GeneratorLoss<double>& l) { return l.identity; },
                        [](const ergan::GeneratorLoss<double>& l) { return l.reconstruction; }};
  for (const Pick pick : picks) {
    const auto r = check_parameter_gradients(gen.params(), [&] {
      return pick(ergan::ergan_losses<double>(gen, disc, cfg, *ex, xg, xc).generator);
    });
    EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
  }
}

TEST(Training, DeterministicAndParameterCountsStable) {
  const auto cfg = small_config();
  ergan::CompositePairSource sa(clean_faces(4, 32), 32), sb(clean_faces(4, 32), 32);
  ergan::ErganTrainState a(cfg), b(cfg);
  const auto count = a.generator.params().scalar_count();
  for (int i = 0; i < 3; ++i) {
    const auto da = ergan::train_step(a, sa);
    const auto db = ergan::train_step(b, sb);
    EXPECT_EQ(da.generator_loss, db.generator_loss);
    EXPECT_EQ(da.discriminator_loss, db.discriminator_loss);
    EXPECT_GE(da.mask_min, 0.0);
    EXPECT_LE(da.mask_max, 1.0);
  }
  EXPECT_EQ(a.generator.params().scalar_count(), count);
  EXPECT_EQ(a.iteration, 3);
}

TEST(PairData, CompositesDifferOnlyInEyeBand) {
  const auto clean = clean_faces(2, 32);
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto batch = ergan::make_pair_batch(clean, seeds, 32);
  EXPECT_EQ(batch.glasses.shape(), (ad::Shape{2, 3, 32, 32}));
  EXPECT_EQ(batch.mask_target.shape(), (ad::Shape{2, 1, 32, 32}));
  for (int n = 0; n < 2; ++n)
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
          const std::size_t i = ((n * 3 + ch) * 32 + r) * 32 + c;
          if (r < 0.30 * 32 || r >= 0.55 * 32) ASSERT_EQ(batch.glasses[i], batch.clean[i]);
        }
}

TEST(Inference, RemoveGlassesKeepsSize) {
  const auto cfg = small_config();
  biasforge::Rng rng(21);
  ergan::Generator<float> gen(cfg, rng);
  const Image img = clean_faces(1, 40)[0];
  const auto r = ergan::remove_glasses(gen, cfg, img);
  EXPECT_EQ(r.output.height(), 40);
  EXPECT_EQ(r.mask.channels(), 1);
  EXPECT_EQ(r.mask.width(), 40);
}
