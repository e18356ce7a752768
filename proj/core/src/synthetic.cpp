#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "biasforge/dataset.hpp"
#include "biasforge/error.hpp"
#include "biasforge/random.hpp"

namespace biasforge {

namespace {

struct FaceLayout {
  double cy, cx, radius;
  double eye_y, eye_dx, eye_radius;
};

FaceLayout layout_for(const SyntheticFaceSpec& spec, int height, int width) {
  FaceLayout f{};
  f.cy = height / 2.0;
  f.cx = width / 2.0;
  f.radius = spec.face_radius_frac * std::min(height, width);
  f.eye_y = f.cy - 0.35 * f.radius;
  f.eye_dx = spec.eye_offset_frac * f.radius;
  f.eye_radius = std::max(0.8, 0.14 * f.radius);
  return f;
}

void validate(const SyntheticFaceSpec& spec, int height, int width) {
  if (height < 16 || width < 16) fail(Errc::invalid_argument, "synthetic faces need at least 16x16 pixels");
  if (!(spec.face_radius_frac > 0.0 && spec.face_radius_frac <= 0.5))
    fail(Errc::invalid_argument, "face_radius_frac must be in (0, 0.5]");
  if (!(spec.eye_offset_frac > 0.0 && spec.eye_offset_frac < 1.0))
    fail(Errc::invalid_argument, "eye_offset_frac must be in (0, 1)");
  if (spec.noise_sigma < 0.0) fail(Errc::invalid_argument, "noise_sigma must be non-negative");
  for (double v : spec.skin_rgb)
    if (!(v >= 0.0 && v <= 1.0)) fail(Errc::invalid_argument, "skin_rgb outside [0, 1]");
  for (double v : spec.background_rgb)
    if (!(v >= 0.0 && v <= 1.0)) fail(Errc::invalid_argument, "background_rgb outside [0, 1]");
}

bool in_disc(int row, int col, double cy, double cx, double r) {
  const double dy = row + 0.5 - cy, dx = col + 0.5 - cx;
  return dy * dy + dx * dx <= r * r;
}

PixelBox box_around(double cy, double cx, double half_h, double half_w) {
  return {static_cast<int>(std::floor(cy - half_h)), static_cast<int>(std::floor(cx - half_w)),
          static_cast<int>(std::ceil(cy + half_h)), static_cast<int>(std::ceil(cx + half_w))};
}

}  // namespace

std::vector<PixelBox> synthetic_glasses_boxes(const SyntheticFaceSpec& spec, int height, int width) {
  validate(spec, height, width);
  const FaceLayout f = layout_for(spec, height, width);
  const double lens_hw = std::max(1.0, 0.30 * f.radius);
  const double lens_hh = std::max(1.0, 0.20 * f.radius);
  PixelBox left = box_around(f.eye_y, f.cx - f.eye_dx, lens_hh, lens_hw);
  PixelBox right = box_around(f.eye_y, f.cx + f.eye_dx, lens_hh, lens_hw);
  const int bridge_row = static_cast<int>(std::floor(f.eye_y));
  PixelBox bridge{bridge_row, left.right, bridge_row + 1, right.left};
  std::vector<PixelBox> boxes{left, right};
  if (bridge.left < bridge.right) boxes.push_back(bridge);
  for (const auto& b : boxes)
    if (b.top < 0 || b.left < 0 || b.bottom > height || b.right > width)
      fail(Errc::invalid_argument, "image too small to place glasses");
  return boxes;
}

Image generate_synthetic_face(const SyntheticFaceSpec& spec, int height, int width) {
  validate(spec, height, width);
  const FaceLayout f = layout_for(spec, height, width);
  if (f.eye_y - f.eye_radius < 0 || f.cx - f.eye_dx - f.eye_radius < 0)
    fail(Errc::invalid_argument, "image too small to place facial features");
  const std::array<double, 3> eye_rgb{0.08, 0.06, 0.05};
  const std::array<double, 3> glasses_rgb{0.04, 0.04, 0.06};
  std::vector<PixelBox> glasses;
  if (spec.has_glasses) glasses = synthetic_glasses_boxes(spec, height, width);

  std::vector<double> px(static_cast<std::size_t>(height) * width * 3);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const std::array<double, 3>* color = &spec.background_rgb;
      if (in_disc(r, c, f.cy, f.cx, f.radius)) color = &spec.skin_rgb;
      if (in_disc(r, c, f.eye_y, f.cx - f.eye_dx, f.eye_radius) ||
          in_disc(r, c, f.eye_y, f.cx + f.eye_dx, f.eye_radius))
        color = &eye_rgb;
      for (const auto& b : glasses)
        if (b.contains(r, c)) color = &glasses_rgb;
      for (int ch = 0; ch < 3; ++ch) px[(static_cast<std::size_t>(r) * width + c) * 3 + ch] = (*color)[ch];
    }
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : px) v += noise(rng);
  }
  return make_clamped(height, width, 3, RangeTag::unit, std::move(px));
}

Image glasses_coverage(int height, int width, std::uint64_t seed, const GlassesStyle& style) {
  if (!(style.alpha >= 0.0 && style.alpha <= 1.0)) fail(Errc::invalid_argument, "glasses alpha must be in [0, 1]");
  if (!(style.band_top >= 0.0 && style.band_top < style.band_bottom && style.band_bottom <= 1.0))
    fail(Errc::invalid_argument, "invalid eye band");
  Rng rng(seed);
  const double jitter = uniform(rng, -0.03, 0.03) * width;
  const double lens_w = (0.26 + uniform(rng, -0.02, 0.02)) * width;
  const double gap = 0.08 * width;
  const double band_top = style.band_top * height;
  const double band_bottom = style.band_bottom * height;
  const double mid = 0.5 * (band_top + band_bottom);
  const double cx = 0.5 * width + jitter;

  std::vector<double> cover(static_cast<std::size_t>(height) * width, 0.0);
  for (int r = 0; r < height; ++r) {
    if (r < band_top || r >= band_bottom) continue;
    const bool bridge_row = std::abs(r + 0.5 - mid) <= std::max(0.5, 0.04 * height);
    for (int c = 0; c < width; ++c) {
      const double x = c + 0.5;
      const bool left_lens = x >= cx - gap / 2 - lens_w && x < cx - gap / 2;
      const bool right_lens = x >= cx + gap / 2 && x < cx + gap / 2 + lens_w;
      const bool bridge = bridge_row && x >= cx - gap / 2 && x < cx + gap / 2;
      if (left_lens || right_lens || bridge) cover[static_cast<std::size_t>(r) * width + c] = style.alpha;
    }
  }
  return Image(height, width, 1, RangeTag::unit, std::move(cover));
}

Image composite_glasses(const Image& img, std::uint64_t seed, const GlassesStyle& style) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "composite_glasses expects a unit-range image");
  if (img.channels() != 3) fail(Errc::invalid_argument, "composite_glasses expects 3 channels");
  const Image cover = glasses_coverage(img.height(), img.width(), seed, style);
  Rng rng(mix64(seed));
  const double shade = 0.05 + 0.05 * uniform01(rng);
  const std::array<double, 3> tint{shade, shade, shade * 1.2};
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      const double a = cover.at(r, c);
      if (a == 0.0) continue;
      for (int ch = 0; ch < 3; ++ch) {
        double& v = out[img.index(r, c, ch)];
        v = (1.0 - a) * v + a * tint[ch];
      }
    }
  return make_clamped(img.height(), img.width(), 3, RangeTag::unit, std::move(out));
}

AttributeManifest write_fixture_dataset(const std::filesystem::path& root, int count, int size,
                                        std::uint64_t seed, const FixtureComposition& composition) {
  if (count < 1) fail(Errc::invalid_argument, "fixture needs at least one image");
  if (composition.tones.empty()) fail(Errc::invalid_argument, "fixture needs at least one skin tone");
  std::filesystem::create_directories(root);
  Rng rng(seed);

  auto pick = [&](double rate) {
    const int k = static_cast<int>(std::lround(rate * count));
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> chosen(count, false);
    for (int i = 0; i < k; ++i) chosen[order[i]] = true;
    return chosen;
  };
  const auto glasses = pick(composition.glasses_rate);
  const auto pale = pick(composition.pale_rate);

  AttributeManifest manifest;
  manifest.attribute_names = celeba_attribute_names();
  const int eyeglasses = manifest.index_of("Eyeglasses");
  const int pale_skin = manifest.index_of("Pale_Skin");
  int tone_cursor = 0;
  for (int i = 0; i < count; ++i) {
    SyntheticFaceSpec spec;
    spec.has_glasses = glasses[i];
    spec.skin_rgb = pale[i] ? composition.pale_tone
                            : composition.tones[static_cast<std::size_t>(tone_cursor++) % composition.tones.size()];
    spec.noise_sigma = composition.noise_sigma;
    spec.seed = derive_seed(seed, "face" + std::to_string(i));
    spec.face_radius_frac = 0.33 + 0.04 * uniform01(rng);

    char name[32];
    std::snprintf(name, sizeof(name), "face_%04d.png", i);
    save_image(generate_synthetic_face(spec, size, size), root / name);

    AttributeManifest::Record record{name, std::vector<int>(manifest.attribute_names.size())};
    for (std::size_t a = 0; a < record.values.size(); ++a) record.values[a] = ((i + a) % 2 == 0) ? 1 : -1;
    record.values[eyeglasses] = glasses[i] ? 1 : -1;
    record.values[pale_skin] = pale[i] ? 1 : -1;
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

}  // namespace biasforge
