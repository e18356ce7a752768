#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "biasforge/image.hpp"

namespace biasforge {

// Per-image +/-1 labels over named binary attributes (CelebA list_attr layout).
struct AttributeManifest {
  struct Record {
    std::string image_id;
    std::vector<int> values;

    bool operator==(const Record&) const = default;
  };

  std::vector<std::string> attribute_names;
  std::vector<Record> records;

  // -1 when absent.
  int index_of(std::string_view attribute) const;
  bool operator==(const AttributeManifest&) const = default;
};

// The 40 CelebA attribute names in list_attr order.
const std::vector<std::string>& celeba_attribute_names();

// Throws ParseError (count_mismatch / bad_value / wrong_column_count) with the
// offending line number.
AttributeManifest parse_attribute_manifest(std::string_view text);
AttributeManifest read_attribute_manifest(const std::filesystem::path& path);
std::string serialize_attribute_manifest(const AttributeManifest& manifest);
void write_attribute_manifest(const AttributeManifest& manifest, const std::filesystem::path& path);

struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

// Seeded shuffle, then floor(0.7N) train, floor(0.1N) eval, remainder test.
SplitSpec split_dataset(const AttributeManifest& manifest, std::uint64_t seed);

struct AugmentConfig {
  double p_flip = 0.5;
  double max_rotation_deg = 10.0;
};

// Flip with probability p_flip, then rotate by Uniform(-max, +max).
Image augment(const Image& img, std::uint64_t seed, const AugmentConfig& policy = {});

struct SyntheticFaceSpec {
  std::array<double, 3> skin_rgb{0.80, 0.62, 0.50};
  bool has_glasses = false;
  double face_radius_frac = 0.35;  // of min(H, W)
  double eye_offset_frac = 0.40;   // horizontal eye offset, fraction of the face radius
  std::array<double, 3> background_rgb{0.55, 0.65, 0.75};
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct PixelBox {
  int top, left, bottom, right;  // half-open [top, bottom) x [left, right)

  bool contains(int row, int col) const noexcept {
    return row >= top && row < bottom && col >= left && col < right;
  }
};

// Where generate_synthetic_face draws its glasses (two lenses + bridge).
std::vector<PixelBox> synthetic_glasses_boxes(const SyntheticFaceSpec& spec, int height, int width);

Image generate_synthetic_face(const SyntheticFaceSpec& spec, int height, int width);

struct GlassesStyle {
  double alpha = 0.85;
  double band_top = 0.30;     // eye band rows [band_top*H, band_bottom*H)
  double band_bottom = 0.55;
};

// Per-pixel overlay coverage in [0, 1] (single channel, unit range).
Image glasses_coverage(int height, int width, std::uint64_t seed, const GlassesStyle& style = {});

// Alpha-blends dark lenses and a bridge over the eye band.
Image composite_glasses(const Image& img, std::uint64_t seed, const GlassesStyle& style = {});

struct FixtureComposition {
  double glasses_rate = 0.1;
  double pale_rate = 0.1;
  double noise_sigma = 0.02;
  // Skin tones cycled through for non-pale faces.
  std::vector<std::array<double, 3>> tones{{0.80, 0.62, 0.50}, {0.62, 0.45, 0.34}, {0.45, 0.31, 0.22},
                                           {0.30, 0.20, 0.14}};
  std::array<double, 3> pale_tone{0.96, 0.88, 0.82};
};

// Writes `count` synthetic faces as <root>/face_NNNN.png and returns a
// 40-attribute manifest describing them (Eyeglasses and Pale_Skin match
// the rendered faces; other attributes alternate +1/-1).
AttributeManifest write_fixture_dataset(const std::filesystem::path& root, int count, int size,
                                        std::uint64_t seed, const FixtureComposition& composition = {});

}  // namespace biasforge
