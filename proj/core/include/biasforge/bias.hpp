#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasforge/dataset.hpp"
#include "biasforge/image.hpp"
#include "biasforge/tensor.hpp"

namespace biasforge {

struct AttributeStat {
  std::string name;
  long positive_count = 0;
  long total = 0;
  double positive_rate = 0.0;
};

struct AttributeStats {
  std::vector<AttributeStat> attributes;
};

AttributeStats attribute_frequencies(const AttributeManifest& manifest);

// Names with positive_rate < threshold, ascending by (rate, name).
std::vector<std::string> flag_underrepresented(const AttributeStats& stats, double threshold);

inline constexpr int kToneBins = 8;
inline constexpr double kDefaultBiasThreshold = 0.2;

struct ToneHistogram {
  std::array<double, kToneBins> mass{};
  int samples = 0;
};

// Mean grey level of each image's central crop, binned over [0, 1].
ToneHistogram tone_histogram(std::span<const Image> images, double face_region = 0.5);
std::vector<int> flag_tone_bins(const ToneHistogram& histogram, double threshold);

// Fixed-dimension image embedding. The tensor overloads are differentiable
// and take unit-range [N, 3, H, W] batches.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const Image& img) const = 0;
  virtual ad::Tensor<float> embed(const ad::Tensor<float>& batch) const = 0;
  virtual ad::Tensor<double> embed(const ad::Tensor<double>& batch) const = 0;
};

// Mean RGB over the four image quadrants (d = 12).
std::shared_ptr<const FeatureExtractor> stub_extractor();

struct BiasReport {
  AttributeStats stats;
  std::vector<std::pair<std::string, double>> flagged_attributes;
  ToneHistogram tone;
  std::vector<int> flagged_tone_bins;
  double threshold = kDefaultBiasThreshold;
};

BiasReport analyze_dataset(const AttributeManifest& manifest, const std::filesystem::path& image_root,
                           double threshold = kDefaultBiasThreshold);

// `key = value` text report.
std::string format_bias_report(const BiasReport& report);
// attribute,positive_count,total,rate
std::string format_attribute_csv(const AttributeStats& stats);
// Reads back the flagged attribute names from a text report.
std::vector<std::string> read_flagged_attributes(const std::filesystem::path& report_path);

}  // namespace biasforge
