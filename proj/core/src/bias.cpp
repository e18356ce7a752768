#include "biasforge/bias.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "biasforge/error.hpp"

namespace biasforge {

AttributeStats attribute_frequencies(const AttributeManifest& manifest) {
  if (manifest.records.empty()) fail(Errc::empty_input, "attribute manifest has no records");
  AttributeStats stats;
  for (const auto& name : manifest.attribute_names) stats.attributes.push_back({name, 0, 0, 0.0});
  for (const auto& record : manifest.records)
    for (std::size_t a = 0; a < record.values.size(); ++a) {
      stats.attributes[a].total += 1;
      if (record.values[a] == 1) stats.attributes[a].positive_count += 1;
    }
  for (auto& s : stats.attributes)
    s.positive_rate = static_cast<double>(s.positive_count) / static_cast<double>(s.total);
  return stats;
}

std::vector<std::string> flag_underrepresented(const AttributeStats& stats, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) fail(Errc::invalid_argument, "threshold must be in (0, 1)");
  std::vector<const AttributeStat*> flagged;
  for (const auto& s : stats.attributes)
    if (s.positive_rate < threshold) flagged.push_back(&s);
  std::sort(flagged.begin(), flagged.end(), [](const AttributeStat* a, const AttributeStat* b) {
    return a->positive_rate != b->positive_rate ? a->positive_rate < b->positive_rate : a->name < b->name;
  });
  std::vector<std::string> names;
  for (const auto* s : flagged) names.push_back(s->name);
  return names;
}

ToneHistogram tone_histogram(std::span<const Image> images, double face_region) {
  if (images.empty()) fail(Errc::empty_input, "tone_histogram needs at least one image");
  std::array<long, kToneBins> counts{};
  for (const auto& img : images) {
    if (img.channels() != 3 || img.range() != RangeTag::unit)
      fail(Errc::invalid_argument, "tone_histogram expects 3-channel unit-range images");
    const Image crop = to_grayscale(center_crop(img, face_region));
    double total = 0.0;
    for (double v : crop.pixels()) total += v;
    const double lightness = total / static_cast<double>(crop.pixels().size());
    const int bin = std::clamp(static_cast<int>(std::floor(lightness * kToneBins)), 0, kToneBins - 1);
    counts[bin] += 1;
  }
  ToneHistogram h;
  h.samples = static_cast<int>(images.size());
  for (int b = 0; b < kToneBins; ++b) h.mass[b] = static_cast<double>(counts[b]) / h.samples;
  return h;
}

std::vector<int> flag_tone_bins(const ToneHistogram& histogram, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) fail(Errc::invalid_argument, "threshold must be in (0, 1)");
  std::vector<int> bins;
  if (histogram.samples == 0) return bins;
  for (int b = 0; b < kToneBins; ++b)
    if (histogram.mass[b] < threshold) bins.push_back(b);
  return bins;
}

namespace {

class QuadrantMeanExtractor final : public FeatureExtractor {
 public:
  int dim() const override { return 12; }

  std::vector<double> embed(const Image& img) const override {
    if (img.channels() != 3) fail(Errc::invalid_argument, "embedding expects a 3-channel image");
    auto t = ad::quadrant_means(to_tensor<double>(img));
    return {t.data().begin(), t.data().end()};
  }
  ad::Tensor<float> embed(const ad::Tensor<float>& batch) const override { return ad::quadrant_means(batch); }
  ad::Tensor<double> embed(const ad::Tensor<double>& batch) const override { return ad::quadrant_means(batch); }
};

}  // namespace

std::shared_ptr<const FeatureExtractor> stub_extractor() {
  static const auto instance = std::make_shared<const QuadrantMeanExtractor>();
  return instance;
}

BiasReport analyze_dataset(const AttributeManifest& manifest, const std::filesystem::path& image_root,
                           double threshold) {
  BiasReport report;
  report.threshold = threshold;
  report.stats = attribute_frequencies(manifest);
  for (const auto& name : flag_underrepresented(report.stats, threshold)) {
    const auto& s = report.stats.attributes[static_cast<std::size_t>(manifest.index_of(name))];
    report.flagged_attributes.emplace_back(name, s.positive_rate);
  }
  std::vector<Image> images;
  images.reserve(manifest.records.size());
  for (const auto& record : manifest.records) {
    const auto path = image_root / record.image_id;
    try {
      images.push_back(load_image(path));
    } catch (const Error& e) {
      fail(Errc::unresolved_id, "cannot resolve image id '" + record.image_id + "': " + e.what());
    }
  }
  report.tone = tone_histogram(images);
  report.flagged_tone_bins = flag_tone_bins(report.tone, threshold);
  return report;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string format_bias_report(const BiasReport& report) {
  std::ostringstream os;
  os << "threshold = " << fixed6(report.threshold) << '\n';
  os << "records = " << (report.stats.attributes.empty() ? 0 : report.stats.attributes.front().total) << '\n';
  os << "attributes = " << report.stats.attributes.size() << '\n';
  os << "flagged_attributes = ";
  for (std::size_t i = 0; i < report.flagged_attributes.size(); ++i)
    os << (i ? "," : "") << report.flagged_attributes[i].first;
  os << '\n';
  os << "flagged_attribute_rates = ";
  for (std::size_t i = 0; i < report.flagged_attributes.size(); ++i)
    os << (i ? "," : "") << fixed6(report.flagged_attributes[i].second);
  os << '\n';
  os << "tone_samples = " << report.tone.samples << '\n';
  os << "tone_histogram = ";
  for (int b = 0; b < kToneBins; ++b) os << (b ? "," : "") << fixed6(report.tone.mass[b]);
  os << '\n';
  os << "flagged_tone_bins = ";
  for (std::size_t i = 0; i < report.flagged_tone_bins.size(); ++i)
    os << (i ? "," : "") << report.flagged_tone_bins[i];
  os << '\n';
  return os.str();
}

std::string format_attribute_csv(const AttributeStats& stats) {
  std::ostringstream os;
  os << "attribute,positive_count,total,rate\n";
  for (const auto& s : stats.attributes)
    os << s.name << ',' << s.positive_count << ',' << s.total << ',' << fixed6(s.positive_rate) << '\n';
  return os.str();
}

std::vector<std::string> read_flagged_attributes(const std::filesystem::path& report_path) {
  std::ifstream in(report_path);
  if (!in) fail(Errc::missing_file, "cannot read bias report " + report_path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key != "flagged_attributes") continue;
    std::string value = line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t\r") + 1);
    std::vector<std::string> names;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) names.push_back(item);
    return names;
  }
  throw ParseError(Errc::bad_value, line_no, "bias report has no flagged_attributes entry");
}

}  // namespace biasforge
