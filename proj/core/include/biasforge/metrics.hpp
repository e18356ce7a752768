#pragma once

// PSNR / SSIM in unit space (peak 1) and per-category aggregation.

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasforge/image.hpp"

namespace biasforge {

double mse(const Image& a, const Image& b);

// +infinity for identical images.
double psnr(const Image& a, const Image& b);
inline bool is_infinite_psnr(double v) { return v == std::numeric_limits<double>::infinity(); }

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Grayscale-first SSIM with a Gaussian window over the valid region.
double ssim(const Image& a, const Image& b, int window = kSsimWindow, double sigma = kSsimSigma);

enum class Metric { psnr, ssim };
const char* to_string(Metric metric) noexcept;

// skin, eyeglasses, enhanced
const std::vector<std::string>& metric_categories();
bool is_metric_category(std::string_view name);

struct CategoryStats {
  std::string category;
  Metric metric = Metric::psnr;
  double mean = 0.0;  // 0 when count == 0
  double std = 0.0;   // population standard deviation
  long count = 0;
  long excluded_infinite = 0;

  bool operator==(const CategoryStats&) const = default;
};

struct MetricsReport {
  std::vector<CategoryStats> rows;  // sorted by (metric, category)

  bool operator==(const MetricsReport&) const = default;
};

struct PairScore {
  std::string category;
  double psnr = 0.0;
  double ssim = 0.0;
};

PairScore score_pair(const Image& generated, const Image& reference, std::string category);

MetricsReport aggregate(std::span<const PairScore> scores);

inline constexpr std::string_view kReportHeader = "category,metric,mean,std,count,excluded_infinite";

std::string format_report_csv(const MetricsReport& report);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport parse_report_csv(std::string_view text);
MetricsReport read_report_csv(const std::filesystem::path& path);

}  // namespace biasforge
