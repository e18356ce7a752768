#include "biasforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "biasforge/error.hpp"

namespace biasforge {

namespace {

void check_pair(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    fail(Errc::shape_mismatch, std::string(what) + ": images differ in shape (" + std::to_string(a.height()) + "x" +
                                   std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                                   std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                                   std::to_string(b.channels()) + ")");
  if (a.range() != RangeTag::unit || b.range() != RangeTag::unit)
    fail(Errc::range_mismatch, std::string(what) + ": both images must be unit range");
}

// Valid-region separable filter of a row-major h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * plane[static_cast<std::size_t>(r) * w + c + i];
      tmp[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(r + i) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_pair(a, b, "mse");
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  double total = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) total += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return total / static_cast<double>(pa.size());
}

double psnr(const Image& a, const Image& b) {
  const double e = mse(a, b);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

double ssim(const Image& a, const Image& b, int window, double sigma) {
  check_pair(a, b, "ssim");
  if (window < 1 || !(sigma > 0.0)) fail(Errc::invalid_argument, "ssim: bad window parameters");
  if (a.height() < window || a.width() < window)
    fail(Errc::shape_mismatch, "ssim: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                                   " is smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
                                   " window");
  const Image ga = a.channels() == 3 ? to_grayscale(a) : a;
  const Image gb = b.channels() == 3 ? to_grayscale(b) : b;
  if (ga.channels() != 1) fail(Errc::shape_mismatch, "ssim: expected 1 or 3 channels");

  std::vector<double> kernel(static_cast<std::size_t>(window));
  const double mid = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    kernel[i] = std::exp(-((i - mid) * (i - mid)) / (2.0 * sigma * sigma));
    total += kernel[i];
  }
  for (auto& k : kernel) k /= total;

  const int h = a.height(), w = a.width();
  const std::vector<double> x(ga.pixels().begin(), ga.pixels().end());
  const std::vector<double> y(gb.pixels().begin(), gb.pixels().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, kernel);
  const auto my = filter_valid(y, h, w, kernel);
  const auto sxx = filter_valid(xx, h, w, kernel);
  const auto syy = filter_valid(yy, h, w, kernel);
  const auto sxy = filter_valid(xy, h, w, kernel);

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double sum = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    const double v = ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    sum += std::clamp(v, -1.0, 1.0);
  }
  return sum / static_cast<double>(mx.size());
}

const char* to_string(Metric metric) noexcept { return metric == Metric::psnr ? "psnr" : "ssim"; }

const std::vector<std::string>& metric_categories() {
  static const std::vector<std::string> names{"skin", "eyeglasses", "enhanced"};
  return names;
}

bool is_metric_category(std::string_view name) {
  const auto& names = metric_categories();
  return std::find(names.begin(), names.end(), name) != names.end();
}

PairScore score_pair(const Image& generated, const Image& reference, std::string category) {
  if (!is_metric_category(category)) fail(Errc::invalid_argument, "unknown metrics category '" + category + "'");
  return {std::move(category), psnr(generated, reference), ssim(generated, reference)};
}

MetricsReport aggregate(std::span<const PairScore> scores) {
  if (scores.empty()) fail(Errc::empty_input, "aggregate: no pairs");
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, long>> groups;
  for (const auto& s : scores) {
    if (!is_metric_category(s.category)) fail(Errc::invalid_argument, "unknown metrics category '" + s.category + "'");
    auto& p = groups[{"psnr", s.category}];
    if (is_infinite_psnr(s.psnr))
      ++p.second;
    else
      p.first.push_back(s.psnr);
    groups[{"ssim", s.category}].first.push_back(s.ssim);
  }
  MetricsReport report;
  for (const auto& [key, group] : groups) {
    const auto& values = group.first;
    CategoryStats row;
    row.category = key.second;
    row.metric = key.first == "psnr" ? Metric::psnr : Metric::ssim;
    row.count = static_cast<long>(values.size());
    row.excluded_infinite = group.second;
    if (!values.empty()) {
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean = sum / static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - row.mean) * (v - row.mean);
      row.std = std::sqrt(var / static_cast<double>(values.size()));
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string format_report_csv(const MetricsReport& report) {
  std::vector<CategoryStats> rows = report.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const CategoryStats& a, const CategoryStats& b) {
    const std::string ma = to_string(a.metric), mb = to_string(b.metric);
    return ma != mb ? ma < mb : a.category < b.category;
  });
  std::string out(kReportHeader);
  out += '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%ld,%ld\n", r.category.c_str(), to_string(r.metric), r.mean, r.std,
                  r.count, r.excluded_infinite);
    out += buf;
  }
  return out;
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << format_report_csv(report);
  if (!out) fail(Errc::io_failure, "failed writing " + path.string());
}

MetricsReport parse_report_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader)
    throw ParseError(Errc::corrupt_data, 1, "metrics report header mismatch");
  MetricsReport report;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ParseError(Errc::wrong_column_count, line_no, "expected 6 columns");
    CategoryStats row;
    row.category = cells[0];
    if (cells[1] == "psnr")
      row.metric = Metric::psnr;
    else if (cells[1] == "ssim")
      row.metric = Metric::ssim;
    else
      throw ParseError(Errc::bad_value, line_no, "unknown metric '" + cells[1] + "'");
    try {
      row.mean = std::stod(cells[2]);
      row.std = std::stod(cells[3]);
      row.count = std::stol(cells[4]);
      row.excluded_infinite = std::stol(cells[5]);
    } catch (const std::exception&) {
      throw ParseError(Errc::bad_value, line_no, "malformed number");
    }
    report.rows.push_back(row);
  }
  return report;
}

MetricsReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report_csv(ss.str());
}

}  // namespace biasforge
