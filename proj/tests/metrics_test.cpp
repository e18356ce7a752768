#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "biasforge/error.hpp"
#include "biasforge/metrics.hpp"
#include "test_support.hpp"

using biasforge::Image;
using biasforge::Metric;
using biasforge::PairScore;
using biasforge::RangeTag;
using testing_support::random_image;

namespace {

Image constant(double v, int size = 16, int channels = 3) { return Image::filled(size, size, channels, RangeTag::unit, v); }

Image add_noise(const Image& img, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> px(img.pixels().begin(), img.pixels().end());
  for (auto& v : px) v = std::clamp(v + amplitude * u(rng), 0.0, 1.0);
  return Image(img.height(), img.width(), img.channels(), RangeTag::unit, px);
}

const biasforge::CategoryStats& row(const biasforge::MetricsReport& r, const std::string& cat, Metric m) {
  for (const auto& s : r.rows)
    if (s.category == cat && s.metric == m) return s;
  throw std::runtime_error("row not found");
}

}  // namespace

TEST(Psnr, ConstantImagesClosedForm) {
  EXPECT_DOUBLE_EQ(biasforge::mse(constant(0.5), constant(0.25)), 0.0625);
  EXPECT_NEAR(biasforge::psnr(constant(0.5), constant(0.25)), 10.0 * std::log10(16.0), 1e-12);
  EXPECT_NEAR(biasforge::psnr(constant(0.5), constant(0.25)), 12.0412, 1e-4);
  EXPECT_TRUE(biasforge::is_infinite_psnr(biasforge::psnr(constant(0.3), constant(0.3))));
}

TEST(Psnr, RejectsMismatchedInputs) {
  EXPECT_THROW(biasforge::psnr(constant(0.5, 16), constant(0.5, 17)), biasforge::Error);
  const Image model = Image::filled(16, 16, 3, RangeTag::model, 0.0);
  EXPECT_THROW(biasforge::psnr(model, constant(0.5)), biasforge::Error);
}

TEST(Psnr, Symmetric) {
  const Image a = random_image(12, 12, 3, 1), b = random_image(12, 12, 3, 2);
  EXPECT_EQ(biasforge::psnr(a, b), biasforge::psnr(b, a));
  EXPECT_EQ(biasforge::mse(a, b), biasforge::mse(b, a));
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  const Image a = constant(0.5, 24);
  double previous = std::numeric_limits<double>::infinity();
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2, 0.4}) {
    const double p = biasforge::psnr(a, add_noise(a, amp, 7));
    EXPECT_LT(p, previous) << amp;
    previous = p;
  }
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double expect = (2 * 0.5 * 0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4);
  EXPECT_NEAR(biasforge::ssim(constant(0.5), constant(0.25)), expect, 1e-12);
  EXPECT_NEAR(biasforge::ssim(constant(0.5), constant(0.25)), 0.8001, 1e-3);
}

TEST(Ssim, IdenticalIsOne) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = random_image(20, 18, 3, s);
    EXPECT_NEAR(biasforge::ssim(a, a), 1.0, 1e-9);
  }
}

TEST(Ssim, MatchesBruteForce) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image a = random_image(16, 16, 1, 100 + s), b = random_image(16, 16, 1, 200 + s);
    EXPECT_NEAR(biasforge::ssim(a, b), testing_support::brute_force_ssim(a, b), 1e-9);
  }
}

TEST(Ssim, ColourInputsAreGreyscaledFirst) {
  const Image a = random_image(16, 16, 3, 11), b = random_image(16, 16, 3, 12);
  auto luma = [](const Image& img) {
    std::vector<double> px(16 * 16);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        px[r * 16 + c] = 0.299 * img.at(r, c, 0) + 0.587 * img.at(r, c, 1) + 0.114 * img.at(r, c, 2);
    return Image(16, 16, 1, RangeTag::unit, px);
  };
  EXPECT_NEAR(biasforge::ssim(a, b), testing_support::brute_force_ssim(luma(a), luma(b)), 1e-9);
}

TEST(Ssim, FuzzBoundsAndSymmetry) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const int size = 11 + static_cast<int>(rng() % 3);
    const Image a = random_image(size, size, 1, rng()), b = random_image(size, size, 1, rng());
    const double v = biasforge::ssim(a, b);
    ASSERT_GE(v, -1.0);
    ASSERT_LE(v, 1.0);
    if (i < 200) ASSERT_NEAR(v, biasforge::ssim(b, a), 1e-12);
  }
  // anti-correlated structure drives ssim negative
  const Image a = random_image(16, 16, 1, 9);
  std::vector<double> inv(a.pixels().begin(), a.pixels().end());
  for (auto& v : inv) v = 1.0 - v;
  EXPECT_LT(biasforge::ssim(a, Image(16, 16, 1, RangeTag::unit, inv)), 0.0);
}

TEST(Ssim, SmallLuminanceShiftIsPenalised) {
  const Image a = add_noise(constant(0.5, 24, 1), 0.2, 5);
  for (double shift : {0.02, 0.05, 0.1}) {
    std::vector<double> px(a.pixels().begin(), a.pixels().end());
    for (auto& v : px) v += shift;
    const double s = biasforge::ssim(a, Image(24, 24, 1, RangeTag::unit, px));
    EXPECT_LT(s, 1.0);
    EXPECT_GT(s, 0.0);
  }
}

TEST(Ssim, TooSmallImageThrows) {
  EXPECT_THROW(biasforge::ssim(constant(0.5, 10), constant(0.5, 10)), biasforge::Error);
}

TEST(Aggregate, IdenticalPairExcludedFromPsnr) {
  const std::vector<PairScore> scores{biasforge::score_pair(constant(0.4), constant(0.4), "skin")};
  const auto report = biasforge::aggregate(scores);
  ASSERT_EQ(report.rows.size(), 2u);
  const auto& p = row(report, "skin", Metric::psnr);
  EXPECT_EQ(p.count, 0);
  EXPECT_EQ(p.excluded_infinite, 1);
  const auto& s = row(report, "skin", Metric::ssim);
  EXPECT_NEAR(s.mean, 1.0, 1e-12);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_EQ(s.count, 1);
}

TEST(Aggregate, MeanAndPopulationStd) {
  const std::vector<PairScore> dup{{"eyeglasses", 12.0412, 0.5}, {"eyeglasses", 12.0412, 0.5}};
  const auto r = biasforge::aggregate(dup);
  EXPECT_NEAR(row(r, "eyeglasses", Metric::psnr).mean, 12.0412, 1e-12);
  EXPECT_EQ(row(r, "eyeglasses", Metric::psnr).std, 0.0);
  const std::vector<PairScore> spread{{"enhanced", 10.0, 0.2}, {"enhanced", 14.0, 0.6}, {"skin", 20.0, 0.9}};
  const auto r2 = biasforge::aggregate(spread);
  EXPECT_DOUBLE_EQ(row(r2, "enhanced", Metric::psnr).mean, 12.0);
  EXPECT_DOUBLE_EQ(row(r2, "enhanced", Metric::psnr).std, 2.0);
  EXPECT_NEAR(row(r2, "enhanced", Metric::ssim).std, 0.2, 1e-12);
  EXPECT_EQ(r2.rows.size(), 4u);
}

TEST(Aggregate, RejectsEmptyAndUnknownCategory) {
  EXPECT_THROW(biasforge::aggregate({}), biasforge::Error);
  const std::vector<PairScore> bad{{"hats", 1.0, 0.1}};
  EXPECT_THROW(biasforge::aggregate(bad), biasforge::Error);
  EXPECT_THROW(biasforge::score_pair(constant(0.1), constant(0.2), "hats"), biasforge::Error);
}

TEST(ReportCsv, HeaderOrderAndRoundTrip) {
  const std::vector<PairScore> scores{{"skin", 29.83, 0.934}, {"eyeglasses", 29.958, 0.385}, {"enhanced", 29.986, 0.786},
                                      {"skin", 28.5, 0.9}};
  const auto report = biasforge::aggregate(scores);
  const std::string text = biasforge::format_report_csv(report);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "category,metric,mean,std,count,excluded_infinite");
  std::vector<std::string> keys;
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
  EXPECT_EQ(keys, (std::vector<std::string>{"enhanced,psnr", "eyeglasses,psnr", "skin,psnr", "enhanced,ssim",
                                            "eyeglasses,ssim", "skin,ssim"}));
  EXPECT_NE(text.find("skin,psnr,29.165000,0.665000,2,0"), std::string::npos);

  const auto dir = testing_support::scratch_dir("metrics_csv");
  biasforge::write_report_csv(report, dir / "a.csv");
  const auto back = biasforge::read_report_csv(dir / "a.csv");
  EXPECT_EQ(biasforge::format_report_csv(back), text);
  biasforge::write_report_csv(back, dir / "b.csv");
  std::ifstream fa(dir / "a.csv", std::ios::binary), fb(dir / "b.csv", std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(ReportCsv, ParseErrors) {
  EXPECT_THROW(biasforge::parse_report_csv("category,metric\n"), biasforge::ParseError);
  try {
    biasforge::parse_report_csv("category,metric,mean,std,count,excluded_infinite\nskin,psnr,1,2,3\n");
    FAIL();
  } catch (const biasforge::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.code(), biasforge::Errc::wrong_column_count);
  }
}
