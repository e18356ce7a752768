#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "biasforge/bias.hpp"
#include "biasforge/error.hpp"
#include "test_support.hpp"

using biasforge::AttributeManifest;
using biasforge::AttributeStat;
using biasforge::AttributeStats;
using biasforge::Image;
using biasforge::RangeTag;

namespace {

AttributeManifest ten_with_one_glasses() {
  AttributeManifest m;
  m.attribute_names = {"Eyeglasses", "Smiling", "Bald"};
  for (int i = 0; i < 10; ++i) m.records.push_back({"f" + std::to_string(i) + ".png", {i == 3 ? 1 : -1, 1, -1}});
  return m;
}

AttributeStats stats_of(std::vector<std::pair<std::string, double>> rates) {
  AttributeStats s;
  for (auto& [name, rate] : rates) s.attributes.push_back({name, 0, 0, rate});
  return s;
}

Image grey(double v, int size = 8) { return Image::filled(size, size, 3, RangeTag::unit, v); }

void write_dataset(const std::filesystem::path& root, const AttributeManifest& m, const std::vector<Image>& imgs) {
  for (std::size_t i = 0; i < imgs.size(); ++i) biasforge::save_image(imgs[i], root / m.records[i].image_id);
}

}  // namespace

TEST(Frequencies, HandCounts) {
  const auto s = biasforge::attribute_frequencies(ten_with_one_glasses());
  ASSERT_EQ(s.attributes.size(), 3u);
  EXPECT_EQ(s.attributes[0].positive_count, 1);
  EXPECT_EQ(s.attributes[0].total, 10);
  EXPECT_DOUBLE_EQ(s.attributes[0].positive_rate, 0.1);
  EXPECT_DOUBLE_EQ(s.attributes[1].positive_rate, 1.0);
  EXPECT_DOUBLE_EQ(s.attributes[2].positive_rate, 0.0);
  EXPECT_THROW(biasforge::attribute_frequencies(AttributeManifest{{"A"}, {}}), biasforge::Error);
}

TEST(Frequencies, MatchesBruteForceOnRandomManifests) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    AttributeManifest m;
    const int attrs = 1 + static_cast<int>(rng() % 6), n = 1 + static_cast<int>(rng() % 40);
    for (int a = 0; a < attrs; ++a) m.attribute_names.push_back("A" + std::to_string(a));
    for (int i = 0; i < n; ++i) {
      AttributeManifest::Record r{"x" + std::to_string(i), {}};
      for (int a = 0; a < attrs; ++a) r.values.push_back(rng() % 2 ? 1 : -1);
      m.records.push_back(r);
    }
    const auto s = biasforge::attribute_frequencies(m);
    for (int a = 0; a < attrs; ++a) {
      long count = 0;
      for (const auto& r : m.records) count += r.values[a] == 1;
      EXPECT_EQ(s.attributes[a].positive_count, count);
      EXPECT_EQ(s.attributes[a].positive_rate, static_cast<double>(count) / n);
    }
  }
}

TEST(Flagging, StrictThresholdAndOrdering) {
  EXPECT_EQ(biasforge::flag_underrepresented(stats_of({{"A", 0.1}, {"B", 0.5}}), 0.2),
            std::vector<std::string>{"A"});
  EXPECT_TRUE(biasforge::flag_underrepresented(stats_of({{"A", 0.2}}), 0.2).empty());
  EXPECT_TRUE(biasforge::flag_underrepresented(stats_of({{"A", 0.3}, {"B", 0.9}}), 0.2).empty());
  EXPECT_EQ(biasforge::flag_underrepresented(stats_of({{"Z", 0.05}, {"B", 0.1}, {"A", 0.1}}), 0.2),
            (std::vector<std::string>{"Z", "A", "B"}));
  EXPECT_THROW(biasforge::flag_underrepresented(stats_of({{"A", 0.1}}), 1.0), biasforge::Error);
  EXPECT_THROW(biasforge::flag_underrepresented(stats_of({{"A", 0.1}}), 0.0), biasforge::Error);
}

TEST(Flagging, MonotoneInThreshold) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::pair<std::string, double>> rates;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) rates.emplace_back("attr" + std::to_string(i), std::round(u(rng) * 20) / 20);
    const auto stats = stats_of(rates);
    double t1 = 0.001 + 0.998 * u(rng), t2 = 0.001 + 0.998 * u(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto f1 = biasforge::flag_underrepresented(stats, t1);
    const auto f2 = biasforge::flag_underrepresented(stats, t2);
    const std::set<std::string> big(f2.begin(), f2.end());
    for (const auto& name : f1) ASSERT_TRUE(big.count(name)) << name << " t1=" << t1 << " t2=" << t2;
  }
}

TEST(ToneHistogram, BinArithmetic) {
  const std::vector<Image> white{grey(1.0), grey(1.0)};
  const auto h = biasforge::tone_histogram(white);
  EXPECT_DOUBLE_EQ(h.mass[7], 1.0);
  const std::vector<Image> split{grey(0.1), grey(0.9)};
  const auto h2 = biasforge::tone_histogram(split);
  EXPECT_DOUBLE_EQ(h2.mass[0], 0.5);
  EXPECT_DOUBLE_EQ(h2.mass[7], 0.5);
  double total = 0.0;
  for (double m : h2.mass) total += m;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_THROW(biasforge::tone_histogram({}), biasforge::Error);
}

TEST(ToneHistogram, UsesCentralRegionOnly) {
  // dark border, bright centre: only the centre counts
  std::vector<double> px(16 * 16 * 3, 0.0);
  for (int r = 4; r < 12; ++r)
    for (int c = 4; c < 12; ++c)
      for (int ch = 0; ch < 3; ++ch) px[(r * 16 + c) * 3 + ch] = 0.95;
  const std::vector<Image> imgs{Image(16, 16, 3, RangeTag::unit, px)};
  EXPECT_DOUBLE_EQ(biasforge::tone_histogram(imgs).mass[7], 1.0);
}

TEST(StubExtractor, ConstantImageAndDimension) {
  const auto ex = biasforge::stub_extractor();
  EXPECT_EQ(ex->dim(), 12);
  for (double v : ex->embed(grey(0.3, 6))) EXPECT_NEAR(v, 0.3, 1e-12);
  EXPECT_EQ(ex->embed(grey(0.3, 30)).size(), 12u);
}

TEST(StubExtractor, FlipCovariance) {
  const auto ex = biasforge::stub_extractor();
  const Image img = testing_support::random_image(10, 12, 3, 7);
  const auto e = ex->embed(img);
  const auto f = ex->embed(biasforge::horizontal_flip(img));
  // quadrants (TL, TR, BL, BR); a flip swaps TL<->TR and BL<->BR
  const int swap_of[4] = {1, 0, 3, 2};
  for (int q = 0; q < 4; ++q)
    for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(f[q * 3 + ch], e[swap_of[q] * 3 + ch], 1e-12);
}

TEST(StubExtractor, TensorOverloadAgreesWithImage) {
  const auto ex = biasforge::stub_extractor();
  const Image img = testing_support::random_image(8, 8, 3, 8);
  const auto t = ex->embed(biasforge::to_tensor<double>(img));
  const auto e = ex->embed(img);
  ASSERT_EQ(t.size(), 12u);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(t[i], e[i], 1e-12);
}

TEST(Analyze, NoGlassesLightTonesFlagsEyeglassesAndDarkBins) {
  const auto dir = testing_support::scratch_dir("analyze_light");
  AttributeManifest m;
  m.attribute_names = {"Eyeglasses", "Smiling"};
  std::vector<Image> imgs;
  for (int i = 0; i < 10; ++i) {
    m.records.push_back({"f" + std::to_string(i) + ".png", {-1, i % 2 ? 1 : -1}});
    imgs.push_back(grey(i % 2 ? 0.8 : 0.9));
  }
  write_dataset(dir, m, imgs);
  const auto report = biasforge::analyze_dataset(m, dir, 0.2);
  ASSERT_EQ(report.flagged_attributes.size(), 1u);
  EXPECT_EQ(report.flagged_attributes[0].first, "Eyeglasses");
  EXPECT_EQ(report.flagged_tone_bins, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Analyze, EvenlySpreadFixtureHasNoFlags) {
  const auto dir = testing_support::scratch_dir("analyze_even");
  AttributeManifest m;
  m.attribute_names = {"Eyeglasses", "Pale_Skin"};
  std::vector<Image> imgs;
  for (int i = 0; i < 16; ++i) {
    m.records.push_back({"f" + std::to_string(i) + ".png", {i % 2 ? 1 : -1, i < 8 ? 1 : -1}});
    imgs.push_back(grey((i % 8 + 0.5) / 8.0));
  }
  write_dataset(dir, m, imgs);
  const auto report = biasforge::analyze_dataset(m, dir, 0.1);
  EXPECT_TRUE(report.flagged_attributes.empty());
  EXPECT_TRUE(report.flagged_tone_bins.empty());
  const auto near_one = biasforge::analyze_dataset(m, dir, 0.999);
  EXPECT_EQ(near_one.flagged_attributes.size(), 2u);
  EXPECT_EQ(near_one.flagged_tone_bins.size(), 8u);
}

TEST(Analyze, UnresolvedIdNamesTheId) {
  const auto dir = testing_support::scratch_dir("analyze_missing");
  AttributeManifest m{{"A"}, {{"ghost.png", {1}}}};
  try {
    biasforge::analyze_dataset(m, dir);
    FAIL();
  } catch (const biasforge::Error& e) {
    EXPECT_EQ(e.code(), biasforge::Errc::unresolved_id);
    EXPECT_NE(std::string(e.what()).find("ghost.png"), std::string::npos);
  }
}

TEST(Analyze, ReportTextRoundTripsFlags) {
  const auto dir = testing_support::scratch_dir("analyze_report");
  AttributeManifest m = ten_with_one_glasses();
  std::vector<Image> imgs(10, grey(0.5));
  write_dataset(dir, m, imgs);
  const auto report = biasforge::analyze_dataset(m, dir);
  const std::string text = biasforge::format_bias_report(report);
  EXPECT_EQ(text, biasforge::format_bias_report(biasforge::analyze_dataset(m, dir)));
  std::ofstream(dir / "bias_report.txt") << text;
  EXPECT_EQ(biasforge::read_flagged_attributes(dir / "bias_report.txt"),
            (std::vector<std::string>{"Bald", "Eyeglasses"}));
  EXPECT_EQ(biasforge::format_attribute_csv(report.stats).substr(0, 36), "attribute,positive_count,total,rate\n");
}
