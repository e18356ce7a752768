#include "biasforge/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "biasforge/error.hpp"

namespace biasforge {

namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

Image sobel_edges(const Image& gray) {
  if (gray.channels() != 1) fail(Errc::shape_mismatch, "sobel_edges expects a single-channel image");
  const int h = gray.height();
  const int w = gray.width();
  const double norm = 4.0 * std::sqrt(2.0);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  auto px = [&](int r, int c) { return gray.at(clampi(r, 0, h - 1), clampi(c, 0, w - 1)); };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx = (px(r - 1, c + 1) + 2.0 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2.0 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2.0 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2.0 * px(r - 1, c) + px(r - 1, c + 1));
      out[static_cast<std::size_t>(r) * w + c] = std::sqrt(gx * gx + gy * gy) / norm;
    }
  }
  return make_clamped(h, w, 1, RangeTag::unit, std::move(out));
}

Image gaussian_blur(const Image& img, double sigma, int radius) {
  if (!(sigma > 0.0)) fail(Errc::invalid_argument, "gaussian_blur: sigma must be positive");
  if (radius < 0) fail(Errc::invalid_argument, "gaussian_blur: negative radius");
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;

  const int h = img.height(), w = img.width(), ch = img.channels();
  std::vector<double> tmp(img.pixels().size()), out(img.pixels().size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at(r, clampi(c + i, 0, w - 1), k);
        tmp[img.index(r, c, k)] = acc;
      }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp[img.index(clampi(r + i, 0, h - 1), c, k)];
        out[img.index(r, c, k)] = acc;
      }
  return make_clamped(h, w, ch, img.range(), std::move(out));
}

std::vector<std::uint8_t> edge_mask(const Image& img, double threshold) {
  const Image gray = img.channels() == 3 ? to_grayscale(img) : img;
  const Image edges = sobel_edges(gray);
  const int h = img.height(), w = img.width();
  std::vector<std::uint8_t> strong(static_cast<std::size_t>(h) * w, 0), mask(strong.size(), 0);
  for (std::size_t i = 0; i < strong.size(); ++i) strong[i] = edges.pixels()[i] > threshold;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool hit = false;
      for (int dr = -1; dr <= 1 && !hit; ++dr)
        for (int dc = -1; dc <= 1 && !hit; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < h && cc >= 0 && cc < w && strong[static_cast<std::size_t>(rr) * w + cc]) hit = true;
        }
      mask[static_cast<std::size_t>(r) * w + c] = hit;
    }
  return mask;
}

Image edge_smooth(const Image& img, double threshold, double sigma) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "edge_smooth expects a unit-range image");
  if (!(threshold > 0.0 && threshold <= 1.0)) fail(Errc::invalid_argument, "edge_smooth: threshold outside (0, 1]");
  const auto mask = edge_mask(img, threshold);
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) return img;
  const Image blurred = gaussian_blur(img, sigma, 2);
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  const int ch = img.channels();
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p])
      for (int k = 0; k < ch; ++k) out[p * ch + k] = blurred.pixels()[p * ch + k];
  return img.with_pixels(std::move(out));
}

SlicResult slic_superpixels(const Image& img, int k, int iterations, double compactness) {
  if (img.channels() != 3) fail(Errc::shape_mismatch, "slic_superpixels expects a 3-channel image");
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "slic_superpixels expects a unit-range image");
  const int h = img.height(), w = img.width();
  const long n = static_cast<long>(h) * w;
  if (k < 1 || k > n)
    fail(Errc::invalid_argument, "slic_superpixels: K=" + std::to_string(k) + " must be in [1, " +
                                     std::to_string(n) + "]");
  if (iterations < 0) fail(Errc::invalid_argument, "slic_superpixels: negative iteration count");

  const int ny = clampi(static_cast<int>(std::lround(std::sqrt(static_cast<double>(k) * h / w))), 1, h);
  const int nx = clampi(k / ny, 1, w);
  const double cell_h = static_cast<double>(h) / ny;
  const double cell_w = static_cast<double>(w) / nx;
  const double alpha = std::sqrt(static_cast<double>(k) / static_cast<double>(n)) * compactness;
  const double a2 = alpha * alpha;

  struct Center {
    std::array<double, 3> rgb;
    double y, x;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(ny) * nx);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nx; ++j) {
      const double y = (i + 0.5) * cell_h;
      const double x = (j + 0.5) * cell_w;
      const int r = clampi(static_cast<int>(y), 0, h - 1);
      const int c = clampi(static_cast<int>(x), 0, w - 1);
      centers.push_back({{img.at(r, c, 0), img.at(r, c, 1), img.at(r, c, 2)}, r + 0.5, c + 0.5});
    }

  auto distance = [&](const Center& ctr, int r, int c) {
    const double dr = img.at(r, c, 0) - ctr.rgb[0];
    const double dg = img.at(r, c, 1) - ctr.rgb[1];
    const double db = img.at(r, c, 2) - ctr.rgb[2];
    const double dy = (r + 0.5) - ctr.y;
    const double dx = (c + 0.5) - ctr.x;
    return dr * dr + dg * dg + db * db + a2 * (dy * dy + dx * dx);
  };

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<double> best(static_cast<std::size_t>(n));
  const int reach_y = static_cast<int>(std::ceil(2.0 * cell_h));
  const int reach_x = static_cast<int>(std::ceil(2.0 * cell_w));

  auto assign = [&] {
    std::fill(labels.begin(), labels.end(), -1);
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const auto& ctr = centers[ci];
      const int r0 = std::max(0, static_cast<int>(ctr.y) - reach_y);
      const int r1 = std::min(h - 1, static_cast<int>(ctr.y) + reach_y);
      const int c0 = std::max(0, static_cast<int>(ctr.x) - reach_x);
      const int c1 = std::min(w - 1, static_cast<int>(ctr.x) + reach_x);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * w + c;
          const double d = distance(ctr, r, c);
          if (d < best[p]) {
            best[p] = d;
            labels[p] = static_cast<int>(ci);
          }
        }
    }
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const std::size_t p = static_cast<std::size_t>(r) * w + c;
        if (labels[p] >= 0) continue;
        for (std::size_t ci = 0; ci < centers.size(); ++ci) {
          const double d = distance(centers[ci], r, c);
          if (d < best[p]) {
            best[p] = d;
            labels[p] = static_cast<int>(ci);
          }
        }
      }
  };

  assign();
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::array<double, 6>> acc(centers.size(), std::array<double, 6>{});
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        auto& a = acc[labels[static_cast<std::size_t>(r) * w + c]];
        a[0] += img.at(r, c, 0);
        a[1] += img.at(r, c, 1);
        a[2] += img.at(r, c, 2);
        a[3] += r + 0.5;
        a[4] += c + 0.5;
        a[5] += 1.0;
      }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const auto& a = acc[ci];
      if (a[5] == 0.0) continue;
      centers[ci] = {{a[0] / a[5], a[1] / a[5], a[2] / a[5]}, a[3] / a[5], a[4] / a[5]};
    }
    assign();
  }

  std::vector<int> remap(centers.size(), -1);
  std::vector<int> compact(static_cast<std::size_t>(n));
  int count = 0;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    int& m = remap[labels[p]];
    if (m < 0) m = count++;
    compact[p] = m;
  }
  // Means are accumulated relative to each label's first pixel so that
  // uniform regions reproduce their colour exactly.
  std::vector<std::array<double, 3>> base(static_cast<std::size_t>(count));
  std::vector<std::array<double, 4>> sums(static_cast<std::size_t>(count), std::array<double, 4>{});
  for (std::size_t p = 0; p < compact.size(); ++p) {
    auto& s = sums[compact[p]];
    if (s[3] == 0.0)
      for (int ch = 0; ch < 3; ++ch) base[compact[p]][ch] = img.pixels()[p * 3 + ch];
    for (int ch = 0; ch < 3; ++ch) s[ch] += img.pixels()[p * 3 + ch] - base[compact[p]][ch];
    s[3] += 1.0;
  }
  std::vector<double> pixels(img.pixels().size());
  for (std::size_t p = 0; p < compact.size(); ++p) {
    const auto& s = sums[compact[p]];
    for (int ch = 0; ch < 3; ++ch) pixels[p * 3 + ch] = base[compact[p]][ch] + s[ch] / s[3];
  }
  return SlicResult{h, w, std::move(compact), count, make_clamped(h, w, 3, RangeTag::unit, std::move(pixels))};
}

}  // namespace biasforge
