#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "biasforge/image.hpp"
#include "biasforge/nn.hpp"
#include "biasforge/random.hpp"
#include "biasforge/tensor.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using biasforge::Image;
using biasforge::RangeTag;
using biasforge::ad::Tensor;

// Fresh, empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("biasforge_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline Image random_image(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> px(static_cast<std::size_t>(h) * w * c);
  for (auto& v : px) v = u(rng);
  return Image(h, w, c, RangeTag::unit, std::move(px));
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline Tensor<double> random_tensor(biasforge::ad::Shape shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  const auto n = biasforge::ad::numel(shape);
  return Tensor<double>::from(std::move(shape), random_values(n, seed, lo, hi));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Compares analytic parameter gradients of `loss` with central differences.
inline GradCheck check_parameter_gradients(const std::vector<Tensor<double>>& params,
                                           const std::vector<std::string>& names,
                                           const std::function<Tensor<double>()>& loss, double step = 1e-6) {
  GradCheck out;
  const Tensor<double> value = loss();
  const auto grads = biasforge::ad::grad<double>(value, params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double> leaf = params[p];
    auto data = leaf.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = loss().item();
      data[i] = saved - step;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[p].data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = names[p] + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " +
                    std::to_string(numeric);
      }
      ++out.checked;
    }
  }
  return out;
}

inline GradCheck check_parameter_gradients(const biasforge::nn::ParameterSet<double>& params,
                                           const std::function<Tensor<double>()>& loss, double step = 1e-6) {
  return check_parameter_gradients(params.tensors(), params.names(), loss, step);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Direct per-window SSIM over the valid region of two single-channel unit images.
inline double brute_force_ssim(const Image& a, const Image& b, int window = 11, double sigma = 1.5) {
  std::vector<double> g(static_cast<std::size_t>(window));
  double gsum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - (window - 1) / 2.0;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    gsum += g[i];
  }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + window <= a.height(); ++r)
    for (int c = 0; c + window <= a.width(); ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int u = 0; u < window; ++u)
        for (int v = 0; v < window; ++v) {
          const double w = g[u] * g[v] / (gsum * gsum);
          const double x = a.at(r + u, c + v), y = b.at(r + u, c + v);
          mx += w * x;
          my += w * y;
          sxx += w * x * x;
          syy += w * y * y;
          sxy += w * x * y;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

}  // namespace testing_support
