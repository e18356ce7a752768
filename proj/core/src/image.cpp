#include "biasforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "biasforge/error.hpp"

namespace biasforge {

double range_min(RangeTag tag) noexcept { return tag == RangeTag::unit ? 0.0 : -1.0; }
double range_max(RangeTag) noexcept { return 1.0; }
const char* to_string(RangeTag tag) noexcept { return tag == RangeTag::unit ? "unit" : "model"; }

Image::Image(int height, int width, int channels, RangeTag range, std::vector<double> pixels)
    : height_(height), width_(width), channels_(channels), range_(range), pixels_(std::move(pixels)) {
  if (height < 1 || width < 1) fail(Errc::invalid_argument, "image dimensions must be positive");
  if (channels != 1 && channels != 3) fail(Errc::invalid_argument, "image must have 1 or 3 channels");
  if (pixels_.size() != static_cast<std::size_t>(height) * width * channels)
    fail(Errc::shape_mismatch, "pixel buffer length does not match image geometry");
  const double lo = range_min(range), hi = range_max(range);
  for (double v : pixels_)
    if (!(v >= lo && v <= hi))
      fail(Errc::range_mismatch, "pixel value " + std::to_string(v) + " outside " + to_string(range) +
                                     " range");
}

Image Image::filled(int height, int width, int channels, RangeTag range, double value) {
  return Image(height, width, channels, range,
               std::vector<double>(static_cast<std::size_t>(height) * width * channels, value));
}

Image Image::with_pixels(std::vector<double> pixels) const {
  return make_clamped(height_, width_, channels_, range_, std::move(pixels));
}

Image make_clamped(int height, int width, int channels, RangeTag range, std::vector<double> pixels) {
  const double lo = range_min(range), hi = range_max(range);
  for (double& v : pixels) {
    if (std::isnan(v)) fail(Errc::non_finite, "NaN pixel value");
    v = std::clamp(v, lo, hi);
  }
  return Image(height, width, channels, range, std::move(pixels));
}

Image to_model_range(const Image& img) {
  if (img.range() != RangeTag::unit) fail(Errc::range_mismatch, "to_model_range expects a unit-range image");
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  for (double& v : out) v = 2.0 * v - 1.0;
  return make_clamped(img.height(), img.width(), img.channels(), RangeTag::model, std::move(out));
}

Image from_model_range(const Image& img) {
  if (img.range() != RangeTag::model) fail(Errc::range_mismatch, "from_model_range expects a model-range image");
  std::vector<double> out(img.pixels().begin(), img.pixels().end());
  for (double& v : out) v = (v + 1.0) / 2.0;
  return make_clamped(img.height(), img.width(), img.channels(), RangeTag::unit, std::move(out));
}

namespace {

// Bilinear sample at continuous pixel-index coordinates, clamped to the edge.
void sample_bilinear(const Image& img, double y, double x, double* out) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const double fy = y - y0, fx = x - x0;
  for (int c = 0; c < img.channels(); ++c) {
    const double top = img.at(y0, x0, c) + fx * (img.at(y0, x1, c) - img.at(y0, x0, c));
    const double bottom = img.at(y1, x0, c) + fx * (img.at(y1, x1, c) - img.at(y1, x0, c));
    out[c] = top + fy * (bottom - top);
  }
}

}  // namespace

Image resize_bilinear(const Image& img, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) fail(Errc::invalid_argument, "resize target must be at least 1x1");
  const int c = img.channels();
  std::vector<double> out(static_cast<std::size_t>(out_height) * out_width * c);
  const double sy = static_cast<double>(img.height()) / out_height;
  const double sx = static_cast<double>(img.width()) / out_width;
  for (int r = 0; r < out_height; ++r)
    for (int col = 0; col < out_width; ++col)
      sample_bilinear(img, (r + 0.5) * sy - 0.5, (col + 0.5) * sx - 0.5,
                      out.data() + (static_cast<std::size_t>(r) * out_width + col) * c);
  return make_clamped(out_height, out_width, c, img.range(), std::move(out));
}

Image to_grayscale(const Image& img) {
  if (img.channels() != 3) fail(Errc::invalid_argument, "to_grayscale expects a 3-channel image");
  std::vector<double> out(static_cast<std::size_t>(img.height()) * img.width());
  auto px = img.pixels();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  return make_clamped(img.height(), img.width(), 1, img.range(), std::move(out));
}

Image horizontal_flip(const Image& img) {
  std::vector<double> out(img.pixels().size());
  const int w = img.width(), c = img.channels();
  for (int r = 0; r < img.height(); ++r)
    for (int col = 0; col < w; ++col)
      for (int ch = 0; ch < c; ++ch) out[img.index(r, col, ch)] = img.at(r, w - 1 - col, ch);
  return Image(img.height(), img.width(), c, img.range(), std::move(out));
}

Image rotate(const Image& img, double angle_deg) {
  if (!(std::abs(angle_deg) <= 45.0)) fail(Errc::invalid_argument, "rotation angle must be within ±45°");
  if (angle_deg == 0.0) return img;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = img.height() / 2.0, cx = img.width() / 2.0;
  const int c = img.channels();
  std::vector<double> out(img.pixels().size());
  for (int r = 0; r < img.height(); ++r)
    for (int col = 0; col < img.width(); ++col) {
      const double dx = col + 0.5 - cx, dy = r + 0.5 - cy;
      // inverse mapping: output -> source
      const double sx = cs * dx + sn * dy + cx - 0.5;
      const double sy = -sn * dx + cs * dy + cy - 0.5;
      sample_bilinear(img, sy, sx, out.data() + img.index(r, col));
    }
  return make_clamped(img.height(), img.width(), c, img.range(), std::move(out));
}

Image center_crop(const Image& img, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) fail(Errc::invalid_argument, "crop fraction must be in (0, 1]");
  const int h = std::max(1, static_cast<int>(std::lround(img.height() * fraction)));
  const int w = std::max(1, static_cast<int>(std::lround(img.width() * fraction)));
  const int top = (img.height() - h) / 2, left = (img.width() - w) / 2;
  const int c = img.channels();
  std::vector<double> out(static_cast<std::size_t>(h) * w * c);
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col)
      for (int ch = 0; ch < c; ++ch)
        out[(static_cast<std::size_t>(r) * w + col) * c + ch] = img.at(top + r, left + col, ch);
  return Image(h, w, c, img.range(), std::move(out));
}

template <typename T>
ad::Tensor<T> to_tensor(std::span<const Image> images) {
  if (images.empty()) fail(Errc::empty_input, "to_tensor: no images");
  const Image& first = images.front();
  const int n = static_cast<int>(images.size());
  const int c = first.channels(), h = first.height(), w = first.width();
  std::vector<T> values(static_cast<std::size_t>(n) * c * h * w);
  for (int i = 0; i < n; ++i) {
    const Image& img = images[i];
    if (!img.same_shape(first) || img.range() != first.range())
      fail(Errc::shape_mismatch, "to_tensor: images differ in shape or range");
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col)
          values[((static_cast<std::size_t>(i) * c + ch) * h + r) * w + col] = static_cast<T>(img.at(r, col, ch));
  }
  return ad::Tensor<T>::from({n, c, h, w}, std::move(values));
}

template <typename T>
ad::Tensor<T> to_tensor(const Image& image) {
  return to_tensor<T>(std::span<const Image>(&image, 1));
}

template <typename T>
Image from_tensor(const ad::Tensor<T>& batch, int index, RangeTag range) {
  if (batch.rank() != 4) fail(Errc::shape_mismatch, "from_tensor: expected an NCHW tensor");
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (index < 0 || index >= batch.dim(0)) fail(Errc::invalid_argument, "from_tensor: index out of range");
  std::vector<double> out(static_cast<std::size_t>(c) * h * w);
  auto v = batch.data();
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col)
        out[(static_cast<std::size_t>(r) * w + col) * c + ch] =
            static_cast<double>(v[((static_cast<std::size_t>(index) * c + ch) * h + r) * w + col]);
  return make_clamped(h, w, c, range, std::move(out));
}

template ad::Tensor<float> to_tensor<float>(std::span<const Image>);
template ad::Tensor<double> to_tensor<double>(std::span<const Image>);
template ad::Tensor<float> to_tensor<float>(const Image&);
template ad::Tensor<double> to_tensor<double>(const Image&);
template Image from_tensor<float>(const ad::Tensor<float>&, int, RangeTag);
template Image from_tensor<double>(const ad::Tensor<double>&, int, RangeTag);

}  // namespace biasforge
