#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "biasforge/tensor.hpp"

namespace biasforge {

// Value interval an Image's pixels live in.
enum class RangeTag {
  unit,   // [0, 1]: storage, file I/O, metrics
  model,  // [-1, 1]: network input/output
};

double range_min(RangeTag tag) noexcept;
double range_max(RangeTag tag) noexcept;
const char* to_string(RangeTag tag) noexcept;

// Dense H x W x C raster, interleaved by channel. The constructor rejects
// any pixel outside the tagged interval.
class Image {
 public:
  Image(int height, int width, int channels, RangeTag range, std::vector<double> pixels);

  static Image filled(int height, int width, int channels, RangeTag range, double value);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  RangeTag range() const noexcept { return range_; }
  std::span<const double> pixels() const noexcept { return pixels_; }

  double at(int row, int col, int channel = 0) const {
    return pixels_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + channel];
  }
  std::size_t index(int row, int col, int channel = 0) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + channel;
  }

  // Same geometry and range, new values (clamped into the range).
  Image with_pixels(std::vector<double> pixels) const;

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

 private:
  int height_;
  int width_;
  int channels_;
  RangeTag range_;
  std::vector<double> pixels_;
};

// Clamps every value into [lo, hi] of the tag, then builds the image.
Image make_clamped(int height, int width, int channels, RangeTag range, std::vector<double> pixels);

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

Image to_model_range(const Image& img);
Image from_model_range(const Image& img);

// Bilinear with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& img, int out_height, int out_width);
Image to_grayscale(const Image& img);
Image horizontal_flip(const Image& img);
// Rotation about the image centre; |angle| <= 45 degrees; edge replication.
Image rotate(const Image& img, double angle_deg);

// Central crop covering `fraction` of each dimension (at least one pixel).
Image center_crop(const Image& img, double fraction);

// Images -> [N, C, H, W]; all inputs must share shape and range.
template <typename T>
ad::Tensor<T> to_tensor(std::span<const Image> images);
template <typename T>
ad::Tensor<T> to_tensor(const Image& image);
// Sample `index` of an [N, C, H, W] tensor, clamped into `range`.
template <typename T>
Image from_tensor(const ad::Tensor<T>& batch, int index, RangeTag range);

}  // namespace biasforge
