#pragma once

// Enhancement preprocessing: Sobel edges, masked Gaussian edge smoothing and
// SLIC-style superpixel simplification.

#include <cstdint>
#include <vector>

#include "biasforge/image.hpp"

namespace biasforge {

// Gradient magnitude of a single-channel image, divided by 4*sqrt(2).
Image sobel_edges(const Image& gray);

// Separable Gaussian blur with a (2*radius+1)-tap kernel and edge replication.
Image gaussian_blur(const Image& img, double sigma, int radius = 2);

// Pixels whose grey-level edge magnitude exceeds `threshold`, dilated by 3x3.
std::vector<std::uint8_t> edge_mask(const Image& img, double threshold);

// Replaces masked pixels by a 5x5 Gaussian blur of the original.
Image edge_smooth(const Image& img, double threshold, double sigma);

struct SlicResult {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major, values in [0, label_count)
  int label_count = 0;
  Image recolored;  // every pixel replaced by its superpixel's mean colour
};

inline constexpr double kSlicCompactness = 10.0 / 255.0;

SlicResult slic_superpixels(const Image& img, int k, int iterations = 10,
                            double compactness = kSlicCompactness);

}  // namespace biasforge
