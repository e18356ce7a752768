#pragma once

// Parameter containers, layers, and the Adam optimizer on top of ad::Tensor.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasforge/random.hpp"
#include "biasforge/tensor.hpp"

namespace biasforge::nn {

using ad::Tensor;

// Ordered, named set of trainable leaves. Tensors are shared handles, so
// layers keep copies of the same parameters they register here.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(std::string name, ad::Shape shape, std::vector<T> values);
  const Tensor<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t scalar_count() const;

  // Overwrites values in place from a same-shaped set.
  void assign(const ParameterSet& other);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
  ad::ConvGeometry geo;
  int replicate_pad = 0;  // applied before the (zero-padded) convolution

  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight;  // [Cin, Cout, k, k]
  Tensor<T> bias;    // [Cout]
  ad::ConvGeometry geo;

  int output_size(int input_size) const;
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weights and biases.
template <typename T>
Conv2d<T> make_conv(ParameterSet<T>& params, const std::string& name, int in, int out, int kernel,
                    int stride, int padding, Rng& rng, int replicate_pad = 0);
template <typename T>
ConvTranspose2d<T> make_conv_transpose(ParameterSet<T>& params, const std::string& name, int in,
                                       int out, int kernel, int stride, int padding, Rng& rng);
template <typename T>
Linear<T> make_linear(ParameterSet<T>& params, const std::string& name, int in, int out, Rng& rng);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first;
  std::vector<std::vector<T>> second;
  std::int64_t step = 0;
};

// Bias-corrected Adam step applied in place. Throws Errc::non_finite on a
// NaN/inf gradient before touching any parameter.
template <typename T>
void adam_update(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads,
                 AdamState<T>& state, const AdamOptions& options);

}  // namespace biasforge::nn
