#include "biasforge/nn.hpp"

#include <algorithm>
#include <cmath>

#include "biasforge/error.hpp"

namespace biasforge::nn {

template <typename T>
Tensor<T> ParameterSet<T>::add(std::string name, ad::Shape shape, std::vector<T> values) {
  if (contains(name)) fail(Errc::invalid_argument, "duplicate parameter " + name);
  auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
  names_.push_back(std::move(name));
  tensors_.push_back(t);
  return t;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) fail(Errc::missing_parameters, "no parameter named " + std::string(name));
  return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

template <typename T>
bool ParameterSet<T>::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

template <typename T>
void ParameterSet<T>::assign(const ParameterSet& other) {
  if (other.names_ != names_) fail(Errc::shape_mismatch, "parameter sets have different layouts");
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (other.tensors_[i].shape() != tensors_[i].shape())
      fail(Errc::shape_mismatch, "parameter " + names_[i] + " has a different shape");
    auto dst = tensors_[i];
    std::ranges::copy(other.tensors_[i].data(), dst.mutable_data().begin());
  }
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> in = replicate_pad > 0 ? ad::pad_replicate(x, replicate_pad) : x;
  return ad::add_channel_bias(ad::conv2d(in, weight, geo), bias);
}

template <typename T>
int ConvTranspose2d<T>::output_size(int input_size) const {
  return (input_size - 1) * geo.stride - 2 * geo.padding + weight.dim(2);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::operator()(const Tensor<T>& x) const {
  const int h = output_size(x.dim(2));
  const int w = output_size(x.dim(3));
  return ad::add_channel_bias(ad::conv2d_input_grad(x, weight, geo, h, w), bias);
}

namespace {

template <typename T>
std::vector<T> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(uniform(rng, -bound, bound));
  return v;
}

}  // namespace

template <typename T>
Conv2d<T> make_conv(ParameterSet<T>& params, const std::string& name, int in, int out, int kernel,
                    int stride, int padding, Rng& rng, int replicate_pad) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in) * kernel * kernel);
  Conv2d<T> layer;
  layer.weight = params.add(name + ".weight", {out, in, kernel, kernel},
                            uniform_values<T>(static_cast<std::size_t>(out) * in * kernel * kernel, bound, rng));
  layer.bias = params.add(name + ".bias", {out}, uniform_values<T>(out, bound, rng));
  layer.geo = {stride, padding};
  layer.replicate_pad = replicate_pad;
  return layer;
}

template <typename T>
ConvTranspose2d<T> make_conv_transpose(ParameterSet<T>& params, const std::string& name, int in,
                                       int out, int kernel, int stride, int padding, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(out) * kernel * kernel);
  ConvTranspose2d<T> layer;
  layer.weight = params.add(name + ".weight", {in, out, kernel, kernel},
                            uniform_values<T>(static_cast<std::size_t>(out) * in * kernel * kernel, bound, rng));
  layer.bias = params.add(name + ".bias", {out}, uniform_values<T>(out, bound, rng));
  layer.geo = {stride, padding};
  return layer;
}

template <typename T>
Linear<T> make_linear(ParameterSet<T>& params, const std::string& name, int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear<T> layer;
  layer.weight = params.add(name + ".weight", {out, in},
                            uniform_values<T>(static_cast<std::size_t>(out) * in, bound, rng));
  layer.bias = params.add(name + ".bias", {out}, uniform_values<T>(out, bound, rng));
  return layer;
}

template <typename T>
void adam_update(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads,
                 AdamState<T>& state, const AdamOptions& options) {
  if (params.size() != grads.size()) fail(Errc::shape_mismatch, "adam: params/grads count differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape())
      fail(Errc::shape_mismatch, "adam: gradient shape differs from parameter");
    for (T g : grads[i].data())
      if (!std::isfinite(g)) fail(Errc::non_finite, "adam: non-finite gradient");
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.size(), T(0));
      state.second.emplace_back(p.size(), T(0));
    }
  }
  if (state.first.size() != params.size()) fail(Errc::shape_mismatch, "adam: state layout differs");
  state.step += 1;
  const double b1 = options.beta1, b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i];
    auto values = p.mutable_data();
    auto g = grads[i].data();
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * double(g[j]) * g[j]);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] = static_cast<T>(values[j] - options.lr * m_hat / (std::sqrt(v_hat) + options.eps));
    }
  }
}

#define BIASFORGE_INSTANTIATE(T)                                                                   \
  template class ParameterSet<T>;                                                                  \
  template struct Conv2d<T>;                                                                       \
  template struct ConvTranspose2d<T>;                                                              \
  template Conv2d<T> make_conv(ParameterSet<T>&, const std::string&, int, int, int, int, int, Rng&, \
                               int);                                                               \
  template ConvTranspose2d<T> make_conv_transpose(ParameterSet<T>&, const std::string&, int, int,  \
                                                  int, int, int, Rng&);                            \
  template Linear<T> make_linear(ParameterSet<T>&, const std::string&, int, int, Rng&);            \
  template void adam_update(std::span<const Tensor<T>>, std::span<const Tensor<T>>, AdamState<T>&, \
                            const AdamOptions&);

BIASFORGE_INSTANTIATE(float)
BIASFORGE_INSTANTIATE(double)

#undef BIASFORGE_INSTANTIATE

}  // namespace biasforge::nn
