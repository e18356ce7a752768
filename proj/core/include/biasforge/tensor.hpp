#pragma once

// Reverse-mode automatic differentiation over dense NCHW tensors.
//
// Every backward rule is itself written in terms of differentiable ops, so
// gradients computed with create_graph=true can be differentiated again.
// The gradient penalty of the skin model depends on this.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace biasforge::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
using BackwardFn =
    std::function<std::vector<Tensor<T>>(const Tensor<T>& out, const Tensor<T>& grad)>;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Tensor<T>> inputs;
  BackwardFn<T> backward;
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor from(Shape shape, std::vector<T> values);
  // Leaf that gradients flow into.
  static Tensor parameter(Shape shape, std::vector<T> values);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;
  int rank() const;
  std::size_t size() const;

  std::span<const T> data() const;
  // Only valid on leaves; used by optimizers and tests.
  std::span<T> mutable_data();

  T item() const;
  T operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool is_leaf() const noexcept { return node_ && !node_->backward; }
  Tensor detach() const;

  detail::Node<T>* node() const noexcept { return node_.get(); }

  static Tensor make(Shape shape, std::vector<T> value, std::vector<Tensor> inputs,
                     detail::BackwardFn<T> backward, const char* op);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// Graph recording switch. Gradient computation without create_graph runs
// with recording disabled.
bool grad_enabled() noexcept;

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGrad : GradModeGuard {
  NoGrad() : GradModeGuard(false) {}
};

// d(output)/d(inputs) for a single-element output. Inputs unreachable from
// the output receive zero tensors.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, std::span<const Tensor<T>> inputs,
                            bool create_graph = false);

// ---- elementwise -----------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> neg(const Tensor<T>& a);
template <typename T> Tensor<T> scale(const Tensor<T>& a, double s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, double s);
template <typename T> Tensor<T> square(const Tensor<T>& a);
// sqrt with a zero subgradient at 0.
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
template <typename T> Tensor<T> abs(const Tensor<T>& a);
// 1/x, and 0 where x == 0.
template <typename T> Tensor<T> reciprocal_or_zero(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, double slope);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
// Multiply by a constant (non-differentiated) tensor of the same shape.
template <typename T> Tensor<T> mul_const(const Tensor<T>& a, std::vector<T> mask);

// ---- reductions and broadcasts --------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> expand_scalar(const Tensor<T>& s, const Shape& shape);
// [N, ...] -> [N]
template <typename T> Tensor<T> sum_per_sample(const Tensor<T>& a);
// [N] -> [N, ...]
template <typename T> Tensor<T> expand_per_sample(const Tensor<T>& s, const Shape& shape);
template <typename T> Tensor<T> mul_per_sample(const Tensor<T>& a, const Tensor<T>& s);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// ---- dense ----------------------------------------------------------------
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
// [F] -> [N, F]
template <typename T> Tensor<T> expand_rows(const Tensor<T>& b, int rows);
// [N, F] -> [F]
template <typename T> Tensor<T> sum_rows(const Tensor<T>& a);
// x[N, in] * w[out, in]^T + b[out]
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// ---- channels -------------------------------------------------------------
template <typename T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);
template <typename T> Tensor<T> slice_channels(const Tensor<T>& a, int begin, int end);
// Inverse placement of slice_channels: zero tensor with `a` at [begin, begin+C).
template <typename T> Tensor<T> embed_channels(const Tensor<T>& a, int begin, int total);
// [C] -> [N, C, H, W]
template <typename T> Tensor<T> expand_channels(const Tensor<T>& b, const Shape& shape);
// [N, C, H, W] -> [C]
template <typename T> Tensor<T> channel_sum(const Tensor<T>& a);
template <typename T> Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b);
// [N, C, H, W] -> [N, C]
template <typename T> Tensor<T> spatial_mean(const Tensor<T>& a);
// [N, C] -> [N, C, H, W]
template <typename T> Tensor<T> spatial_expand(const Tensor<T>& a, int height, int width);
// Rec.601 luma over channels: [N, 3, H, W] -> [N, 1, H, W]
template <typename T> Tensor<T> luma(const Tensor<T>& a);
template <typename T> Tensor<T> luma_adjoint(const Tensor<T>& g);
// Means over the four image quadrants: [N, C, H, W] -> [N, 4*C], ordered
// (top-left, top-right, bottom-left, bottom-right) x channel.
template <typename T> Tensor<T> quadrant_means(const Tensor<T>& a);
template <typename T> Tensor<T> quadrant_means_adjoint(const Tensor<T>& g, int height, int width);

// ---- convolution ------------------------------------------------------------
struct ConvGeometry {
  int stride = 1;
  int padding = 0;  // zero padding
};

// x[N, Cin, H, W] (*) w[Cout, Cin, k, k] -> [N, Cout, Ho, Wo]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry geo);
// Adjoint of conv2d with respect to x; this is a transposed convolution.
// g[N, Cout, Ho, Wo], w[Cout, Cin, k, k] -> [N, Cin, height, width]
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, ConvGeometry geo,
                            int height, int width);
// Adjoint of conv2d with respect to w. -> [Cout, Cin, k, k]
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, ConvGeometry geo, int kernel);

// Edge-replicating pad by `pad` pixels on every side.
template <typename T> Tensor<T> pad_replicate(const Tensor<T>& x, int pad);
template <typename T> Tensor<T> pad_replicate_adjoint(const Tensor<T>& g, int pad);

// Convenience operators.
template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

}  // namespace biasforge::ad
