#include "biasforge/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "biasforge/error.hpp"

namespace biasforge::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  fail(Errc::shape_mismatch,
       std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const char* op, const Shape& s, int rank) {
  if (static_cast<int>(s.size()) != rank)
    fail(Errc::shape_mismatch,
         std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

template <typename T, typename F>
std::vector<T> map_values(const Tensor<T>& a, F f) {
  auto in = a.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return out;
}

template <typename T, typename F>
std::vector<T> zip_values(const Tensor<T>& a, const Tensor<T>& b, F f) {
  auto x = a.data();
  auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}
GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

// ---- Tensor ---------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  std::vector<T> values(numel(shape), value);
  return from(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
  if (values.size() != numel(shape))
    fail(Errc::shape_mismatch, "tensor data length " + std::to_string(values.size()) +
                                   " does not match shape " + shape_string(shape));
  Tensor t;
  t.node_ = std::make_shared<detail::Node<T>>();
  t.node_->shape = std::move(shape);
  t.node_->value = std::move(values);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node_->shape;
}

template <typename T>
int Tensor<T>::dim(int axis) const {
  return node_->shape.at(static_cast<std::size_t>(axis));
}

template <typename T>
int Tensor<T>::rank() const {
  return static_cast<int>(node_->shape.size());
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return node_->value.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) fail(Errc::shape_mismatch, "item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->value);
}

template <typename T>
Tensor<T> Tensor<T>::make(Shape shape, std::vector<T> value, std::vector<Tensor> inputs,
                          detail::BackwardFn<T> backward, const char* op) {
  Tensor t = from(std::move(shape), std::move(value));
  bool needs = g_grad_enabled &&
               std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& in) { return in.requires_grad(); });
  if (needs) {
    t.node_->requires_grad = true;
    t.node_->op = op;
    t.node_->inputs = std::move(inputs);
    t.node_->backward = std::move(backward);
  }
  return t;
}

// ---- gradient engine --------------------------------------------------------

template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, std::span<const Tensor<T>> inputs,
                            bool create_graph) {
  if (output.size() != 1)
    fail(Errc::shape_mismatch, "grad() needs a single-element output, got " +
                                   shape_string(output.shape()));
  std::vector<Tensor<T>> result;
  result.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const auto& in : inputs) result.push_back(Tensor<T>::zeros(in.shape()));
    return result;
  }

  // Post-order over the recorded graph.
  std::vector<Tensor<T>> order;
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<std::pair<Tensor<T>, std::size_t>> stack{{output, 0}};
  visited.insert(output.node());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    auto* node = t.node();
    if (next < node->inputs.size()) {
      const Tensor<T>& child = node->inputs[next++];
      if (child.requires_grad() && visited.insert(child.node()).second) stack.push_back({child, 0});
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  std::unordered_set<const detail::Node<T>*> targets;
  for (const auto& in : inputs) targets.insert(in.node());
  std::unordered_set<const detail::Node<T>*> needed;
  for (const auto& t : order) {
    auto* node = t.node();
    bool n = targets.count(node) > 0;
    for (const auto& in : node->inputs) n = n || needed.count(in.node()) > 0;
    if (n) needed.insert(node);
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<const detail::Node<T>*, Tensor<T>> grads;
  grads[output.node()] = Tensor<T>::full(output.shape(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = it->node();
    if (!needed.count(node) || !node->backward) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    std::vector<Tensor<T>> parts = node->backward(*it, found->second);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const auto& in = node->inputs[i];
      if (!in.requires_grad() || !needed.count(in.node()) || !parts[i].defined()) continue;
      auto slot = grads.find(in.node());
      if (slot == grads.end()) {
        grads.emplace(in.node(), parts[i]);
      } else {
        slot->second = add(slot->second, parts[i]);
      }
    }
  }

  for (const auto& in : inputs) {
    auto found = grads.find(in.node());
    result.push_back(found == grads.end() ? Tensor<T>::zeros(in.shape()) : found->second);
  }
  return result;
}

// ---- elementwise -------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("add", a, b);
  return Tensor<T>::make(a.shape(), zip_values(a, b, [](T x, T y) { return x + y; }), {a, b},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{g, g};
                         },
                         "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("sub", a, b);
  return Tensor<T>::make(a.shape(), zip_values(a, b, [](T x, T y) { return x - y; }), {a, b},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{g, neg(g)};
                         },
                         "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same("mul", a, b);
  return Tensor<T>::make(a.shape(), zip_values(a, b, [](T x, T y) { return x * y; }), {a, b},
                         [a, b](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{mul(g, b), mul(g, a)};
                         },
                         "mul");
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(), map_values(a, [](T x) { return -x; }), {a},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{neg(g)};
                         },
                         "neg");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  const T k = static_cast<T>(s);
  return Tensor<T>::make(a.shape(), map_values(a, [k](T x) { return x * k; }), {a},
                         [s](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{scale(g, s)};
                         },
                         "scale");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double s) {
  const T k = static_cast<T>(s);
  return Tensor<T>::make(a.shape(), map_values(a, [k](T x) { return x + k; }), {a},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{g};
                         },
                         "add_scalar");
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(), map_values(a, [](T x) { return x * x; }), {a},
                         [a](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{mul(g, scale(a, 2.0))};
                         },
                         "square");
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(), map_values(a, [](T x) { return std::sqrt(x); }), {a},
                         [](const Tensor<T>& out, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{
                               mul(g, scale(reciprocal_or_zero(out), 0.5))};
                         },
                         "sqrt");
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(), map_values(a, [](T x) { return std::abs(x); }), {a},
                         [a](const Tensor<T>&, const Tensor<T>& g) {
                           auto sign = map_values(a, [](T x) {
                             return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
                           });
                           return std::vector<Tensor<T>>{mul_const(g, std::move(sign))};
                         },
                         "abs");
}

template <typename T>
Tensor<T> reciprocal_or_zero(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(),
                         map_values(a, [](T x) { return x == T(0) ? T(0) : T(1) / x; }), {a},
                         [](const Tensor<T>& out, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{neg(mul(g, square(out)))};
                         },
                         "reciprocal_or_zero");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return leaky_relu(a, 0.0);
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double slope) {
  const T k = static_cast<T>(slope);
  return Tensor<T>::make(a.shape(), map_values(a, [k](T x) { return x > T(0) ? x : k * x; }), {a},
                         [a, k](const Tensor<T>&, const Tensor<T>& g) {
                           auto mask = map_values(a, [k](T x) { return x > T(0) ? T(1) : k; });
                           return std::vector<Tensor<T>>{mul_const(g, std::move(mask))};
                         },
                         "leaky_relu");
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(), map_values(a, [](T x) { return std::tanh(x); }), {a},
                         [](const Tensor<T>& out, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{sub(g, mul(g, square(out)))};
                         },
                         "tanh");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return Tensor<T>::make(a.shape(),
                         map_values(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }), {a},
                         [](const Tensor<T>& out, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{mul(g, sub(out, square(out)))};
                         },
                         "sigmoid");
}

template <typename T>
Tensor<T> mul_const(const Tensor<T>& a, std::vector<T> mask) {
  if (mask.size() != a.size()) fail(Errc::shape_mismatch, "mul_const: mask length mismatch");
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a},
                         [mask = std::move(mask)](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{mul_const(g, mask)};
                         },
                         "mul_const");
}

// ---- reductions and broadcasts ---------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto x = a.data();
  T total = std::accumulate(x.begin(), x.end(), T(0));
  return Tensor<T>::make({}, {total}, {a},
                         [shape = a.shape()](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{expand_scalar(g, shape)};
                         },
                         "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

template <typename T>
Tensor<T> expand_scalar(const Tensor<T>& s, const Shape& shape) {
  if (s.size() != 1) fail(Errc::shape_mismatch, "expand_scalar: input is not a scalar");
  return Tensor<T>::make(shape, std::vector<T>(numel(shape), s.item()), {s},
                         [sshape = s.shape()](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{reshape(sum(g), sshape)};
                         },
                         "expand_scalar");
}

template <typename T>
Tensor<T> sum_per_sample(const Tensor<T>& a) {
  if (a.rank() < 1) fail(Errc::shape_mismatch, "sum_per_sample: rank 0 input");
  const int n = a.dim(0);
  const std::size_t per = a.size() / static_cast<std::size_t>(n);
  std::vector<T> out(n, T(0));
  auto x = a.data();
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < per; ++j) out[i] += x[i * per + j];
  return Tensor<T>::make({n}, std::move(out), {a},
                         [shape = a.shape()](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{expand_per_sample(g, shape)};
                         },
                         "sum_per_sample");
}

template <typename T>
Tensor<T> expand_per_sample(const Tensor<T>& s, const Shape& shape) {
  require_rank("expand_per_sample", s.shape(), 1);
  if (shape.empty() || shape[0] != s.dim(0)) shape_error("expand_per_sample", s.shape(), shape);
  const int n = s.dim(0);
  const std::size_t per = numel(shape) / static_cast<std::size_t>(n);
  std::vector<T> out(numel(shape));
  auto v = s.data();
  for (int i = 0; i < n; ++i) std::fill_n(out.begin() + i * per, per, v[i]);
  return Tensor<T>::make(shape, std::move(out), {s},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{sum_per_sample(g)};
                         },
                         "expand_per_sample");
}

template <typename T>
Tensor<T> mul_per_sample(const Tensor<T>& a, const Tensor<T>& s) {
  return mul(a, expand_per_sample(s, a.shape()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  std::vector<T> values(a.data().begin(), a.data().end());
  return Tensor<T>::make(std::move(shape), std::move(values), {a},
                         [from = a.shape()](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{reshape(g, from)};
                         },
                         "reshape");
}

// ---- dense -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MapMat<T>(out.data(), m, n).noalias() =
      MapConstMat<T>(a.data().data(), m, k) * MapConstMat<T>(b.data().data(), k, n);
  return Tensor<T>::make({m, n}, std::move(out), {a, b},
                         [a, b](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{matmul(g, transpose(b)),
                                                         matmul(transpose(a), g)};
                         },
                         "matmul");
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank("transpose", a.shape(), 2);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<T> out(a.size());
  MapMat<T>(out.data(), n, m) = MapConstMat<T>(a.data().data(), m, n).transpose();
  return Tensor<T>::make({n, m}, std::move(out), {a},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{transpose(g)};
                         },
                         "transpose");
}

template <typename T>
Tensor<T> expand_rows(const Tensor<T>& b, int rows) {
  require_rank("expand_rows", b.shape(), 1);
  const int f = b.dim(0);
  std::vector<T> out(static_cast<std::size_t>(rows) * f);
  for (int r = 0; r < rows; ++r) std::copy(b.data().begin(), b.data().end(), out.begin() + r * f);
  return Tensor<T>::make({rows, f}, std::move(out), {b},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{sum_rows(g)};
                         },
                         "expand_rows");
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  require_rank("sum_rows", a.shape(), 2);
  const int rows = a.dim(0), f = a.dim(1);
  std::vector<T> out(f, T(0));
  auto x = a.data();
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < f; ++j) out[j] += x[r * f + j];
  return Tensor<T>::make({f}, std::move(out), {a},
                         [rows](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{expand_rows(g, rows)};
                         },
                         "sum_rows");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, transpose(w));
  if (!b.defined()) return y;
  return add(y, expand_rows(b, x.dim(0)));
}

// ---- channels --------------------------------------------------------------

namespace {

struct Nchw {
  int n, c, h, w;
};

Nchw nchw(const char* op, const Shape& s) {
  require_rank(op, s, 4);
  return {s[0], s[1], s[2], s[3]};
}

}  // namespace

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail(Errc::shape_mismatch, "concat_channels: no inputs");
  const auto first = nchw("concat_channels", parts[0].shape());
  int total = 0;
  for (const auto& p : parts) {
    auto d = nchw("concat_channels", p.shape());
    if (d.n != first.n || d.h != first.h || d.w != first.w)
      shape_error("concat_channels", parts[0].shape(), p.shape());
    total += d.c;
  }
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  std::vector<T> out(static_cast<std::size_t>(first.n) * total * plane);
  std::vector<int> offsets;
  for (int i = 0; i < first.n; ++i) {
    int offset = 0;
    for (const auto& p : parts) {
      const int c = p.dim(1);
      auto src = p.data().subspan(static_cast<std::size_t>(i) * c * plane, c * plane);
      std::copy(src.begin(), src.end(), out.begin() + (static_cast<std::size_t>(i) * total + offset) * plane);
      offset += c;
    }
  }
  int offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    offset += p.dim(1);
  }
  offsets.push_back(offset);
  return Tensor<T>::make({first.n, total, first.h, first.w}, std::move(out), parts,
                         [offsets](const Tensor<T>&, const Tensor<T>& g) {
                           std::vector<Tensor<T>> grads;
                           for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
                             grads.push_back(slice_channels(g, offsets[i], offsets[i + 1]));
                           return grads;
                         },
                         "concat_channels");
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int begin, int end) {
  const auto d = nchw("slice_channels", a.shape());
  if (begin < 0 || end > d.c || begin >= end)
    fail(Errc::shape_mismatch, "slice_channels: bad range");
  const int c = end - begin;
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(static_cast<std::size_t>(d.n) * c * plane);
  auto x = a.data();
  for (int i = 0; i < d.n; ++i) {
    auto src = x.subspan((static_cast<std::size_t>(i) * d.c + begin) * plane, c * plane);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::size_t>(i) * c * plane);
  }
  return Tensor<T>::make({d.n, c, d.h, d.w}, std::move(out), {a},
                         [begin, total = d.c](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{embed_channels(g, begin, total)};
                         },
                         "slice_channels");
}

template <typename T>
Tensor<T> embed_channels(const Tensor<T>& a, int begin, int total) {
  const auto d = nchw("embed_channels", a.shape());
  if (begin < 0 || begin + d.c > total) fail(Errc::shape_mismatch, "embed_channels: bad range");
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(static_cast<std::size_t>(d.n) * total * plane, T(0));
  auto x = a.data();
  for (int i = 0; i < d.n; ++i) {
    auto src = x.subspan(static_cast<std::size_t>(i) * d.c * plane, d.c * plane);
    std::copy(src.begin(), src.end(), out.begin() + (static_cast<std::size_t>(i) * total + begin) * plane);
  }
  return Tensor<T>::make({d.n, total, d.h, d.w}, std::move(out), {a},
                         [begin, c = d.c](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{slice_channels(g, begin, begin + c)};
                         },
                         "embed_channels");
}

template <typename T>
Tensor<T> expand_channels(const Tensor<T>& b, const Shape& shape) {
  require_rank("expand_channels", b.shape(), 1);
  const auto d = nchw("expand_channels", shape);
  if (d.c != b.dim(0)) shape_error("expand_channels", b.shape(), shape);
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(numel(shape));
  auto v = b.data();
  for (int i = 0; i < d.n; ++i)
    for (int c = 0; c < d.c; ++c)
      std::fill_n(out.begin() + (static_cast<std::size_t>(i) * d.c + c) * plane, plane, v[c]);
  return Tensor<T>::make(shape, std::move(out), {b},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{channel_sum(g)};
                         },
                         "expand_channels");
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& a) {
  const auto d = nchw("channel_sum", a.shape());
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(d.c, T(0));
  auto x = a.data();
  for (int i = 0; i < d.n; ++i)
    for (int c = 0; c < d.c; ++c) {
      const T* p = x.data() + (static_cast<std::size_t>(i) * d.c + c) * plane;
      out[c] += std::accumulate(p, p + plane, T(0));
    }
  return Tensor<T>::make({d.c}, std::move(out), {a},
                         [shape = a.shape()](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{expand_channels(g, shape)};
                         },
                         "channel_sum");
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
  return add(x, expand_channels(b, x.shape()));
}

template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& a) {
  const auto d = nchw("spatial_mean", a.shape());
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(static_cast<std::size_t>(d.n) * d.c);
  auto x = a.data();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const T* p = x.data() + k * plane;
    out[k] = std::accumulate(p, p + plane, T(0)) / static_cast<T>(plane);
  }
  return Tensor<T>::make({d.n, d.c}, std::move(out), {a},
                         [h = d.h, w = d.w](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{
                               scale(spatial_expand(g, h, w), 1.0 / (double(h) * w))};
                         },
                         "spatial_mean");
}

template <typename T>
Tensor<T> spatial_expand(const Tensor<T>& a, int height, int width) {
  require_rank("spatial_expand", a.shape(), 2);
  const int n = a.dim(0), c = a.dim(1);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<T> out(static_cast<std::size_t>(n) * c * plane);
  auto v = a.data();
  for (std::size_t k = 0; k < v.size(); ++k) std::fill_n(out.begin() + k * plane, plane, v[k]);
  return Tensor<T>::make({n, c, height, width}, std::move(out), {a},
                         [plane](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{
                               scale(spatial_mean(g), static_cast<double>(plane))};
                         },
                         "spatial_expand");
}

namespace {
constexpr double kLuma[3] = {0.299, 0.587, 0.114};
}

template <typename T>
Tensor<T> luma(const Tensor<T>& a) {
  const auto d = nchw("luma", a.shape());
  if (d.c != 3) fail(Errc::shape_mismatch, "luma: expected 3 channels, got " + shape_string(a.shape()));
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(static_cast<std::size_t>(d.n) * plane);
  auto x = a.data();
  for (int i = 0; i < d.n; ++i) {
    const T* r = x.data() + static_cast<std::size_t>(i) * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p)
      out[i * plane + p] = T(kLuma[0]) * r[p] + T(kLuma[1]) * r[plane + p] + T(kLuma[2]) * r[2 * plane + p];
  }
  return Tensor<T>::make({d.n, 1, d.h, d.w}, std::move(out), {a},
                         [](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{luma_adjoint(g)};
                         },
                         "luma");
}

template <typename T>
Tensor<T> luma_adjoint(const Tensor<T>& g) {
  const auto d = nchw("luma_adjoint", g.shape());
  if (d.c != 1) fail(Errc::shape_mismatch, "luma_adjoint: expected 1 channel");
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  std::vector<T> out(static_cast<std::size_t>(d.n) * 3 * plane);
  auto x = g.data();
  for (int i = 0; i < d.n; ++i)
    for (int c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p)
        out[(static_cast<std::size_t>(i) * 3 + c) * plane + p] = T(kLuma[c]) * x[i * plane + p];
  return Tensor<T>::make({d.n, 3, d.h, d.w}, std::move(out), {g},
                         [](const Tensor<T>&, const Tensor<T>& gg) {
                           return std::vector<Tensor<T>>{luma(gg)};
                         },
                         "luma_adjoint");
}

namespace {

// Quadrant q of pixel (row, col): rows split at h/2, cols at w/2.
inline int quadrant_of(int row, int col, int h, int w) {
  return (row >= h / 2 ? 2 : 0) + (col >= w / 2 ? 1 : 0);
}

inline double quadrant_count(int q, int h, int w) {
  const int rows = (q < 2) ? h / 2 : h - h / 2;
  const int cols = (q % 2 == 0) ? w / 2 : w - w / 2;
  return static_cast<double>(rows) * cols;
}

}  // namespace

template <typename T>
Tensor<T> quadrant_means(const Tensor<T>& a) {
  const auto d = nchw("quadrant_means", a.shape());
  if (d.h < 2 || d.w < 2) fail(Errc::shape_mismatch, "quadrant_means: image smaller than 2x2");
  std::vector<T> out(static_cast<std::size_t>(d.n) * 4 * d.c, T(0));
  auto x = a.data();
  for (int i = 0; i < d.n; ++i)
    for (int c = 0; c < d.c; ++c)
      for (int r = 0; r < d.h; ++r)
        for (int col = 0; col < d.w; ++col) {
          const int q = quadrant_of(r, col, d.h, d.w);
          out[(static_cast<std::size_t>(i) * 4 + q) * d.c + c] +=
              x[((static_cast<std::size_t>(i) * d.c + c) * d.h + r) * d.w + col];
        }
  for (int i = 0; i < d.n; ++i)
    for (int q = 0; q < 4; ++q)
      for (int c = 0; c < d.c; ++c)
        out[(static_cast<std::size_t>(i) * 4 + q) * d.c + c] /= static_cast<T>(quadrant_count(q, d.h, d.w));
  return Tensor<T>::make({d.n, 4 * d.c}, std::move(out), {a},
                         [h = d.h, w = d.w](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{quadrant_means_adjoint(g, h, w)};
                         },
                         "quadrant_means");
}

template <typename T>
Tensor<T> quadrant_means_adjoint(const Tensor<T>& g, int height, int width) {
  require_rank("quadrant_means_adjoint", g.shape(), 2);
  const int n = g.dim(0);
  const int c = g.dim(1) / 4;
  std::vector<T> out(static_cast<std::size_t>(n) * c * height * width);
  auto v = g.data();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < height; ++r)
        for (int col = 0; col < width; ++col) {
          const int q = quadrant_of(r, col, height, width);
          out[((static_cast<std::size_t>(i) * c + ch) * height + r) * width + col] =
              v[(static_cast<std::size_t>(i) * 4 + q) * c + ch] /
              static_cast<T>(quadrant_count(q, height, width));
        }
  return Tensor<T>::make({n, c, height, width}, std::move(out), {g},
                         [](const Tensor<T>&, const Tensor<T>& gg) {
                           return std::vector<Tensor<T>>{quadrant_means(gg)};
                         },
                         "quadrant_means_adjoint");
}

// ---- convolution -------------------------------------------------------------

namespace {

int conv_out(int in, int k, ConvGeometry geo) { return (in + 2 * geo.padding - k) / geo.stride + 1; }

template <typename T>
void im2col(const T* x, int c, int h, int w, int k, ConvGeometry geo, int ho, int wo, T* cols) {
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(ch) * k + ki) * k + kj) * out_plane;
        const T* plane = x + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * geo.stride - geo.padding + ki;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * geo.stride - geo.padding + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, int c, int h, int w, int k, ConvGeometry geo, int ho, int wo, T* x) {
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(ch) * k + ki) * k + kj) * out_plane;
        T* plane = x + static_cast<std::size_t>(ch) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * geo.stride - geo.padding + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * geo.stride - geo.padding + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

void check_geometry(const char* op, ConvGeometry geo) {
  if (geo.stride < 1 || geo.padding < 0)
    fail(Errc::invalid_argument, std::string(op) + ": invalid stride/padding");
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry geo) {
  check_geometry("conv2d", geo);
  const auto xd = nchw("conv2d", x.shape());
  const auto wd = nchw("conv2d", w.shape());
  if (wd.c != xd.c || wd.h != wd.w) shape_error("conv2d", x.shape(), w.shape());
  const int k = wd.h;
  const int ho = conv_out(xd.h, k, geo), wo = conv_out(xd.w, k, geo);
  if (ho < 1 || wo < 1)
    fail(Errc::shape_mismatch, "conv2d: input " + shape_string(x.shape()) + " too small for kernel");
  const int rows = xd.c * k * k;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  std::vector<T> cols(static_cast<std::size_t>(rows) * out_plane);
  std::vector<T> out(static_cast<std::size_t>(xd.n) * wd.n * out_plane);
  MapConstMat<T> wm(w.data().data(), wd.n, rows);
  for (int i = 0; i < xd.n; ++i) {
    im2col(x.data().data() + static_cast<std::size_t>(i) * xd.c * xd.h * xd.w, xd.c, xd.h, xd.w, k,
           geo, ho, wo, cols.data());
    MapMat<T>(out.data() + static_cast<std::size_t>(i) * wd.n * out_plane, wd.n, out_plane).noalias() =
        wm * MapConstMat<T>(cols.data(), rows, out_plane);
  }
  return Tensor<T>::make({xd.n, wd.n, ho, wo}, std::move(out), {x, w},
                         [x, w, geo, k, h = xd.h, wd_ = xd.w](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{conv2d_input_grad(g, w, geo, h, wd_),
                                                         conv2d_weight_grad(x, g, geo, k)};
                         },
                         "conv2d");
}

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, ConvGeometry geo, int height,
                            int width) {
  check_geometry("conv2d_input_grad", geo);
  const auto gd = nchw("conv2d_input_grad", g.shape());
  const auto wd = nchw("conv2d_input_grad", w.shape());
  const int k = wd.h;
  if (gd.c != wd.n || conv_out(height, k, geo) != gd.h || conv_out(width, k, geo) != gd.w)
    shape_error("conv2d_input_grad", g.shape(), w.shape());
  const int rows = wd.c * k * k;
  const std::size_t out_plane = static_cast<std::size_t>(gd.h) * gd.w;
  std::vector<T> cols(static_cast<std::size_t>(rows) * out_plane);
  std::vector<T> out(static_cast<std::size_t>(gd.n) * wd.c * height * width, T(0));
  MapConstMat<T> wm(w.data().data(), wd.n, rows);
  for (int i = 0; i < gd.n; ++i) {
    MapMat<T>(cols.data(), rows, out_plane).noalias() =
        wm.transpose() *
        MapConstMat<T>(g.data().data() + static_cast<std::size_t>(i) * gd.c * out_plane, gd.c, out_plane);
    col2im(cols.data(), wd.c, height, width, k, geo, gd.h, gd.w,
           out.data() + static_cast<std::size_t>(i) * wd.c * height * width);
  }
  return Tensor<T>::make({gd.n, wd.c, height, width}, std::move(out), {g, w},
                         [g, w, geo, k](const Tensor<T>&, const Tensor<T>& gz) {
                           return std::vector<Tensor<T>>{conv2d(gz, w, geo),
                                                         conv2d_weight_grad(gz, g, geo, k)};
                         },
                         "conv2d_input_grad");
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, ConvGeometry geo, int kernel) {
  check_geometry("conv2d_weight_grad", geo);
  const auto xd = nchw("conv2d_weight_grad", x.shape());
  const auto gd = nchw("conv2d_weight_grad", g.shape());
  const int k = kernel;
  const int ho = conv_out(xd.h, k, geo), wo = conv_out(xd.w, k, geo);
  if (gd.n != xd.n || gd.h != ho || gd.w != wo) shape_error("conv2d_weight_grad", x.shape(), g.shape());
  const int rows = xd.c * k * k;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
  std::vector<T> cols(static_cast<std::size_t>(rows) * out_plane);
  std::vector<T> out(static_cast<std::size_t>(gd.c) * rows, T(0));
  MapMat<T> dw(out.data(), gd.c, rows);
  for (int i = 0; i < xd.n; ++i) {
    im2col(x.data().data() + static_cast<std::size_t>(i) * xd.c * xd.h * xd.w, xd.c, xd.h, xd.w, k,
           geo, ho, wo, cols.data());
    dw.noalias() +=
        MapConstMat<T>(g.data().data() + static_cast<std::size_t>(i) * gd.c * out_plane, gd.c, out_plane) *
        MapConstMat<T>(cols.data(), rows, out_plane).transpose();
  }
  return Tensor<T>::make({gd.c, xd.c, k, k}, std::move(out), {x, g},
                         [x, g, geo, h = xd.h, w = xd.w](const Tensor<T>&, const Tensor<T>& gu) {
                           return std::vector<Tensor<T>>{conv2d_input_grad(g, gu, geo, h, w),
                                                         conv2d(x, gu, geo)};
                         },
                         "conv2d_weight_grad");
}

template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, int pad) {
  const auto d = nchw("pad_replicate", x.shape());
  if (pad < 0) fail(Errc::invalid_argument, "pad_replicate: negative pad");
  const int ph = d.h + 2 * pad, pw = d.w + 2 * pad;
  std::vector<T> out(static_cast<std::size_t>(d.n) * d.c * ph * pw);
  auto v = x.data();
  for (int p = 0; p < d.n * d.c; ++p) {
    const T* src = v.data() + static_cast<std::size_t>(p) * d.h * d.w;
    T* dst = out.data() + static_cast<std::size_t>(p) * ph * pw;
    for (int r = 0; r < ph; ++r) {
      const int sr = std::clamp(r - pad, 0, d.h - 1);
      for (int c = 0; c < pw; ++c) dst[r * pw + c] = src[sr * d.w + std::clamp(c - pad, 0, d.w - 1)];
    }
  }
  return Tensor<T>::make({d.n, d.c, ph, pw}, std::move(out), {x},
                         [pad](const Tensor<T>&, const Tensor<T>& g) {
                           return std::vector<Tensor<T>>{pad_replicate_adjoint(g, pad)};
                         },
                         "pad_replicate");
}

template <typename T>
Tensor<T> pad_replicate_adjoint(const Tensor<T>& g, int pad) {
  const auto d = nchw("pad_replicate_adjoint", g.shape());
  const int h = d.h - 2 * pad, w = d.w - 2 * pad;
  if (h < 1 || w < 1) fail(Errc::shape_mismatch, "pad_replicate_adjoint: input too small");
  std::vector<T> out(static_cast<std::size_t>(d.n) * d.c * h * w, T(0));
  auto v = g.data();
  for (int p = 0; p < d.n * d.c; ++p) {
    const T* src = v.data() + static_cast<std::size_t>(p) * d.h * d.w;
    T* dst = out.data() + static_cast<std::size_t>(p) * h * w;
    for (int r = 0; r < d.h; ++r) {
      const int sr = std::clamp(r - pad, 0, h - 1);
      for (int c = 0; c < d.w; ++c) dst[sr * w + std::clamp(c - pad, 0, w - 1)] += src[r * d.w + c];
    }
  }
  return Tensor<T>::make({d.n, d.c, h, w}, std::move(out), {g},
                         [pad](const Tensor<T>&, const Tensor<T>& gg) {
                           return std::vector<Tensor<T>>{pad_replicate(gg, pad)};
                         },
                         "pad_replicate_adjoint");
}

// ---- instantiation -----------------------------------------------------------

#define BIASFORGE_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                   \
  template std::vector<Tensor<T>> grad(const Tensor<T>&, std::span<const Tensor<T>>, bool);   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> neg(const Tensor<T>&);                                                   \
  template Tensor<T> scale(const Tensor<T>&, double);                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, double);                                    \
  template Tensor<T> square(const Tensor<T>&);                                                \
  template Tensor<T> sqrt(const Tensor<T>&);                                                  \
  template Tensor<T> abs(const Tensor<T>&);                                                   \
  template Tensor<T> reciprocal_or_zero(const Tensor<T>&);                                    \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                    \
  template Tensor<T> tanh(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> mul_const(const Tensor<T>&, std::vector<T>);                             \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> expand_scalar(const Tensor<T>&, const Shape&);                           \
  template Tensor<T> sum_per_sample(const Tensor<T>&);                                        \
  template Tensor<T> expand_per_sample(const Tensor<T>&, const Shape&);                       \
  template Tensor<T> mul_per_sample(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> transpose(const Tensor<T>&);                                             \
  template Tensor<T> expand_rows(const Tensor<T>&, int);                                      \
  template Tensor<T> sum_rows(const Tensor<T>&);                                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                          \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                              \
  template Tensor<T> embed_channels(const Tensor<T>&, int, int);                              \
  template Tensor<T> expand_channels(const Tensor<T>&, const Shape&);                         \
  template Tensor<T> channel_sum(const Tensor<T>&);                                           \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> spatial_mean(const Tensor<T>&);                                          \
  template Tensor<T> spatial_expand(const Tensor<T>&, int, int);                              \
  template Tensor<T> luma(const Tensor<T>&);                                                  \
  template Tensor<T> luma_adjoint(const Tensor<T>&);                                          \
  template Tensor<T> quadrant_means(const Tensor<T>&);                                        \
  template Tensor<T> quadrant_means_adjoint(const Tensor<T>&, int, int);                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, ConvGeometry);                \
  template Tensor<T> conv2d_input_grad(const Tensor<T>&, const Tensor<T>&, ConvGeometry, int, \
                                       int);                                                  \
  template Tensor<T> conv2d_weight_grad(const Tensor<T>&, const Tensor<T>&, ConvGeometry,     \
                                        int);                                                 \
  template Tensor<T> pad_replicate(const Tensor<T>&, int);                                    \
  template Tensor<T> pad_replicate_adjoint(const Tensor<T>&, int);

BIASFORGE_INSTANTIATE(float)
BIASFORGE_INSTANTIATE(double)

#undef BIASFORGE_INSTANTIATE

}  // namespace biasforge::ad
