#include "cips/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace cips {

namespace {

thread_local bool g_grad_mode = true;
std::atomic<std::uint64_t> g_sequence{1};

enum class Broadcast { same, row, column, scalar };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (shape_numel(b) == 1) return Broadcast::scalar;
  if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return Broadcast::row;
  if (a.size() == 2 && b.size() == 2 && b[0] == a[0] && b[1] == 1) return Broadcast::column;
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b) + " against " +
                   to_string(a));
}

inline std::size_t broadcast_index(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::same:
      return i;
    case Broadcast::row:
      return i % cols;
    case Broadcast::column:
      return i / cols;
    case Broadcast::scalar:
      return 0;
  }
  return 0;
}

std::size_t trailing_cols(const Shape& s) { return s.empty() ? 1 : s.back(); }

// outer x extent x inner decomposition around `axis`.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + to_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

bool needs(const Tensor& t) { return t.defined() && t.requires_grad(); }

template <typename F>
Tensor unary_op(const Tensor& a, const char* name, F&& f, BackwardFn bw) {
  auto src = a.data();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
  return Tensor::make_result(a.shape(), std::move(out), name, {a}, std::move(bw));
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(values);
  t.impl_->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return t;
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for " +
                     to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (impl_->grad_fn) {
    throw GradError("mutable_data: only leaf tensors may be modified in place");
  }
  return impl_->data;
}

std::vector<double> Tensor::to_vector() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return impl_->data[row * trailing_cols(impl_->shape) + col];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (impl_->grad_fn) {
    throw GradError("set_requires_grad: only valid on leaf tensors");
  }
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

bool Tensor::from_detached_grad() const { return impl_ && impl_->from_detached_grad; }

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data); }

const std::shared_ptr<Node>& Tensor::grad_fn() const { return impl_->grad_fn; }

std::uint64_t Tensor::sequence() const { return impl_->seq; }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, const char* op_name,
                           std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor t = from(std::move(shape), std::move(values));
  bool any_grad = false;
  bool detached = false;
  for (const auto& in : inputs) {
    if (!in.defined()) continue;
    any_grad = any_grad || in.requires_grad();
    detached = detached || in.from_detached_grad();
  }
  t.impl_->from_detached_grad = detached;
  if (g_grad_mode && any_grad) {
    t.impl_->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->name = op_name;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    t.impl_->grad_fn = std::move(node);
  }
  return t;
}

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_mode) { g_grad_mode = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_mode = previous_; }

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

namespace {

std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul: expected rank-2 operands, got " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ for " + to_string(a.shape()) +
                     (transpose_a ? "^T" : "") + " and " + to_string(b.shape()) +
                     (transpose_b ? "^T" : ""));
  }
  // Operands are brought to row-major (m, k) and (k, n) form; every output
  // entry then accumulates its k products in ascending order, so a row of the
  // result depends only on the matching row of A.
  std::vector<double> at_buf, bt_buf;
  const double* A = a.data().data();
  const double* B = b.data().data();
  if (transpose_a) {
    at_buf = transposed(A, a.dim(0), a.dim(1));
    A = at_buf.data();
  }
  if (transpose_b) {
    bt_buf = transposed(B, b.dim(0), b.dim(1));
    B = bt_buf.data();
  }
  std::vector<double> out(m * n, 0.0);
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    const double* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }

  return Tensor::make_result(
      {m, n}, std::move(out), "matmul", {a, b},
      [a, b, transpose_a, transpose_b](const Tensor& g) -> std::vector<Tensor> {
        Tensor ga, gb;
        if (!transpose_a && !transpose_b) {
          if (needs(a)) ga = matmul(g, b, false, true);
          if (needs(b)) gb = matmul(a, g, true, false);
        } else if (!transpose_a && transpose_b) {
          if (needs(a)) ga = matmul(g, b, false, false);
          if (needs(b)) gb = matmul(g, a, true, false);
        } else if (transpose_a && !transpose_b) {
          if (needs(a)) ga = matmul(b, g, false, true);
          if (needs(b)) gb = matmul(a, g, false, false);
        } else {
          if (needs(a)) ga = matmul(b, g, true, true);
          if (needs(b)) gb = matmul(g, a, true, true);
        }
        return {ga, gb};
      });
}

// ---------------------------------------------------------------------------
// Elementwise binary
// ---------------------------------------------------------------------------

namespace {

template <typename F>
std::vector<double> binary_values(const Tensor& a, const Tensor& b, Broadcast mode, F&& f) {
  auto av = a.data();
  auto bv = b.data();
  const std::size_t cols = trailing_cols(a.shape());
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = f(av[i], bv[broadcast_index(mode, i, cols)]);
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto mode = classify(a.shape(), b.shape(), "add");
  auto out = binary_values(a, b, mode, [](double x, double y) { return x + y; });
  return Tensor::make_result(a.shape(), std::move(out), "add", {a, b},
                             [a, b](const Tensor& g) -> std::vector<Tensor> {
                               Tensor ga, gb;
                               if (needs(a)) ga = g;
                               if (needs(b)) gb = sum_to(g, b.shape());
                               return {ga, gb};
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const auto mode = classify(a.shape(), b.shape(), "sub");
  auto out = binary_values(a, b, mode, [](double x, double y) { return x - y; });
  return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b},
                             [a, b](const Tensor& g) -> std::vector<Tensor> {
                               Tensor ga, gb;
                               if (needs(a)) ga = g;
                               if (needs(b)) gb = sum_to(neg(g), b.shape());
                               return {ga, gb};
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto mode = classify(a.shape(), b.shape(), "mul");
  auto out = binary_values(a, b, mode, [](double x, double y) { return x * y; });
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b},
                             [a, b](const Tensor& g) -> std::vector<Tensor> {
                               Tensor ga, gb;
                               if (needs(a)) ga = mul(g, b);
                               if (needs(b)) gb = sum_to(mul(g, a), b.shape());
                               return {ga, gb};
                             });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const auto mode = classify(a.shape(), b.shape(), "div");
  for (double v : b.data()) {
    if (v == 0.0) throw std::domain_error("div: division by exact zero");
  }
  auto out = binary_values(a, b, mode, [](double x, double y) { return x / y; });
  return Tensor::make_result(a.shape(), std::move(out), "div", {a, b},
                             [a, b](const Tensor& g) -> std::vector<Tensor> {
                               Tensor ga, gb;
                               if (needs(a)) ga = div(g, b);
                               if (needs(b)) {
                                 gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape());
                               }
                               return {ga, gb};
                             });
}

// ---------------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------------

Tensor neg(const Tensor& a) {
  return unary_op(a, "neg", [](double x) { return -x; },
                  [](const Tensor& g) -> std::vector<Tensor> { return {neg(g)}; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(a, "scale", [factor](double x) { return x * factor; },
                  [factor](const Tensor& g) -> std::vector<Tensor> { return {scale(g, factor)}; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(a, "add_scalar", [value](double x) { return x + value; },
                  [](const Tensor& g) -> std::vector<Tensor> { return {g}; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, "square", [](double x) { return x * x; },
                  [a](const Tensor& g) -> std::vector<Tensor> { return {scale(mul(g, a), 2.0)}; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(a, "sqrt", [](double x) { return std::sqrt(x); },
                  [a](const Tensor& g) -> std::vector<Tensor> {
                    return {div(scale(g, 0.5), sqrt(a))};
                  });
}

Tensor sin(const Tensor& a) {
  return unary_op(a, "sin", [](double x) { return std::sin(x); },
                  [a](const Tensor& g) -> std::vector<Tensor> { return {mul(g, cos(a))}; });
}

Tensor cos(const Tensor& a) {
  return unary_op(a, "cos", [](double x) { return std::cos(x); },
                  [a](const Tensor& g) -> std::vector<Tensor> { return {neg(mul(g, sin(a)))}; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, "sigmoid", stable_sigmoid, [a](const Tensor& g) -> std::vector<Tensor> {
    Tensor s = sigmoid(a);
    return {mul(g, sub(s, square(s)))};
  });
}

Tensor softplus(const Tensor& a) {
  return unary_op(a, "softplus", stable_softplus,
                  [a](const Tensor& g) -> std::vector<Tensor> { return {mul(g, sigmoid(a))}; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(a, "leaky_relu", [slope](double x) { return x >= 0.0 ? x : slope * x; },
                  [a, slope](const Tensor& g) -> std::vector<Tensor> {
                    auto src = a.data();
                    std::vector<double> mask(src.size());
                    for (std::size_t i = 0; i < src.size(); ++i) {
                      mask[i] = src[i] >= 0.0 ? 1.0 : slope;
                    }
                    return {mul(g, Tensor::from(a.shape(), std::move(mask)))};
                  });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::make_result({}, {acc}, "sum", {a},
                             [a](const Tensor& g) -> std::vector<Tensor> {
                               return {expand(g, a.shape())};
                             });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  if (a.rank() != 2 || axis > 1) {
    throw ShapeError("sum(axis): expected rank-2 tensor and axis 0/1, got " +
                     to_string(a.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto src = a.data();
  std::vector<double> out(axis == 0 ? n : m, 0.0);
  if (axis == 0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += src[i * n + j];
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += src[i * n + j];
      out[i] = acc;
    }
  }
  Shape shape{axis == 0 ? n : m};
  return Tensor::make_result(shape, std::move(out), "sum_axis", {a},
                             [a, axis, m](const Tensor& g) -> std::vector<Tensor> {
                               if (axis == 0) return {expand(g, a.shape())};
                               return {expand(reshape(g, {m, 1}), a.shape())};
                             });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, std::size_t axis) {
  return scale(sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor row_l2_norm(const Tensor& a) { return sqrt(sum(square(a), 1)); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return Tensor::make_result(std::move(shape), a.to_vector(), "reshape", {a},
                             [a](const Tensor& g) -> std::vector<Tensor> {
                               return {reshape(g, a.shape())};
                             });
}

Tensor expand(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const auto mode = classify(shape, a.shape(), "expand");
  const std::size_t n = shape_numel(shape);
  const std::size_t cols = trailing_cols(shape);
  auto src = a.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = src[broadcast_index(mode, i, cols)];
  return Tensor::make_result(shape, std::move(out), "expand", {a},
                             [a](const Tensor& g) -> std::vector<Tensor> {
                               return {sum_to(g, a.shape())};
                             });
}

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const auto mode = classify(a.shape(), shape, "sum_to");
  switch (mode) {
    case Broadcast::scalar:
      return reshape(sum(a), shape);
    case Broadcast::row:
      return sum(a, 0);
    case Broadcast::column:
      return reshape(sum(a, 1), shape);
    case Broadcast::same:
      break;
  }
  return a;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  Shape out_shape = first;
  split_axis(first, axis, "concat");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: shape " + to_string(s) + " incompatible with " + to_string(first) +
                       " along axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  out_shape[axis] = total;
  const auto split = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t ext = p.shape()[axis];
    auto src = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      const double* from = src.data() + o * ext * split.inner;
      double* to = out.data() + (o * split.extent + offset) * split.inner;
      std::copy(from, from + ext * split.inner, to);
    }
    offset += ext;
  }
  return Tensor::make_result(out_shape, std::move(out), "concat", parts,
                             [parts, axis](const Tensor& g) -> std::vector<Tensor> {
                               std::vector<Tensor> grads;
                               std::size_t off = 0;
                               for (const auto& p : parts) {
                                 const std::size_t ext = p.shape()[axis];
                                 grads.push_back(needs(p) ? slice(g, axis, off, off + ext)
                                                          : Tensor());
                                 off += ext;
                               }
                               return grads;
                             });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto split = split_axis(a.shape(), axis, "slice");
  if (begin > end || end > split.extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for shape " + to_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t ext = end - begin;
  std::vector<double> out(split.outer * ext * split.inner);
  auto src = a.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    const double* from = src.data() + (o * split.extent + begin) * split.inner;
    std::copy(from, from + ext * split.inner, out.data() + o * ext * split.inner);
  }
  const std::size_t full = split.extent;
  return Tensor::make_result(out_shape, std::move(out), "slice", {a},
                             [axis, begin, full](const Tensor& g) -> std::vector<Tensor> {
                               return {pad_slice(g, axis, begin, full)};
                             });
}

Tensor pad_slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t full_extent) {
  const auto split = split_axis(a.shape(), axis, "pad_slice");
  if (begin + split.extent > full_extent) {
    throw ShapeError("pad_slice: slice of " + to_string(a.shape()) + " at " +
                     std::to_string(begin) + " exceeds extent " + std::to_string(full_extent));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = full_extent;
  std::vector<double> out(split.outer * full_extent * split.inner, 0.0);
  auto src = a.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    const double* from = src.data() + o * split.extent * split.inner;
    std::copy(from, from + split.extent * split.inner,
              out.data() + (o * full_extent + begin) * split.inner);
  }
  const std::size_t ext = split.extent;
  return Tensor::make_result(out_shape, std::move(out), "pad_slice", {a},
                             [axis, begin, ext](const Tensor& g) -> std::vector<Tensor> {
                               return {slice(g, axis, begin, begin + ext)};
                             });
}

// ---------------------------------------------------------------------------
// Gather / scatter
// ---------------------------------------------------------------------------

namespace {

void check_plan(const GatherPlan& plan, const char* op) {
  if (plan.taps == 0 || plan.index.size() % plan.taps != 0 ||
      plan.weight.size() != plan.index.size()) {
    throw ShapeError(std::string(op) + ": malformed gather plan (" +
                     std::to_string(plan.index.size()) + " indices, " +
                     std::to_string(plan.weight.size()) + " weights, " +
                     std::to_string(plan.taps) + " taps)");
  }
}

}  // namespace

Tensor weighted_gather(const Tensor& src, std::shared_ptr<const GatherPlan> plan) {
  check_plan(*plan, "weighted_gather");
  if (src.rank() != 2) {
    throw ShapeError("weighted_gather: expected rank-2 source, got " + to_string(src.shape()));
  }
  const std::size_t rows = src.dim(0), cols = src.dim(1);
  const std::size_t out_rows = plan->rows();
  std::vector<double> out(out_rows * cols, 0.0);
  auto s = src.data();
  for (std::size_t p = 0; p < out_rows; ++p) {
    double* dst = out.data() + p * cols;
    for (std::size_t t = 0; t < plan->taps; ++t) {
      const auto idx = plan->index[p * plan->taps + t];
      const double w = plan->weight[p * plan->taps + t];
      if (idx < 0 || w == 0.0) continue;
      if (static_cast<std::size_t>(idx) >= rows) {
        throw ShapeError("weighted_gather: row index " + std::to_string(idx) +
                         " out of range for " + to_string(src.shape()));
      }
      const double* row = s.data() + static_cast<std::size_t>(idx) * cols;
      if (w == 1.0) {
        for (std::size_t c = 0; c < cols; ++c) dst[c] += row[c];
      } else {
        for (std::size_t c = 0; c < cols; ++c) dst[c] += w * row[c];
      }
    }
  }
  return Tensor::make_result({out_rows, cols}, std::move(out), "weighted_gather", {src},
                             [plan, rows](const Tensor& g) -> std::vector<Tensor> {
                               return {weighted_scatter(g, plan, rows)};
                             });
}

Tensor weighted_scatter(const Tensor& grad, std::shared_ptr<const GatherPlan> plan,
                        std::size_t out_rows) {
  check_plan(*plan, "weighted_scatter");
  if (grad.rank() != 2 || grad.dim(0) != plan->rows()) {
    throw ShapeError("weighted_scatter: gradient shape " + to_string(grad.shape()) +
                     " does not match plan with " + std::to_string(plan->rows()) + " rows");
  }
  const std::size_t cols = grad.dim(1);
  std::vector<double> out(out_rows * cols, 0.0);
  auto g = grad.data();
  for (std::size_t p = 0; p < plan->rows(); ++p) {
    const double* src = g.data() + p * cols;
    for (std::size_t t = 0; t < plan->taps; ++t) {
      const auto idx = plan->index[p * plan->taps + t];
      const double w = plan->weight[p * plan->taps + t];
      if (idx < 0 || w == 0.0) continue;
      if (static_cast<std::size_t>(idx) >= out_rows) {
        throw ShapeError("weighted_scatter: row index out of range");
      }
      double* dst = out.data() + static_cast<std::size_t>(idx) * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
    }
  }
  return Tensor::make_result({out_rows, cols}, std::move(out), "weighted_scatter", {grad},
                             [plan](const Tensor& gg) -> std::vector<Tensor> {
                               return {weighted_gather(gg, plan)};
                             });
}

Tensor gather_rows(const Tensor& src, const std::vector<std::int64_t>& rows) {
  auto plan = std::make_shared<GatherPlan>();
  plan->taps = 1;
  plan->index = rows;
  plan->weight.assign(rows.size(), 1.0);
  return weighted_gather(src, std::move(plan));
}

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

Tensor GradMap::get(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return it->second;
}

namespace {

// Reachable tensors that carry a grad_fn, newest first.
std::vector<Tensor> reverse_topological(const Tensor& root) {
  std::vector<Tensor> order;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<Tensor> stack{root};
  seen.insert(root.id());
  while (!stack.empty()) {
    Tensor t = stack.back();
    stack.pop_back();
    if (!t.grad_fn()) continue;
    order.push_back(t);
    for (const auto& in : t.grad_fn()->inputs) {
      if (!in.defined() || !in.requires_grad()) continue;
      if (seen.insert(in.id()).second) stack.push_back(in);
    }
  }
  // Inputs are always created before their consumers, so descending creation
  // order is a valid reverse topological order.
  std::sort(order.begin(), order.end(),
            [](const Tensor& x, const Tensor& y) { return x.sequence() > y.sequence(); });
  return order;
}

void mark_detached(Tensor& t) {
  if (t.defined()) const_cast<TensorImpl*>(t.id())->from_detached_grad = true;
}

}  // namespace

std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& wrt, GradOptions options) {
  if (!root.defined() || root.numel() != 1) {
    throw GradError("grad: root must be a scalar, got shape " +
                    (root.defined() ? to_string(root.shape()) : std::string("<undefined>")));
  }
  std::vector<Tensor> results(wrt.size());
  std::unordered_map<const TensorImpl*, Tensor> grads;

  if (root.requires_grad()) {
    GradModeGuard mode(options.create_graph);
    grads[root.id()] = Tensor::full(root.shape(), 1.0);
    for (const auto& t : reverse_topological(root)) {
      auto it = grads.find(t.id());
      if (it == grads.end()) continue;
      const Tensor g = it->second;
      const auto& node = *t.grad_fn();
      auto input_grads = node.backward(g);
      for (std::size_t i = 0; i < node.inputs.size() && i < input_grads.size(); ++i) {
        const Tensor& in = node.inputs[i];
        Tensor& gi = input_grads[i];
        if (!in.defined() || !in.requires_grad() || !gi.defined()) continue;
        if (gi.shape() != in.shape()) {
          throw ShapeError(std::string("grad: backward of ") + node.name + " produced " +
                           to_string(gi.shape()) + " for input " + to_string(in.shape()));
        }
        auto slot = grads.find(in.id());
        if (slot == grads.end()) {
          grads.emplace(in.id(), gi);
        } else {
          slot->second = add(slot->second, gi);
        }
      }
    }
  }

  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto it = grads.find(wrt[i].id());
    if (it != grads.end()) {
      results[i] = it->second;
    } else if (!options.allow_unused) {
      throw GradError("grad: input " + std::to_string(i) + " is not reachable from the root");
    } else {
      results[i] = Tensor::zeros(wrt[i].shape());
    }
    if (!options.create_graph) {
      // Never hand out internal buffers that might alias another result.
      results[i] = results[i].detach();
      mark_detached(results[i]);
    }
  }
  return results;
}

GradMap backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw GradError("backward: root must be a scalar, got shape " +
                    (root.defined() ? to_string(root.shape()) : std::string("<undefined>")));
  }
  GradMap out;
  if (!root.requires_grad()) return out;

  std::vector<Tensor> leaves;
  std::unordered_set<const TensorImpl*> seen;
  for (const auto& t : reverse_topological(root)) {
    for (const auto& in : t.grad_fn()->inputs) {
      if (in.defined() && in.requires_grad() && in.is_leaf() && seen.insert(in.id()).second) {
        leaves.push_back(in);
      }
    }
  }
  auto grads = grad(root, leaves, {.create_graph = false, .allow_unused = true});
  for (std::size_t i = 0; i < leaves.size(); ++i) out.set(leaves[i], std::move(grads[i]));
  return out;
}

GradMap second_order_grad(const Tensor& scalar_of_gradients) {
  if (!scalar_of_gradients.requires_grad() && scalar_of_gradients.from_detached_grad()) {
    throw GradError(
        "second_order_grad: the first-order gradients were computed without create_graph; "
        "their dependence on parameters was not recorded");
  }
  return backward(scalar_of_gradients);
}

}  // namespace cips
