#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cips {

using Shape = std::vector<std::size_t>;

/// Raised for incompatible operand shapes. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for autodiff misuse (non-scalar roots, detached gradient chains, ...).
class GradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;
struct TensorImpl;

/// Backward rule of a recorded operation: maps the output gradient to one
/// gradient per input (undefined tensors for inputs without a gradient).
/// Rules are written in terms of Tensor ops so they can themselves be
/// recorded, which is what makes gradient-of-gradient work.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct Node {
  const char* name = "";
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

/// Dense row-major float64 array taking part in a define-by-run graph.
///
/// Tensors have shared (handle) semantics: copying a Tensor aliases the same
/// buffer. Values of non-leaf tensors are immutable; only leaves may be
/// updated in place (optimizer steps, checkpoint loads).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view; only valid on leaf tensors.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;

  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  /// True when the value came from a gradient computed without create_graph
  /// (or from an op consuming such a value).
  bool from_detached_grad() const;

  /// A new leaf sharing no graph history; the buffer is copied.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const TensorImpl* id() const { return impl_.get(); }
  const std::shared_ptr<Node>& grad_fn() const;
  std::uint64_t sequence() const;

  // Internal constructor used by ops.
  static Tensor make_result(Shape shape, std::vector<double> values, const char* op_name,
                            std::vector<Tensor> inputs, BackwardFn backward);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  bool from_detached_grad = false;
  std::uint64_t seq = 0;
  std::shared_ptr<Node> grad_fn;
};

/// Thread-local switch for graph recording.
bool grad_mode_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Primitive operations.
//
// Broadcasting: binary elementwise ops accept a right operand that is either
// the same shape, a rank-1 tensor matching the trailing axis of a rank-2 left
// operand (row broadcast), an (m, 1) column against (m, n), or a single
// element. Nothing else is broadcast.
//
// Reductions accumulate in ascending row-major index order, independent of
// batch composition.
// ---------------------------------------------------------------------------

/// op(a) * op(b) where op transposes when the flag is set. Each output entry
/// is a dot product accumulated in ascending k.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws std::domain_error on an exact zero in the divisor.
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(1 + exp(x)), evaluated stably.
Tensor softplus(const Tensor& a);
/// Derivative at exactly zero is taken as 1.
Tensor leaky_relu(const Tensor& a, double slope);

Tensor sum(const Tensor& a);
/// Rank-2 only; axis 0 gives shape (n), axis 1 gives shape (m).
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

/// Euclidean norm of every row of a rank-2 tensor, shape (m).
Tensor row_l2_norm(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Expands a broadcastable tensor (see above) to `shape`.
Tensor expand(const Tensor& a, const Shape& shape);
/// Sums `a` down to a broadcastable `shape`; inverse of expand.
Tensor sum_to(const Tensor& a, const Shape& shape);

/// Concatenation of rank-1 tensors (axis 0) or rank-2 tensors (axis 0 or 1).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Half-open range [begin, end) along axis 0 or 1.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Embeds `a` into zeros of length `full_extent` along `axis` at offset `begin`.
Tensor pad_slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t full_extent);

/// Row gather with per-tap weights: out[p] = sum_t weight[p*taps+t] * src[index[p*taps+t]].
/// Negative indices and zero weights are skipped (zero padding).
struct GatherPlan {
  std::size_t taps = 1;
  std::vector<std::int64_t> index;
  std::vector<double> weight;

  std::size_t rows() const { return taps == 0 ? 0 : index.size() / taps; }
};

Tensor weighted_gather(const Tensor& src, std::shared_ptr<const GatherPlan> plan);
/// Adjoint of weighted_gather: scatters weighted rows into `out_rows` rows.
Tensor weighted_scatter(const Tensor& grad, std::shared_ptr<const GatherPlan> plan,
                        std::size_t out_rows);
/// Plain gather of whole rows.
Tensor gather_rows(const Tensor& src, const std::vector<std::int64_t>& rows);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }

// ---------------------------------------------------------------------------
// Differentiation.
// ---------------------------------------------------------------------------

/// Gradients keyed by tensor identity.
class GradMap {
 public:
  bool empty() const { return grads_.empty(); }
  std::size_t size() const { return grads_.size(); }
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
  /// Gradient for `t`, or zeros of its shape when `t` received none.
  Tensor get(const Tensor& t) const;
  void set(const Tensor& t, Tensor grad) { grads_[t.id()] = std::move(grad); }

 private:
  std::unordered_map<const TensorImpl*, Tensor> grads_;
};

struct GradOptions {
  /// Record the backward pass itself so the results can be differentiated again.
  bool create_graph = false;
  /// Return undefined tensors (instead of throwing) for unreachable inputs.
  bool allow_unused = true;
};

/// d root / d wrt for every tensor in `wrt`. Unused inputs yield zeros.
std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& wrt,
                         GradOptions options = {});

/// Gradients of a scalar root with respect to every leaf requiring grad.
/// A root that is not connected to any such leaf gives an empty map.
GradMap backward(const Tensor& root);

/// Parameter gradients of a scalar that was built from first-order gradients.
/// Throws GradError when those gradients were computed without create_graph.
GradMap second_order_grad(const Tensor& scalar_of_gradients);

}  // namespace cips
