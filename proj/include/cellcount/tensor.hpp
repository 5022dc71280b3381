#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Every op that touches a tensor with requires_grad records its inputs and a
// backward rule on the result. backward() orders the reachable graph
// topologically (the tape) and replays the rules in reverse. Leaf gradients
// accumulate across backward() calls until zero_grad(); gradients of
// intermediate results are recomputed from scratch on each call.
//
// Broadcasting is limited to scalars. Row-bias addition is expressed through
// the dedicated `linear` op.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cellcount {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable storage. Only meaningful on leaves (parameters, inputs); writing
  // into an op result does not propagate.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse pass from a single-element tensor.
  void backward() const;

  // Same values, no history, no gradient tracking.
  Tensor detach() const;
  // Deep copy of values into a fresh leaf with the given tracking flag.
  Tensor clone_leaf(bool requires_grad) const;

  const std::string& op_name() const;

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
// tanh approximation of GELU.
Tensor gelu(const Tensor& a);

// x[m×k]·w[k×n] + bias[n] broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor softmax_lastdim(const Tensor& x);
// Normalizes each row over the last dimension, then applies gain[d], bias[d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Columns [start, start+count) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Column means of a 2-D tensor: [m×n] → [1×n].
Tensor mean_rows(const Tensor& a);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace cellcount
