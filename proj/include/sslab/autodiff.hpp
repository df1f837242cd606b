#pragma once

// Reverse-mode automatic differentiation over dense 2-D arrays.
//
// A Tensor is a handle to a node in a dynamically built graph. Leaves are
// created with Tensor::leaf (parameters, inputs under test) or
// Tensor::constant; every op allocates a fresh node that remembers its inputs
// and a local backward rule. backward() linearises the reachable part of the
// graph into a ComputationRecord and replays it in reverse. Intermediate
// gradients live only for the duration of one backward call; leaf gradients
// accumulate until zero_grad().

#include "sslab/common.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sslab::ad {

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Returns one gradient per input; an empty matrix means "no contribution".
using BackwardFn = std::function<std::vector<Matrix>(const Matrix& grad_out)>;

struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily, leaves only
  bool requires_grad = false;
  bool is_leaf = true;
  std::string op = "leaf";
  std::vector<NodePtr> inputs;
  BackwardFn backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Matrix value, bool requires_grad = true);
  static Tensor constant(Matrix value);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  Index rows() const;
  Index cols() const;
  const Matrix& value() const;
  // Leaves only; used by optimizers and EMA updates outside any record.
  Matrix& mutable_value();
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  const std::string& op() const;

  bool has_grad() const;
  const Matrix& grad() const;
  void zero_grad();
  void clear_grad();

  const detail::NodePtr& node() const { return node_; }
  static Tensor from_node(detail::NodePtr n);

 private:
  detail::NodePtr node_;
};

// Topologically ordered view of the graph feeding a loss. Only nodes that
// require a gradient are recorded; inputs always precede their consumers.
class ComputationRecord {
 public:
  static ComputationRecord build(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::NodePtr>& nodes() const { return order_; }
  bool is_topologically_ordered() const;

 private:
  std::vector<detail::NodePtr> order_;
};

// Populates grad() on every requires_grad leaf reachable from `loss`.
// Throws DimensionError unless loss is 1x1.
void backward(const Tensor& loss);

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double c);
// x (m x n) + row (1 x n) broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor sub_row(const Tensor& x, const Tensor& row);
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor col_mean(const Tensor& x);   // 1 x n
Tensor row_sum(const Tensor& x);    // m x 1
Tensor rowwise_dot(const Tensor& a, const Tensor& b);  // m x 1
Tensor diagonal(const Tensor& x);   // square x -> n x 1
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);
Tensor softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& x, double temperature = 1.0);
// temperature * log(sum_j exp(x_ij / temperature)), one value per row.
Tensor logsumexp_rows(const Tensor& x, double temperature = 1.0);

// Forward identity, backward contributes nothing upstream.
Tensor stop_gradient(const Tensor& x);

// Per-column standardisation with biased (1/m) variance. Throws
// BatchSizeError for m < 2.
Tensor batch_norm_cols(const Tensor& x, double eps = 1e-12);
Tensor batch_norm_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-12);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return scale(x, s); }

// ---- gradient checking -------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Matrix analytic;
  Matrix numeric;
  bool passed = false;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares backward() against central finite differences of `f` at `x`.
// Stop-gradient outputs are frozen at their unperturbed values while
// differencing, so the oracle differentiates the declared function.
// Relative error per element is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const ScalarFn& f, const Matrix& x, double step = 1e-5,
                           double tol = 1e-4, double floor = 1e-6);

}  // namespace sslab::ad
