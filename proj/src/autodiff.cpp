#include "sslab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace sslab {

std::string shape_string(Index rows, Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

}  // namespace sslab

namespace sslab::ad {

using detail::Node;
using detail::NodePtr;

namespace {

// Stop-gradient outputs captured on a reference evaluation and replayed while
// grad_check perturbs the input.
struct SgReplay {
  enum class Mode { off, record, replay };
  Mode mode = Mode::off;
  std::vector<Matrix> values;
  std::size_t cursor = 0;
};

thread_local SgReplay g_sg_replay;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) +
                         " vs " + shape_string(b.rows(), b.cols()));
  }
}

void require_positive_temperature(double t, const char* op) {
  if (!(t > 0.0)) throw ParameterError(std::string(op) + ": temperature must be > 0");
}

Tensor make_op(Matrix value, std::vector<Tensor> inputs, const char* op, detail::BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->is_leaf = false;
  node->op = op;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  node->requires_grad = needs;
  if (needs) {
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor::from_node(std::move(node));
}

Matrix row_softmax(const Matrix& x, double temperature) {
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    y.row(i) = ((x.row(i).array() - mx) / temperature).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

Matrix row_logsumexp(const Matrix& x, double temperature) {
  Matrix out(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    out(i, 0) = mx + temperature * std::log(((x.row(i).array() - mx) / temperature).exp().sum());
  }
  return out;
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::leaf(Matrix value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return from_node(std::move(node));
}

Tensor Tensor::constant(Matrix value) { return leaf(std::move(value), false); }

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Tensor Tensor::from_node(NodePtr n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

Index Tensor::rows() const { return node_->value.rows(); }
Index Tensor::cols() const { return node_->value.cols(); }
const Matrix& Tensor::value() const { return node_->value; }

Matrix& Tensor::mutable_value() {
  if (!node_->is_leaf) throw ContractError("mutable_value: only leaves may be mutated");
  return node_->value;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) {
    throw DimensionError("item: tensor is " + shape_string(rows(), cols()) + ", not 1x1");
  }
  return node_->value(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf; }
const std::string& Tensor::op() const { return node_->op; }
bool Tensor::has_grad() const { return node_->grad.size() > 0; }

const Matrix& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad: no gradient has been accumulated");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.setZero(node_->value.rows(), node_->value.cols()); }
void Tensor::clear_grad() { node_->grad.resize(0, 0); }

// ---- record & backward --------------------------------------------------------

ComputationRecord ComputationRecord::build(const Tensor& root) {
  ComputationRecord rec;
  if (!root.requires_grad()) return rec;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS; recursion depth would track network depth only,
  // but long chains of elementwise ops are easy to build in tests.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const NodePtr& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      rec.order_.push_back(node);
      stack.pop_back();
    }
  }
  return rec;
}

bool ComputationRecord::is_topologically_ordered() const {
  std::unordered_map<const Node*, std::size_t> pos;
  for (std::size_t i = 0; i < order_.size(); ++i) pos[order_[i].get()] = i;
  for (std::size_t i = 0; i < order_.size(); ++i) {
    for (const auto& in : order_[i]->inputs) {
      auto it = pos.find(in.get());
      if (it != pos.end() && it->second >= i) return false;
    }
  }
  return true;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined tensor");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionError("backward: loss must be 1x1, got " + shape_string(loss.rows(), loss.cols()));
  }
  const ComputationRecord rec = ComputationRecord::build(loss);
  if (rec.size() == 0) return;

  std::unordered_map<const Node*, Matrix> grads;
  grads.reserve(rec.size());
  grads[loss.node().get()] = Matrix::Ones(1, 1);

  const auto& nodes = rec.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node* node = it->get();
    auto g_it = grads.find(node);
    if (g_it == grads.end()) continue;
    Matrix g = std::move(g_it->second);
    grads.erase(g_it);

    if (node->is_leaf) {
      if (node->grad.size() == 0) {
        node->grad = std::move(g);
      } else {
        node->grad += g;
      }
      continue;
    }
    std::vector<Matrix> in_grads = node->backward(g);
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      const Node* in = node->inputs[k].get();
      if (!in->requires_grad || k >= in_grads.size() || in_grads[k].size() == 0) continue;
      auto [slot, inserted] = grads.try_emplace(in, std::move(in_grads[k]));
      if (!inserted) slot->second += in_grads[k];
    }
  }
}

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.rows(), a.cols()) +
                         " * " + shape_string(b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, "matmul", [a, b](const Matrix& g) {
    std::vector<Matrix> r(2);
    if (a.requires_grad()) r[0] = g * b.value().transpose();
    if (b.requires_grad()) r[1] = a.value().transpose() * g;
    return r;
  });
}

Tensor transpose(const Tensor& x) {
  return make_op(x.value().transpose(), {x}, "transpose",
                 [](const Matrix& g) { return std::vector<Matrix>{g.transpose()}; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, "add",
                 [](const Matrix& g) { return std::vector<Matrix>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, "sub",
                 [](const Matrix& g) { return std::vector<Matrix>{g, -g}; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), {a, b}, "hadamard", [a, b](const Matrix& g) {
    return std::vector<Matrix>{g.cwiseProduct(b.value()), g.cwiseProduct(a.value())};
  });
}

Tensor scale(const Tensor& x, double factor) {
  return make_op(x.value() * factor, {x}, "scale",
                 [factor](const Matrix& g) { return std::vector<Matrix>{g * factor}; });
}

Tensor add_scalar(const Tensor& x, double c) {
  Matrix out = x.value().array() + c;
  return make_op(std::move(out), {x}, "add_scalar",
                 [](const Matrix& g) { return std::vector<Matrix>{g}; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError("add_row: row " + shape_string(row.rows(), row.cols()) +
                         " does not broadcast over " + shape_string(x.rows(), x.cols()));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {x, row}, "add_row", [](const Matrix& g) {
    return std::vector<Matrix>{g, g.colwise().sum()};
  });
}

Tensor sub_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError("sub_row: row " + shape_string(row.rows(), row.cols()) +
                         " does not broadcast over " + shape_string(x.rows(), x.cols()));
  }
  Matrix out = x.value().rowwise() - row.value().row(0);
  return make_op(std::move(out), {x, row}, "sub_row", [](const Matrix& g) {
    return std::vector<Matrix>{g, -g.colwise().sum()};
  });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionError("mul_row: row " + shape_string(row.rows(), row.cols()) +
                         " does not broadcast over " + shape_string(x.rows(), x.cols()));
  }
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return make_op(std::move(out), {x, row}, "mul_row", [x, row](const Matrix& g) {
    std::vector<Matrix> r(2);
    if (x.requires_grad()) r[0] = g.array().rowwise() * row.value().row(0).array();
    if (row.requires_grad()) r[1] = g.cwiseProduct(x.value()).colwise().sum();
    return r;
  });
}

Tensor square(const Tensor& x) {
  return make_op(x.value().array().square().matrix(), {x}, "square", [x](const Matrix& g) {
    return std::vector<Matrix>{2.0 * g.cwiseProduct(x.value())};
  });
}

Tensor sqrt(const Tensor& x) {
  Matrix y = x.value().cwiseSqrt();
  return make_op(y, {x}, "sqrt", [y](const Matrix& g) {
    return std::vector<Matrix>{(g.array() / (2.0 * y.array())).matrix()};
  });
}

Tensor tanh(const Tensor& x) {
  Matrix y = x.value().array().tanh().matrix();
  return make_op(y, {x}, "tanh", [y](const Matrix& g) {
    return std::vector<Matrix>{(g.array() * (1.0 - y.array().square())).matrix()};
  });
}

Tensor relu(const Tensor& x) {
  Matrix y = x.value().cwiseMax(0.0);
  return make_op(std::move(y), {x}, "relu", [x](const Matrix& g) {
    return std::vector<Matrix>{(x.value().array() > 0.0).select(g, 0.0).matrix()};
  });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const Index r = x.rows(), c = x.cols();
  return make_op(std::move(out), {x}, "sum", [r, c](const Matrix& g) {
    return std::vector<Matrix>{Matrix::Constant(r, c, g(0, 0))};
  });
}

Tensor mean(const Tensor& x) {
  const Index r = x.rows(), c = x.cols();
  const double n = static_cast<double>(r * c);
  if (r * c == 0) throw DimensionError("mean: empty tensor");
  Matrix out(1, 1);
  out(0, 0) = x.value().sum() / n;
  return make_op(std::move(out), {x}, "mean", [r, c, n](const Matrix& g) {
    return std::vector<Matrix>{Matrix::Constant(r, c, g(0, 0) / n)};
  });
}

Tensor col_mean(const Tensor& x) {
  const Index r = x.rows();
  if (r == 0) throw DimensionError("col_mean: no rows");
  Matrix out = x.value().colwise().sum() / static_cast<double>(r);
  return make_op(std::move(out), {x}, "col_mean", [r](const Matrix& g) {
    Matrix gx = g.replicate(r, 1) / static_cast<double>(r);
    return std::vector<Matrix>{std::move(gx)};
  });
}

Tensor row_sum(const Tensor& x) {
  const Index c = x.cols();
  Matrix out = x.value().rowwise().sum();
  return make_op(std::move(out), {x}, "row_sum", [c](const Matrix& g) {
    return std::vector<Matrix>{g.replicate(1, c)};
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_dot");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return make_op(std::move(out), {a, b}, "rowwise_dot", [a, b](const Matrix& g) {
    std::vector<Matrix> r(2);
    if (a.requires_grad()) r[0] = b.value().array().colwise() * g.col(0).array();
    if (b.requires_grad()) r[1] = a.value().array().colwise() * g.col(0).array();
    return r;
  });
}

Tensor diagonal(const Tensor& x) {
  if (x.rows() != x.cols()) {
    throw DimensionError("diagonal: matrix is not square " + shape_string(x.rows(), x.cols()));
  }
  const Index n = x.rows();
  Matrix out = x.value().diagonal();
  return make_op(std::move(out), {x}, "diagonal", [n](const Matrix& g) {
    Matrix gx = Matrix::Zero(n, n);
    gx.diagonal() = g.col(0);
    return std::vector<Matrix>{std::move(gx)};
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column counts differ " + shape_string(a.rows(), a.cols()) +
                         " vs " + shape_string(b.rows(), b.cols()));
  }
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  const Index ra = a.rows(), rb = b.rows();
  return make_op(std::move(out), {a, b}, "concat_rows", [ra, rb](const Matrix& g) {
    return std::vector<Matrix>{g.topRows(ra), g.bottomRows(rb)};
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index r = parts.front().rows();
  Index total = 0;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Matrix out(r, total);
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return make_op(std::move(out), parts, "concat_cols", [widths](const Matrix& g) {
    std::vector<Matrix> r;
    Index o = 0;
    for (Index w : widths) {
      r.emplace_back(g.middleCols(o, w));
      o += w;
    }
    return r;
  });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const Index m = x.rows();
  Matrix y(x.rows(), x.cols());
  Eigen::VectorXd denom(m);
  std::vector<bool> clamped(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const double n = x.value().row(i).norm();
    clamped[static_cast<std::size_t>(i)] = !(n > eps);
    denom(i) = std::max(n, eps);
    y.row(i) = x.value().row(i) / denom(i);
  }
  return make_op(y, {x}, "l2_normalize_rows", [y, denom, clamped](const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      if (clamped[static_cast<std::size_t>(i)]) {
        gx.row(i) = g.row(i) / denom(i);
      } else {
        const double proj = y.row(i).dot(g.row(i));
        gx.row(i) = (g.row(i) - proj * y.row(i)) / denom(i);
      }
    }
    return std::vector<Matrix>{std::move(gx)};
  });
}

Tensor softmax_rows(const Tensor& x, double temperature) {
  require_positive_temperature(temperature, "softmax_rows");
  Matrix y = row_softmax(x.value(), temperature);
  return make_op(y, {x}, "softmax_rows", [y, temperature](const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      gx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix() / temperature;
    }
    return std::vector<Matrix>{std::move(gx)};
  });
}

Tensor log_softmax_rows(const Tensor& x, double temperature) {
  require_positive_temperature(temperature, "log_softmax_rows");
  const Matrix lse = row_logsumexp(x.value(), temperature);
  Matrix out = (x.value().colwise() - lse.col(0)) / temperature;
  Matrix p = row_softmax(x.value(), temperature);
  return make_op(std::move(out), {x}, "log_softmax_rows", [p, temperature](const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      gx.row(i) = (g.row(i) - g.row(i).sum() * p.row(i)) / temperature;
    }
    return std::vector<Matrix>{std::move(gx)};
  });
}

Tensor logsumexp_rows(const Tensor& x, double temperature) {
  require_positive_temperature(temperature, "logsumexp_rows");
  Matrix out = row_logsumexp(x.value(), temperature);
  Matrix p = row_softmax(x.value(), temperature);
  return make_op(std::move(out), {x}, "logsumexp_rows", [p](const Matrix& g) {
    Matrix gx = p.array().colwise() * g.col(0).array();
    return std::vector<Matrix>{std::move(gx)};
  });
}

Tensor stop_gradient(const Tensor& x) {
  Matrix v = x.value();
  auto& replay = g_sg_replay;
  if (replay.mode == SgReplay::Mode::record) {
    replay.values.push_back(v);
  } else if (replay.mode == SgReplay::Mode::replay) {
    if (replay.cursor >= replay.values.size()) {
      throw ContractError("stop_gradient: replay diverged from the reference evaluation");
    }
    v = replay.values[replay.cursor++];
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(v);
  node->is_leaf = false;
  node->op = "stop_gradient";
  node->requires_grad = false;
  return Tensor::from_node(std::move(node));
}

namespace {

struct BatchNormForward {
  Matrix y;
  RowVector inv_std;
};

BatchNormForward batch_norm_forward(const Matrix& x, double eps) {
  const double m = static_cast<double>(x.rows());
  const RowVector mu = x.colwise().sum() / m;
  Matrix centered = x.rowwise() - mu;
  // Second pass removes the rounding left in mu; constant columns become exact zeros.
  centered.rowwise() -= centered.colwise().sum() / m;
  const RowVector var = centered.array().square().colwise().sum().matrix() / m;
  RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix y = centered.array().rowwise() * inv_std.array();
  return {std::move(y), std::move(inv_std)};
}

Matrix batch_norm_backward(const Matrix& g, const Matrix& y, const RowVector& inv_std) {
  const double m = static_cast<double>(g.rows());
  const RowVector g_mean = g.colwise().sum() / m;
  const RowVector gy_mean = g.cwiseProduct(y).colwise().sum() / m;
  Matrix gx = (g.rowwise() - g_mean) - (y.array().rowwise() * gy_mean.array()).matrix();
  return gx.array().rowwise() * inv_std.array();
}

}  // namespace

Tensor batch_norm_cols(const Tensor& x, double eps) {
  if (x.rows() < 2) throw BatchSizeError("batch_norm_cols: need at least 2 rows");
  auto fwd = batch_norm_forward(x.value(), eps);
  Matrix y = fwd.y;
  return make_op(std::move(fwd.y), {x}, "batch_norm_cols",
                 [y, inv_std = std::move(fwd.inv_std)](const Matrix& g) {
                   return std::vector<Matrix>{batch_norm_backward(g, y, inv_std)};
                 });
}

Tensor batch_norm_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols()) {
    throw DimensionError("batch_norm_cols: affine parameters must be 1 x cols");
  }
  return add_row(mul_row(batch_norm_cols(x, eps), gamma), beta);
}

// ---- gradient checking -------------------------------------------------------

namespace {

struct ReplayScope {
  explicit ReplayScope(SgReplay::Mode mode) {
    g_sg_replay.mode = mode;
    g_sg_replay.cursor = 0;
    if (mode == SgReplay::Mode::record) g_sg_replay.values.clear();
  }
  ~ReplayScope() { g_sg_replay.mode = SgReplay::Mode::off; }
  ReplayScope(const ReplayScope&) = delete;
  ReplayScope& operator=(const ReplayScope&) = delete;
};

double eval_scalar(const ScalarFn& f, const Matrix& x) {
  Tensor out = f(Tensor::constant(x));
  if (out.rows() != 1 || out.cols() != 1) throw ContractError("grad_check: f must return a scalar");
  return out.item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Matrix& x, double step, double tol, double floor) {
  if (!(step >= 1e-7 && step <= 1e-3)) throw ParameterError("grad_check: step must lie in [1e-7, 1e-3]");
  GradCheckReport report;

  Tensor leaf = Tensor::leaf(x, true);
  {
    ReplayScope scope(SgReplay::Mode::record);
    Tensor out = f(leaf);
    if (out.rows() != 1 || out.cols() != 1) throw ContractError("grad_check: f must return a scalar");
    backward(out);
  }
  report.analytic = leaf.has_grad() ? leaf.grad() : Matrix::Zero(x.rows(), x.cols());

  report.numeric.resize(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + step;
      double plus = 0.0, minus = 0.0;
      {
        ReplayScope scope(SgReplay::Mode::replay);
        plus = eval_scalar(f, probe);
      }
      probe(i, j) = orig - step;
      {
        ReplayScope scope(SgReplay::Mode::replay);
        minus = eval_scalar(f, probe);
      }
      probe(i, j) = orig;
      report.numeric(i, j) = (plus - minus) / (2.0 * step);
    }
  }
  g_sg_replay.values.clear();

  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double a = report.analytic(i, j);
      const double n = report.numeric(i, j);
      const double abs_err = std::abs(a - n);
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
    }
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < tol;
  return report;
}

}  // namespace sslab::ad
