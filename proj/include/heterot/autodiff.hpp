#pragma once

// Tape-based reverse-mode automatic differentiation over dense 64-bit
// matrices. Every operation records its parents and a closure that pushes
// the output gradient back to them; backward() walks the recorded graph in
// reverse topological order.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "heterot/errors.hpp"

namespace heterot::ad {

using Matrix = Eigen::MatrixXd;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Matrix&)> backward;
};

inline void accumulate(Node& node, const Matrix& g) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

inline void check_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw NumericalError(std::string("non-finite value produced by ") + where);
}

}  // namespace detail

/// A node in the computation graph. Copies share the same node.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}

  explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<detail::Node>()) {
    if (value.size() == 0) throw DimensionError("tensor must have a positive number of entries");
    detail::check_finite(value, "tensor construction");
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Matrix::Constant(1, 1, v), requires_grad);
  }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Accumulated gradient; zeros of the right shape if nothing reached this node.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }

  double item() const {
    if (node_->value.size() != 1) throw DimensionError("item() requires a scalar tensor");
    return node_->value(0, 0);
  }

  void zero_grad() { node_->grad.resize(0, 0); }

  /// Replaces the value of a leaf in place (optimizer updates between tapes).
  void assign(Matrix value) {
    if (!node_->parents.empty()) throw std::logic_error("assign() is only valid on leaf tensors");
    if (value.rows() != rows() || value.cols() != cols()) throw DimensionError("assign() shape mismatch");
    detail::check_finite(value, "assign");
    node_->value = std::move(value);
  }

  /// Propagates d(this)/d(leaf) into every reachable leaf that requires grad.
  void backward() {
    if (node_->value.size() != 1) throw DimensionError("backward() requires a scalar loss");
    if (node_->consumed) throw std::logic_error("backward() called twice on the same graph");
    node_->consumed = true;
    if (!node_->requires_grad) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, bool>> stack{{node_.get(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        order.push_back(n);
        continue;
      }
      if (!seen.insert(n).second) continue;
      stack.emplace_back(n, true);
      for (const auto& p : n->parents) {
        if (p->requires_grad && !seen.count(p.get())) stack.emplace_back(p.get(), false);
      }
    }

    detail::accumulate(*node_, Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward && n->grad.size() != 0) n->backward(n->grad);
    }
  }

  /// Builds an operation node; the closure receives the output gradient.
  template <typename Backward>
  static Tensor make_op(Matrix value, std::vector<Tensor> inputs, Backward&& bw, const char* name) {
    detail::check_finite(value, name);
    Tensor out;
    out.node_->value = std::move(value);
    for (const auto& in : inputs) out.node_->requires_grad |= in.requires_grad();
    if (out.node_->requires_grad) {
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backward = std::forward<Backward>(bw);
    }
    return out;
  }

  detail::Node& node() const { return *node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline Tensor constant(Matrix value) { return Tensor(std::move(value), false); }

inline Tensor detach(const Tensor& t) { return Tensor(t.value(), false); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  auto& na = a.node();
  auto& nb = b.node();
  return Tensor::make_op(
      a.value() * b.value(), {a, b},
      [&na, &nb](const Matrix& g) {
        if (na.requires_grad) detail::accumulate(na, g * nb.value.transpose());
        if (nb.requires_grad) detail::accumulate(nb, na.value.transpose() * g);
      },
      "matmul");
}

namespace detail {

// Reduces a gradient of the broadcast output back to the shape of b.
inline Matrix reduce_broadcast(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

inline Matrix broadcast(const Matrix& b, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (b.rows() == rows && b.cols() == cols) return b;
  if (b.rows() == 1 && b.cols() == 1) return Matrix::Constant(rows, cols, b(0, 0));
  if (b.rows() == 1 && b.cols() == cols) return b.replicate(rows, 1);
  if (b.cols() == 1 && b.rows() == rows) return b.replicate(1, cols);
  throw DimensionError(std::string(name) + ": shapes are not broadcast-compatible");
}

}  // namespace detail

/// a + b, where b may be a row vector, a column vector or a scalar broadcast over a.
inline Tensor add(const Tensor& a, const Tensor& b) {
  auto& na = a.node();
  auto& nb = b.node();
  return Tensor::make_op(
      a.value() + detail::broadcast(b.value(), a.rows(), a.cols(), "add"), {a, b},
      [&na, &nb](const Matrix& g) {
        detail::accumulate(na, g);
        if (nb.requires_grad) detail::accumulate(nb, detail::reduce_broadcast(g, nb.value.rows(), nb.value.cols()));
      },
      "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto& na = a.node();
  auto& nb = b.node();
  return Tensor::make_op(
      a.value() - detail::broadcast(b.value(), a.rows(), a.cols(), "sub"), {a, b},
      [&na, &nb](const Matrix& g) {
        detail::accumulate(na, g);
        if (nb.requires_grad) detail::accumulate(nb, -detail::reduce_broadcast(g, nb.value.rows(), nb.value.cols()));
      },
      "sub");
}

/// Elementwise product of equally shaped tensors.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("mul: shape mismatch");
  auto& na = a.node();
  auto& nb = b.node();
  return Tensor::make_op(
      a.value().cwiseProduct(b.value()), {a, b},
      [&na, &nb](const Matrix& g) {
        if (na.requires_grad) detail::accumulate(na, g.cwiseProduct(nb.value));
        if (nb.requires_grad) detail::accumulate(nb, g.cwiseProduct(na.value));
      },
      "mul");
}

inline Tensor scale(const Tensor& a, double s) {
  auto& na = a.node();
  return Tensor::make_op(
      a.value() * s, {a}, [&na, s](const Matrix& g) { detail::accumulate(na, g * s); }, "scale");
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

inline Tensor transpose(const Tensor& a) {
  auto& na = a.node();
  return Tensor::make_op(
      a.value().transpose(), {a}, [&na](const Matrix& g) { detail::accumulate(na, g.transpose()); }, "transpose");
}

inline Tensor relu(const Tensor& a) {
  auto& na = a.node();
  return Tensor::make_op(
      a.value().cwiseMax(0.0), {a},
      [&na](const Matrix& g) {
        detail::accumulate(na, (na.value.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
      },
      "relu");
}

namespace detail {
inline Matrix sign(const Matrix& m) {
  return m.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}
}  // namespace detail

/// |a|, with subgradient 0 at the kink.
inline Tensor abs(const Tensor& a) {
  auto& na = a.node();
  return Tensor::make_op(
      a.value().cwiseAbs(), {a},
      [&na](const Matrix& g) { detail::accumulate(na, detail::sign(na.value).cwiseProduct(g)); }, "abs");
}

inline Tensor square(const Tensor& a) {
  auto& na = a.node();
  return Tensor::make_op(
      a.value().cwiseAbs2(), {a},
      [&na](const Matrix& g) { detail::accumulate(na, 2.0 * na.value.cwiseProduct(g)); }, "square");
}

/// |a|^r elementwise for r >= 1.
inline Tensor pow_abs(const Tensor& a, double r) {
  if (r < 1.0) throw MethodError("pow_abs requires r >= 1");
  auto& na = a.node();
  Matrix out = (r == 2.0) ? Matrix(a.value().cwiseAbs2()) : Matrix(a.value().cwiseAbs().array().pow(r).matrix());
  return Tensor::make_op(
      std::move(out), {a},
      [&na, r](const Matrix& g) {
        Matrix d;
        if (r == 2.0) {
          d = 2.0 * na.value;
        } else if (r == 1.0) {
          d = detail::sign(na.value);
        } else {
          d = (r * na.value.cwiseAbs().array().pow(r - 1.0)).matrix().cwiseProduct(detail::sign(na.value));
        }
        detail::accumulate(na, d.cwiseProduct(g));
      },
      "pow_abs");
}

/// a^e for nonnegative a. The derivative at a = 0 is taken as 0 when e < 1.
inline Tensor pow(const Tensor& a, double e) {
  if ((a.value().array() < 0.0).any()) throw MethodError("pow requires nonnegative input");
  auto& na = a.node();
  return Tensor::make_op(
      Matrix(a.value().array().pow(e).matrix()), {a},
      [&na, e](const Matrix& g) {
        Matrix d = na.value.unaryExpr([e](double v) {
          if (v > 0.0) return e * std::pow(v, e - 1.0);
          return e == 1.0 ? 1.0 : 0.0;
        });
        detail::accumulate(na, d.cwiseProduct(g));
      },
      "pow");
}

inline Tensor sum(const Tensor& a) {
  auto& na = a.node();
  return Tensor::make_op(
      Matrix::Constant(1, 1, a.value().sum()), {a},
      [&na](const Matrix& g) { detail::accumulate(na, Matrix::Constant(na.value.rows(), na.value.cols(), g(0, 0))); },
      "sum");
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Column sums, 1 x cols.
inline Tensor col_sum(const Tensor& a) {
  auto& na = a.node();
  return Tensor::make_op(
      Matrix(a.value().colwise().sum()), {a},
      [&na](const Matrix& g) { detail::accumulate(na, g.replicate(na.value.rows(), 1)); }, "col_sum");
}

/// Divides each row by max(||row||, eps); rows with norm >= eps come out unit length.
inline Tensor sphere_normalize(const Tensor& a, double eps = 1e-12) {
  auto& na = a.node();
  Matrix out = a.value();
  Eigen::VectorXd norms(out.rows());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    norms(i) = std::max(out.row(i).norm(), eps);
    out.row(i) /= norms(i);
  }
  return Tensor::make_op(
      std::move(out), {a},
      [&na, norms, eps](const Matrix& g) {
        Matrix d(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          const double n = norms(i);
          const auto x = na.value.row(i);
          if (x.norm() >= eps) {
            const Eigen::RowVectorXd u = x / n;
            d.row(i) = (g.row(i) - g.row(i).dot(u) * u) / n;
          } else {
            d.row(i) = g.row(i) / eps;
          }
        }
        detail::accumulate(na, d);
      },
      "sphere_normalize");
}

/// Per-column gather: out(i, c) = a(perm[c][i], c). The permutation is a constant.
inline Tensor gather_cols(const Tensor& a, std::vector<std::vector<Eigen::Index>> perm) {
  if (static_cast<Eigen::Index>(perm.size()) != a.cols()) throw DimensionError("gather_cols: one index list per column");
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    if (static_cast<Eigen::Index>(perm[c].size()) != a.rows()) throw DimensionError("gather_cols: index list length");
    for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, c) = a.value()(perm[c][i], c);
  }
  auto& na = a.node();
  return Tensor::make_op(
      std::move(out), {a},
      [&na, perm = std::move(perm)](const Matrix& g) {
        Matrix d = Matrix::Zero(na.value.rows(), na.value.cols());
        for (std::size_t c = 0; c < perm.size(); ++c) {
          for (std::size_t i = 0; i < perm[c].size(); ++i) d(perm[c][i], c) += g(i, c);
        }
        detail::accumulate(na, d);
      },
      "gather_cols");
}

/// Gathers rows by index (indices may repeat).
inline Tensor gather_rows(const Tensor& a, std::vector<Eigen::Index> idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw DimensionError("gather_rows: index out of range");
    out.row(i) = a.value().row(idx[i]);
  }
  auto& na = a.node();
  return Tensor::make_op(
      std::move(out), {a},
      [&na, idx = std::move(idx)](const Matrix& g) {
        Matrix d = Matrix::Zero(na.value.rows(), na.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(i);
        detail::accumulate(na, d);
      },
      "gather_rows");
}

/// Ascending stable sort order of each column (ties broken by original index).
inline std::vector<std::vector<Eigen::Index>> column_sort_order(const Matrix& m) {
  std::vector<std::vector<Eigen::Index>> perm(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    auto& p = perm[c];
    p.resize(m.rows());
    std::iota(p.begin(), p.end(), Eigen::Index{0});
    std::stable_sort(p.begin(), p.end(), [&](Eigen::Index i, Eigen::Index j) { return m(i, c) < m(j, c); });
  }
  return perm;
}

/// Sorts every column ascending. The sort permutation is frozen for the backward pass.
inline Tensor sort_cols(const Tensor& a) { return gather_cols(a, column_sort_order(a.value())); }

/// Reverses the row order.
inline Tensor reverse_rows(const Tensor& a) {
  std::vector<Eigen::Index> idx(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) idx[i] = a.rows() - 1 - i;
  return gather_rows(a, std::move(idx));
}

}  // namespace heterot::ad
