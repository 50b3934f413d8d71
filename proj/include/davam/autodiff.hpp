// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on dense row-major matrices.
// Graphs are dynamic: every forward pass records a fresh tape of nodes and
// backward() releases it with the last Tensor handle. Values are 2-D only;
// the only implicit broadcasts are scalar-with-tensor and a trailing
// [1 x N] row, everything else must go through an explicit op.

#pragma once

#include "davam/common.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <unordered_set>
#include <utility>
#include <vector>

namespace davam {

// Grad recording is on by default; generation/evaluation paths disable it to
// skip tape construction entirely.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename Scalar>
class Tensor {
 public:
  using Matrix = Mat<Scalar>;

  struct Node {
    Matrix value;
    std::optional<Matrix> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Receives this node's accumulated gradient, pushes into parents.
    std::function<void(const Matrix&)> backward;
    const char* op = "leaf";
  };
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;

  static Tensor from(Matrix m, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->value = std::move(m);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Eigen::Index rows, Eigen::Index cols,
                      bool requires_grad = false) {
    return from(Matrix::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(Scalar v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return from(std::move(m));
  }

  bool valid() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

  const Matrix& value() const { return node_->value; }
  // In-place access for leaves (parameter updates, finite differences).
  Matrix& value_mut() { return node_->value; }

  Scalar item() const {
    if (rows() != 1 || cols() != 1)
      throw ContractError("item(): tensor is not a scalar");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  bool has_grad() const { return node_->grad.has_value(); }
  const Matrix& grad() const {
    if (!node_->grad)
      throw ContractError("grad(): no gradient accumulated on this tensor");
    return *node_->grad;
  }
  Matrix grad_or_zero() const {
    if (node_->grad) return *node_->grad;
    return Matrix::Zero(rows(), cols());
  }
  void zero_grad() { node_->grad.reset(); }

  NodePtr node() const { return node_; }

  // Reverse sweep from a scalar root. Each reachable node is processed
  // exactly once in topological order, so fan-out accumulates additively.
  void backward() const {
    if (!node_) throw ContractError("backward(): empty tensor");
    if (rows() != 1 || cols() != 1)
      throw ContractError("backward(): root must be a 1x1 scalar");
    if (!node_->requires_grad)
      throw ContractError("backward(): root does not require gradients");

    std::vector<Node*> order = topo_order(node_.get());
    node_->grad = Matrix::Ones(1, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (!n->backward) continue;
      if (!n->grad) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
      n->backward(*n->grad);
    }
  }

 private:
  static std::vector<Node*> topo_order(Node* root) {
    // Iterative post-order DFS over requires_grad parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx].get();
        ++idx;
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  NodePtr node_;
};

namespace detail {

template <typename Scalar>
void accum(const typename Tensor<Scalar>::NodePtr& p, const Mat<Scalar>& delta) {
  if (!p->requires_grad) return;
  if (!p->grad) p->grad = Mat<Scalar>::Zero(p->value.rows(), p->value.cols());
  *p->grad += delta;
}

template <typename Scalar, typename Fn>
Tensor<Scalar> make_op(Mat<Scalar> value,
                       std::vector<Tensor<Scalar>> parents, Fn&& fn,
                       const char* op) {
  bool req = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p.requires_grad()) {
        req = true;
        break;
      }
  }
  Tensor<Scalar> out = Tensor<Scalar>::from(std::move(value), req);
  if (req) {
    auto node = out.node();
    node->op = op;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::forward<Fn>(fn);
  }
  return out;
}

template <typename Scalar>
void check_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                      const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic
// ---------------------------------------------------------------------------

// add/sub/mul accept equal shapes, a [1 x N] row against [M x N], or a 1x1
// scalar against anything. The broadcast operand must be the second argument.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto an = a.node();
  auto bn = b.node();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return detail::make_op<Scalar>(
        a.value() + b.value(), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(an, up);
          detail::accum<Scalar>(bn, up);
        },
        "add");
  }
  if (b.rows() == 1 && b.cols() == 1) {
    return detail::make_op<Scalar>(
        (a.value().array() + b.value()(0, 0)).matrix(), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(an, up);
          Mat<Scalar> s(1, 1);
          s(0, 0) = up.sum();
          detail::accum<Scalar>(bn, s);
        },
        "add_scalar");
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Mat<Scalar> v = a.value();
    v.rowwise() += b.value().row(0);
    return detail::make_op<Scalar>(
        std::move(v), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(an, up);
          detail::accum<Scalar>(bn, up.colwise().sum());
        },
        "add_row");
  }
  throw ContractError("add: incompatible shapes");
}

template <typename Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& a) {
  auto an = a.node();
  return detail::make_op<Scalar>(
      -a.value(), {a},
      [an](const Mat<Scalar>& up) { detail::accum<Scalar>(an, -up); }, "neg");
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto an = a.node();
  auto bn = b.node();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return detail::make_op<Scalar>(
        a.value() - b.value(), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(an, up);
          detail::accum<Scalar>(bn, -up);
        },
        "sub");
  }
  return add(a, neg(b));
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto an = a.node();
  auto bn = b.node();
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return detail::make_op<Scalar>(
        a.value().cwiseProduct(b.value()), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(an, up.cwiseProduct(bn->value));
          detail::accum<Scalar>(bn, up.cwiseProduct(an->value));
        },
        "mul");
  }
  if (b.rows() == 1 && b.cols() == 1) {
    return detail::make_op<Scalar>(
        a.value() * b.value()(0, 0), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(an, up * bn->value(0, 0));
          Mat<Scalar> s(1, 1);
          s(0, 0) = up.cwiseProduct(an->value).sum();
          detail::accum<Scalar>(bn, s);
        },
        "mul_scalar");
  }
  if (b.rows() == 1 && b.cols() == a.cols()) {
    Mat<Scalar> v = a.value().array().rowwise() * b.value().array().row(0);
    return detail::make_op<Scalar>(
        std::move(v), {a, b},
        [an, bn](const Mat<Scalar>& up) {
          detail::accum<Scalar>(
              an, (up.array().rowwise() * bn->value.array().row(0)).matrix());
          detail::accum<Scalar>(
              bn, up.cwiseProduct(an->value).colwise().sum());
        },
        "mul_row");
  }
  throw ContractError("mul: incompatible shapes");
}

// Elementwise division, equal shapes only.
template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::check_same_shape(a, b, "div");
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Scalar>(
      a.value().cwiseQuotient(b.value()), {a, b},
      [an, bn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(an, up.cwiseQuotient(bn->value));
        detail::accum<Scalar>(
            bn, (-up.array() * an->value.array() /
                 (bn->value.array() * bn->value.array()))
                    .matrix());
      },
      "div");
}

template <typename Scalar>
Tensor<Scalar> mul_const(const Tensor<Scalar>& a, Scalar c) {
  auto an = a.node();
  return detail::make_op<Scalar>(
      a.value() * c, {a},
      [an, c](const Mat<Scalar>& up) { detail::accum<Scalar>(an, up * c); },
      "mul_const");
}

template <typename Scalar>
Tensor<Scalar> add_const(const Tensor<Scalar>& a, Scalar c) {
  auto an = a.node();
  return detail::make_op<Scalar>(
      (a.value().array() + c).matrix(), {a},
      [an](const Mat<Scalar>& up) { detail::accum<Scalar>(an, up); },
      "add_const");
}

// Scales row i of m by col(i, 0); the column gets the matching reduction.
template <typename Scalar>
Tensor<Scalar> scale_rows(const Tensor<Scalar>& m, const Tensor<Scalar>& col) {
  if (col.cols() != 1 || col.rows() != m.rows())
    throw ContractError("scale_rows: column shape mismatch");
  auto mn = m.node();
  auto cn = col.node();
  Mat<Scalar> v = m.value().array().colwise() * col.value().array().col(0);
  return detail::make_op<Scalar>(
      std::move(v), {m, col},
      [mn, cn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(
            mn, (up.array().colwise() * cn->value.array().col(0)).matrix());
        detail::accum<Scalar>(cn,
                              up.cwiseProduct(mn->value).rowwise().sum());
      },
      "scale_rows");
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dims differ");
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Scalar>(
      a.value() * b.value(), {a, b},
      [an, bn](const Mat<Scalar>& up) {
        if (an->requires_grad)
          detail::accum<Scalar>(an, up * bn->value.transpose());
        if (bn->requires_grad)
          detail::accum<Scalar>(bn, an->value.transpose() * up);
      },
      "matmul");
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
  auto xn = x.node();
  Mat<Scalar> y = x.value().array().tanh();
  Tensor<Scalar> out = detail::make_op<Scalar>(std::move(y), {x}, nullptr, "tanh");
  if (out.requires_grad()) {
    auto on = out.node();
    typename Tensor<Scalar>::Node* self = on.get();
    on->backward = [xn, self](const Mat<Scalar>& up) {
      detail::accum<Scalar>(
          xn, (up.array() * (Scalar(1) - self->value.array().square())).matrix());
    };
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  auto xn = x.node();
  Mat<Scalar> y = x.value().unaryExpr([](Scalar v) {
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
    Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  Tensor<Scalar> out =
      detail::make_op<Scalar>(std::move(y), {x}, nullptr, "sigmoid");
  if (out.requires_grad()) {
    auto on = out.node();
    typename Tensor<Scalar>::Node* self = on.get();
    on->backward = [xn, self](const Mat<Scalar>& up) {
      auto y = self->value.array();
      detail::accum<Scalar>(xn, (up.array() * y * (Scalar(1) - y)).matrix());
    };
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& x) {
  auto xn = x.node();
  Mat<Scalar> y = x.value().array().exp();
  Tensor<Scalar> out = detail::make_op<Scalar>(std::move(y), {x}, nullptr, "exp");
  if (out.requires_grad()) {
    auto on = out.node();
    typename Tensor<Scalar>::Node* self = on.get();
    on->backward = [xn, self](const Mat<Scalar>& up) {
      detail::accum<Scalar>(xn, up.cwiseProduct(self->value));
    };
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& x) {
  if ((x.value().array() <= Scalar(0)).any())
    throw NumericError("log: non-positive input");
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().array().log().matrix(), {x},
      [xn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(xn, up.cwiseQuotient(xn->value));
      },
      "log");
}

template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x) {
  auto xn = x.node();
  Mat<Scalar> y = x.value().unaryExpr([](Scalar v) {
    if (v > Scalar(30)) return v;
    return std::log1p(std::exp(v));
  });
  return detail::make_op<Scalar>(
      std::move(y), {x},
      [xn](const Mat<Scalar>& up) {
        Mat<Scalar> s = xn->value.unaryExpr([](Scalar v) {
          if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
          Scalar e = std::exp(v);
          return e / (Scalar(1) + e);
        });
        detail::accum<Scalar>(xn, up.cwiseProduct(s));
      },
      "softplus");
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().cwiseMax(Scalar(0)), {x},
      [xn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(
            xn, (up.array() *
                 (xn->value.array() > Scalar(0)).template cast<Scalar>())
                    .matrix());
      },
      "relu");
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().array().square().matrix(), {x},
      [xn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(xn,
                              (Scalar(2) * up.array() * xn->value.array()).matrix());
      },
      "square");
}

// ---------------------------------------------------------------------------
// Reductions and reshaping
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& x) {
  auto xn = x.node();
  Mat<Scalar> v(1, 1);
  v(0, 0) = x.value().sum();
  return detail::make_op<Scalar>(
      std::move(v), {x},
      [xn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(
            xn, Mat<Scalar>::Constant(xn->value.rows(), xn->value.cols(),
                                      up(0, 0)));
      },
      "sum_all");
}

// [M x N] -> [M x 1]
template <typename Scalar>
Tensor<Scalar> row_sum(const Tensor<Scalar>& x) {
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().rowwise().sum(), {x},
      [xn](const Mat<Scalar>& up) {
        detail::accum<Scalar>(
            xn, up * Mat<Scalar>::Ones(1, xn->value.cols()));
      },
      "row_sum");
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input");
  Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ContractError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat<Scalar> v(rows, cols);
  Eigen::Index off = 0;
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    v.block(0, off, rows, p.cols()) = p.value();
    offsets.push_back(off);
    widths.push_back(p.cols());
    off += p.cols();
  }
  std::vector<typename Tensor<Scalar>::NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op<Scalar>(
      std::move(v), parts,
      [nodes, offsets, widths, rows](const Mat<Scalar>& up) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          detail::accum<Scalar>(nodes[i],
                                up.block(0, offsets[i], rows, widths[i]));
        }
      },
      "concat_cols");
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return concat_cols<Scalar>({a, b});
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& x, Eigen::Index start,
                          Eigen::Index n) {
  if (start < 0 || n < 1 || start + n > x.rows())
    throw ContractError("slice_rows: range out of bounds");
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().block(start, 0, n, x.cols()), {x},
      [xn, start, n](const Mat<Scalar>& up) {
        Mat<Scalar> d = Mat<Scalar>::Zero(xn->value.rows(), xn->value.cols());
        d.block(start, 0, n, xn->value.cols()) = up;
        detail::accum<Scalar>(xn, d);
      },
      "slice_rows");
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Eigen::Index start,
                          Eigen::Index n) {
  if (start < 0 || n < 1 || start + n > x.cols())
    throw ContractError("slice_cols: range out of bounds");
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().block(0, start, x.rows(), n), {x},
      [xn, start, n](const Mat<Scalar>& up) {
        Mat<Scalar> d = Mat<Scalar>::Zero(xn->value.rows(), xn->value.cols());
        d.block(0, start, xn->value.rows(), n) = up;
        detail::accum<Scalar>(xn, d);
      },
      "slice_cols");
}

// Row b of the output is row b of steps[step_of_row[b]]; used to pick each
// sequence's last valid state from a padded batch.
template <typename Scalar>
Tensor<Scalar> select_steps(const std::vector<Tensor<Scalar>>& steps,
                            const std::vector<int>& step_of_row) {
  if (steps.empty()) throw ContractError("select_steps: no steps");
  Eigen::Index rows = static_cast<Eigen::Index>(step_of_row.size());
  Eigen::Index cols = steps.front().cols();
  Mat<Scalar> v(rows, cols);
  for (Eigen::Index b = 0; b < rows; ++b) {
    int s = step_of_row[static_cast<std::size_t>(b)];
    if (s < 0 || s >= static_cast<int>(steps.size()))
      throw ContractError("select_steps: step index out of range");
    v.row(b) = steps[static_cast<std::size_t>(s)].value().row(b);
  }
  std::vector<typename Tensor<Scalar>::NodePtr> nodes;
  for (const auto& s : steps) nodes.push_back(s.node());
  return detail::make_op<Scalar>(
      std::move(v), steps,
      [nodes, step_of_row](const Mat<Scalar>& up) {
        for (Eigen::Index b = 0; b < up.rows(); ++b) {
          const auto& n = nodes[static_cast<std::size_t>(
              step_of_row[static_cast<std::size_t>(b)])];
          if (!n->requires_grad) continue;
          if (!n->grad)
            n->grad = Mat<Scalar>::Zero(n->value.rows(), n->value.cols());
          n->grad->row(b) += up.row(b);
        }
      },
      "select_steps");
}

// ---------------------------------------------------------------------------
// Lookup
// ---------------------------------------------------------------------------

// Gathers rows of `table` by id; gradient scatter-adds back.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table,
                           const std::vector<int>& ids) {
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  Mat<Scalar> v(n, table.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    int id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= table.rows())
      throw ContractError("gather_rows: id out of range");
    v.row(i) = table.value().row(id);
  }
  auto tn = table.node();
  return detail::make_op<Scalar>(
      std::move(v), {table},
      [tn, ids](const Mat<Scalar>& up) {
        if (!tn->requires_grad) return;
        if (!tn->grad)
          tn->grad = Mat<Scalar>::Zero(tn->value.rows(), tn->value.cols());
        for (Eigen::Index i = 0; i < up.rows(); ++i)
          tn->grad->row(ids[static_cast<std::size_t>(i)]) += up.row(i);
      },
      "gather_rows");
}

// ---------------------------------------------------------------------------
// Softmax family
// ---------------------------------------------------------------------------

// Row-wise softmax with max subtraction. Rejects non-finite input.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x) {
  if (!all_finite(x.value()))
    throw NumericError("softmax_rows: non-finite input");
  Mat<Scalar> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar m = x.value().row(i).maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> e =
        (x.value().row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  auto xn = x.node();
  Tensor<Scalar> out =
      detail::make_op<Scalar>(std::move(y), {x}, nullptr, "softmax_rows");
  if (out.requires_grad()) {
    auto on = out.node();
    typename Tensor<Scalar>::Node* self = on.get();
    on->backward = [xn, self](const Mat<Scalar>& up) {
      const Mat<Scalar>& y = self->value;
      Mat<Scalar> dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        Scalar s = up.row(i).cwiseProduct(y.row(i)).sum();
        dx.row(i) = (y.row(i).array() * (up.row(i).array() - s)).matrix();
      }
      detail::accum<Scalar>(xn, dx);
    };
  }
  return out;
}

// Softmax over positions whose mask entry is nonzero; masked entries get
// exactly zero probability. A row with no valid position is a contract error.
template <typename Scalar>
Tensor<Scalar> masked_softmax_rows(const Tensor<Scalar>& x,
                                   const Mat<Scalar>& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw ContractError("masked_softmax_rows: mask shape mismatch");
  if (!all_finite(x.value()))
    throw NumericError("masked_softmax_rows: non-finite input");
  Mat<Scalar> y = Mat<Scalar>::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar m = std::numeric_limits<Scalar>::lowest();
    bool any = false;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j) != Scalar(0)) {
        any = true;
        m = std::max(m, x.value()(i, j));
      }
    }
    if (!any)
      throw ContractError("masked_softmax_rows: all positions masked");
    Scalar z = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (mask(i, j) != Scalar(0)) {
        y(i, j) = std::exp(x.value()(i, j) - m);
        z += y(i, j);
      }
    }
    y.row(i) /= z;
  }
  auto xn = x.node();
  Tensor<Scalar> out = detail::make_op<Scalar>(std::move(y), {x}, nullptr,
                                               "masked_softmax_rows");
  if (out.requires_grad()) {
    auto on = out.node();
    typename Tensor<Scalar>::Node* self = on.get();
    on->backward = [xn, self](const Mat<Scalar>& up) {
      const Mat<Scalar>& y = self->value;
      Mat<Scalar> dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        Scalar s = up.row(i).cwiseProduct(y.row(i)).sum();
        dx.row(i) = (y.row(i).array() * (up.row(i).array() - s)).matrix();
      }
      detail::accum<Scalar>(xn, dx);
    };
  }
  return out;
}

// Per-row negative log-likelihood from logits with a stable log-sum-exp.
// Output is [M x 1]; rows with weight 0 contribute exactly 0 loss and
// gradient. Weights are typically a padding mask.
template <typename Scalar>
Tensor<Scalar> cross_entropy_rows(const Tensor<Scalar>& logits,
                                  const std::vector<int>& targets,
                                  const std::vector<Scalar>& row_weights) {
  const Eigen::Index m = logits.rows();
  if (static_cast<Eigen::Index>(targets.size()) != m ||
      static_cast<Eigen::Index>(row_weights.size()) != m)
    throw ContractError("cross_entropy_rows: row count mismatch");
  Mat<Scalar> v(m, 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    Scalar w = row_weights[static_cast<std::size_t>(i)];
    if (w == Scalar(0)) {
      v(i, 0) = Scalar(0);
      continue;
    }
    int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols())
      throw ContractError("cross_entropy_rows: target out of range");
    Scalar mx = logits.value().row(i).maxCoeff();
    Scalar lse =
        std::log((logits.value().row(i).array() - mx).exp().sum()) + mx;
    v(i, 0) = w * (lse - logits.value()(i, t));
  }
  auto ln = logits.node();
  return detail::make_op<Scalar>(
      std::move(v), {logits},
      [ln, targets, row_weights](const Mat<Scalar>& up) {
        Mat<Scalar> d = Mat<Scalar>::Zero(ln->value.rows(), ln->value.cols());
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
          Scalar w = row_weights[static_cast<std::size_t>(i)];
          if (w == Scalar(0)) continue;
          Scalar mx = ln->value.row(i).maxCoeff();
          Eigen::Array<Scalar, 1, Eigen::Dynamic> p =
              (ln->value.row(i).array() - mx).exp();
          p /= p.sum();
          d.row(i) = p.matrix() * (w * up(i, 0));
          d(i, targets[static_cast<std::size_t>(i)]) -= w * up(i, 0);
        }
        detail::accum<Scalar>(ln, d);
      },
      "cross_entropy_rows");
}

// Picks one entry per row: out(i, 0) = x(i, idx[i]).
template <typename Scalar>
Tensor<Scalar> pick_per_row(const Tensor<Scalar>& x, const std::vector<int>& idx) {
  if (static_cast<Eigen::Index>(idx.size()) != x.rows())
    throw ContractError("pick_per_row: index count mismatch");
  Mat<Scalar> v(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int j = idx[static_cast<std::size_t>(i)];
    if (j < 0 || j >= x.cols())
      throw ContractError("pick_per_row: index out of range");
    v(i, 0) = x.value()(i, j);
  }
  auto xn = x.node();
  return detail::make_op<Scalar>(
      std::move(v), {x},
      [xn, idx](const Mat<Scalar>& up) {
        Mat<Scalar> d = Mat<Scalar>::Zero(xn->value.rows(), xn->value.cols());
        for (Eigen::Index i = 0; i < d.rows(); ++i)
          d(i, idx[static_cast<std::size_t>(i)]) = up(i, 0);
        detail::accum<Scalar>(xn, d);
      },
      "pick_per_row");
}

// max(x, floor) with pass-through gradient where x > floor.
template <typename Scalar>
Tensor<Scalar> clamp_min(const Tensor<Scalar>& x, Scalar floor) {
  auto xn = x.node();
  return detail::make_op<Scalar>(
      x.value().cwiseMax(floor), {x},
      [xn, floor](const Mat<Scalar>& up) {
        detail::accum<Scalar>(
            xn, (up.array() *
                 (xn->value.array() > floor).template cast<Scalar>())
                    .matrix());
      },
      "clamp_min");
}

// ---------------------------------------------------------------------------
// Gradient routing
// ---------------------------------------------------------------------------

// Identity forward, zero backward.
template <typename Scalar>
Tensor<Scalar> stop_gradient(const Tensor<Scalar>& t) {
  return Tensor<Scalar>::from(t.value());
}

// Forward is e; the full upstream gradient is routed to h, none to e.
// Equivalent to h + stop_gradient(e - h).
template <typename Scalar>
Tensor<Scalar> straight_through(const Tensor<Scalar>& h,
                                const Tensor<Scalar>& e) {
  detail::check_same_shape(h, e, "straight_through");
  auto hn = h.node();
  return detail::make_op<Scalar>(
      Mat<Scalar>(e.value()), {h},
      [hn](const Mat<Scalar>& up) { detail::accum<Scalar>(hn, up); },
      "straight_through");
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return sub(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return mul(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar c) {
  return mul_const(a, c);
}
template <typename Scalar>
Tensor<Scalar> operator*(Scalar c, const Tensor<Scalar>& a) {
  return mul_const(a, c);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) {
  return neg(a);
}

// Spec-facing alias: probability vector over one row.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x) {
  return softmax_rows(x);
}

}  // namespace davam
