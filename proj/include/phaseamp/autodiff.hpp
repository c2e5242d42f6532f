#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phaseamp/core.hpp"

// Matrix-valued reverse-mode differentiation.
//
// Every node holds a dense matrix (columns are samples or time steps). Nodes are
// appended in evaluation order, so reverse creation order is a valid
// topological order for the backward sweep.

namespace phaseamp::ad {

class Tape;

/// Handle to a node on a specific tape.
class Var {
 public:
  Var() = default;
  std::size_t index() const { return index_; }
  const Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(const Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  const Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  std::size_t size() const { return nodes_.size(); }

  /// A value that never receives a gradient.
  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  /// A leaf whose gradient is collected by backward().
  Var variable(Matrix value) {
    Var v = push(std::move(value), true, {});
    nodes_[v.index_].is_leaf = true;
    return v;
  }

  const Matrix& value(Var v) const { return node(v).value; }

  double scalar(Var v) const {
    const Matrix& m = value(v);
    require_shape(m.rows() == 1 && m.cols() == 1, "Tape::scalar: node is not 1x1");
    return m(0, 0);
  }

  /// Gradient of the last backward() target with respect to a differentiable node.
  const Matrix& grad(Var v) const {
    const Node& n = node(v);
    if (!n.requires_grad) {
      throw InvalidArgument("Tape::grad: node " + std::to_string(v.index_) + " does not carry a gradient");
    }
    if (!backward_done_) throw InvalidArgument("Tape::grad: backward() has not been run");
    if (n.grad.size() == 0) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  /// Reverse sweep from a 1x1 node. Previous gradients are discarded.
  void backward(Var loss) {
    const Node& target = node(loss);
    require_shape(target.value.rows() == 1 && target.value.cols() == 1, "Tape::backward: loss must be 1x1");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    backward_done_ = true;
    if (!target.requires_grad) return;
    nodes_[loss.index_].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.index_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  // ---- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(av.cols() == bv.rows(), "matmul: inner dimensions differ");
    Matrix out = av * bv;
    const std::size_t ia = a.index_, ib = b.index_;
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
      if (t.nodes_[ia].requires_grad) t.accumulate(ia, g * t.nodes_[ib].value.transpose());
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, t.nodes_[ia].value.transpose() * g);
    });
  }

  /// a + bias * 1^T, bias a column.
  Var add_bias(Var a, Var bias) {
    const Matrix& av = value(a);
    const Matrix& bv = value(bias);
    require_shape(bv.cols() == 1 && bv.rows() == av.rows(), "add_bias: bias must be a matching column");
    Matrix out = av.colwise() + bv.col(0);
    const std::size_t ia = a.index_, ib = bias.index_;
    return push(std::move(out), needs(a) || needs(bias), [ia, ib](Tape& t, const Matrix& g) {
      if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, g.rowwise().sum());
    });
  }

  Var relu(Var a) {
    Matrix out = value(a).cwiseMax(0.0);
    const std::size_t ia = a.index_;
    return push(std::move(out), needs(a), [ia](Tape& t, const Matrix& g) {
      const Matrix& x = t.nodes_[ia].value;
      t.accumulate(ia, (x.array() > 0.0).select(g.array(), 0.0));
    });
  }

  Var add(Var a, Var b) {
    require_shape(same_shape(a, b), "add: shape mismatch");
    Matrix out = value(a) + value(b);
    const std::size_t ia = a.index_, ib = b.index_;
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
      if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, g);
    });
  }

  Var sub(Var a, Var b) {
    require_shape(same_shape(a, b), "sub: shape mismatch");
    Matrix out = value(a) - value(b);
    const std::size_t ia = a.index_, ib = b.index_;
    return push(std::move(out), needs(a) || needs(b), [ia, ib](Tape& t, const Matrix& g) {
      if (t.nodes_[ia].requires_grad) t.accumulate(ia, g);
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, -g);
    });
  }

  Var scale(Var a, double s) {
    Matrix out = s * value(a);
    const std::size_t ia = a.index_;
    return push(std::move(out), needs(a), [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, s * g); });
  }

  /// a + c for a constant matrix c (noise draws, 2*pi unwrap offsets).
  Var add_constant(Var a, const Matrix& c) {
    require_shape(c.rows() == value(a).rows() && c.cols() == value(a).cols(), "add_constant: shape mismatch");
    Matrix out = value(a) + c;
    const std::size_t ia = a.index_;
    return push(std::move(out), needs(a), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
  }

  Var add_scalars(std::initializer_list<std::pair<Var, double>> terms) {
    double total = 0.0;
    bool grad = false;
    std::vector<std::pair<std::size_t, double>> parts;
    for (const auto& [v, w] : terms) {
      total += w * scalar(v);
      grad = grad || needs(v);
      parts.emplace_back(v.index_, w);
    }
    return push(Matrix::Constant(1, 1, total), grad, [parts](Tape& t, const Matrix& g) {
      for (const auto& [i, w] : parts) {
        if (t.nodes_[i].requires_grad) t.accumulate(i, Matrix::Constant(1, 1, w * g(0, 0)));
      }
    });
  }

  Var cols(Var a, Index start, Index count) {
    const Matrix& av = value(a);
    require_shape(start >= 0 && count >= 0 && start + count <= av.cols(), "cols: range out of bounds");
    Matrix out = av.middleCols(start, count);
    const std::size_t ia = a.index_;
    return push(std::move(out), needs(a), [ia, start, count](Tape& t, const Matrix& g) {
      Matrix full = Matrix::Zero(t.nodes_[ia].value.rows(), t.nodes_[ia].value.cols());
      full.middleCols(start, count) = g;
      t.accumulate(ia, full);
    });
  }

  Var hcat(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(av.rows() == bv.rows(), "hcat: row counts differ");
    Matrix out(av.rows(), av.cols() + bv.cols());
    out << av, bv;
    const std::size_t ia = a.index_, ib = b.index_;
    const Index split = av.cols();
    return push(std::move(out), needs(a) || needs(b), [ia, ib, split](Tape& t, const Matrix& g) {
      if (t.nodes_[ia].requires_grad) t.accumulate(ia, g.leftCols(split));
      if (t.nodes_[ib].requires_grad) t.accumulate(ib, g.rightCols(g.cols() - split));
    });
  }

  /// (a[:, k+1] - a[:, k]) / dt for k = 0 .. cols-2.
  Var col_diff(Var a, double dt) {
    const Matrix& av = value(a);
    require_shape(av.cols() >= 2, "col_diff: need at least two columns");
    const Index n = av.cols() - 1;
    Matrix out = (av.rightCols(n) - av.leftCols(n)) / dt;
    const std::size_t ia = a.index_;
    return push(std::move(out), needs(a), [ia, n, dt](Tape& t, const Matrix& g) {
      Matrix full = Matrix::Zero(g.rows(), n + 1);
      full.rightCols(n) += g / dt;
      full.leftCols(n) -= g / dt;
      t.accumulate(ia, full);
    });
  }

  /// out(i, j) = scale(i) * a(i, j) + offset(i).
  Var affine_rows(Var a, const Vector& scale, const Vector& offset) {
    const Matrix& av = value(a);
    require_shape(scale.size() == av.rows() && offset.size() == av.rows(), "affine_rows: vector size mismatch");
    Matrix out = (scale.asDiagonal() * av).colwise() + offset;
    const std::size_t ia = a.index_;
    return push(std::move(out), needs(a), [ia, scale](Tape& t, const Matrix& g) {
      t.accumulate(ia, scale.asDiagonal() * g);
    });
  }

  /// Spreads one column over many: out(i, j) = scale(i, j) * a(i, 0) + offset(i, j).
  Var broadcast_affine(Var column, const Matrix& scale, const Matrix& offset) {
    const Matrix& cv = value(column);
    require_shape(cv.cols() == 1 && scale.rows() == cv.rows() && offset.rows() == cv.rows() &&
                      scale.cols() == offset.cols(),
                  "broadcast_affine: shape mismatch");
    Matrix out = scale.array().colwise() * cv.col(0).array();
    out += offset;
    const std::size_t ic = column.index_;
    return push(std::move(out), needs(column), [ic, scale](Tape& t, const Matrix& g) {
      t.accumulate(ic, (g.array() * scale.array()).rowwise().sum().matrix());
    });
  }

  /// sum_ij w(i, j) |a(i, j)|, with subgradient sign(0) = 0.
  Var weighted_abs_sum(Var a, const Matrix& weights) {
    const Matrix& av = value(a);
    require_shape(weights.rows() == av.rows() && weights.cols() == av.cols(), "weighted_abs_sum: shape mismatch");
    const double total = (weights.array() * av.array().abs()).sum();
    const std::size_t ia = a.index_;
    return push(Matrix::Constant(1, 1, total), needs(a), [ia, weights](Tape& t, const Matrix& g) {
      const Matrix& x = t.nodes_[ia].value;
      const Eigen::ArrayXXd sign = (x.array() > 0.0).cast<double>() - (x.array() < 0.0).cast<double>();
      t.accumulate(ia, (g(0, 0) * weights.array() * sign).matrix());
    });
  }

  /// Encoder head. Rows of `raw` are [y0_1, y1_1, ..., y0_P, y1_P, a_1, ..., a_A];
  /// output rows are [atan2(y1_i, y0_i) for each phase, a_j passed through].
  /// The atan2 partials are taken as zero at the origin.
  Var phase_head(Var raw, Index num_phases) {
    const Matrix& y = value(raw);
    require_shape(y.rows() >= 2 * num_phases, "phase_head: too few raw rows");
    const Index amps = y.rows() - 2 * num_phases;
    Matrix out(num_phases + amps, y.cols());
    for (Index i = 0; i < num_phases; ++i) {
      for (Index c = 0; c < y.cols(); ++c) out(i, c) = head_phase(y(2 * i, c), y(2 * i + 1, c));
    }
    out.bottomRows(amps) = y.bottomRows(amps);
    const std::size_t ir = raw.index_;
    return push(std::move(out), needs(raw), [ir, num_phases, amps](Tape& t, const Matrix& g) {
      const Matrix& yv = t.nodes_[ir].value;
      Matrix dy = Matrix::Zero(yv.rows(), yv.cols());
      for (Index i = 0; i < num_phases; ++i) {
        for (Index c = 0; c < yv.cols(); ++c) {
          const double y0 = yv(2 * i, c), y1 = yv(2 * i + 1, c);
          const double r2 = y0 * y0 + y1 * y1;
          if (r2 == 0.0) continue;
          dy(2 * i, c) = -y1 / r2 * g(i, c);
          dy(2 * i + 1, c) = y0 / r2 * g(i, c);
        }
      }
      dy.bottomRows(amps) = g.bottomRows(amps);
      t.accumulate(ir, dy);
    });
  }

  /// Decoder lift. Rows of `z` are [phi_1..phi_P, r_1..r_A]; output rows are
  /// [sin phi_1, cos phi_1, ..., sin phi_P, cos phi_P, r_1, ..., r_A].
  Var phase_lift(Var z, Index num_phases) {
    const Matrix& zv = value(z);
    require_shape(zv.rows() >= num_phases, "phase_lift: too few latent rows");
    const Index amps = zv.rows() - num_phases;
    Matrix out(2 * num_phases + amps, zv.cols());
    for (Index i = 0; i < num_phases; ++i) {
      out.row(2 * i) = zv.row(i).array().sin();
      out.row(2 * i + 1) = zv.row(i).array().cos();
    }
    out.bottomRows(amps) = zv.bottomRows(amps);
    const std::size_t iz = z.index_;
    return push(std::move(out), needs(z), [iz, num_phases, amps](Tape& t, const Matrix& g) {
      const Matrix& zz = t.nodes_[iz].value;
      Matrix dz(zz.rows(), zz.cols());
      for (Index i = 0; i < num_phases; ++i) {
        dz.row(i) = g.row(2 * i).array() * zz.row(i).array().cos() - g.row(2 * i + 1).array() * zz.row(i).array().sin();
      }
      dz.bottomRows(amps) = g.bottomRows(amps);
      t.accumulate(iz, dz);
    });
  }

  Var sum(Var a) {
    const double total = value(a).sum();
    const std::size_t ia = a.index_;
    return push(Matrix::Constant(1, 1, total), needs(a), [ia](Tape& t, const Matrix& g) {
      const Matrix& x = t.nodes_[ia].value;
      t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
    });
  }

 private:
  using Backward = std::function<void(Tape&, const Matrix&)>;

  struct Node {
    Matrix value;
    mutable Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  const Node& node(Var v) const {
    if (v.tape_ != this || v.index_ >= nodes_.size()) {
      throw InvalidArgument("Tape: variable does not belong to this tape");
    }
    return nodes_[v.index_];
  }

  bool needs(Var v) const { return node(v).requires_grad; }

  bool same_shape(Var a, Var b) const {
    return value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols();
  }

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad ? std::move(backward) : Backward{}, requires_grad, false});
    backward_done_ = false;
    return Var(this, nodes_.size() - 1);
  }

  template <class Derived>
  void accumulate(std::size_t i, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  template <class Derived>
  void accumulate(std::size_t i, const Eigen::ArrayBase<Derived>& g) {
    accumulate(i, g.matrix());
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace phaseamp::ad
