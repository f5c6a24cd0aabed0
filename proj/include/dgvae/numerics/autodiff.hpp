#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dgvae/error.hpp"
#include "dgvae/numerics/functions.hpp"
#include "dgvae/numerics/tensor.hpp"

// Tensor-level reverse-mode automatic differentiation over rank-2 tensors.
//
// A Tape owns every intermediate value produced while building an
// expression. Operations append a node holding the forward value and, when at
// least one input requires a gradient, a closure that pushes the output
// gradient back into the inputs. Tape::backward seeds the scalar loss with 1
// and replays closures in reverse creation order, which is a valid
// topological order because inputs always precede outputs.
//
// Nodes whose inputs are all constants become constants themselves, so an
// evaluation-only forward pass stores no closures and allocates no gradients.

namespace dgvae {

class Tape;

class Var {
 public:
  Var() = default;

  const DenseTensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const DenseTensor& out_value, const DenseTensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf; its gradient is available after backward().
  Var leaf(DenseTensor value) { return push(std::move(value), true, {}, "leaf"); }

  Var constant(DenseTensor value) { return push(std::move(value), false, {}, "constant"); }

  // Appends an operation result. `backward` is dropped when no input requires a gradient.
  Var record(DenseTensor value, std::initializer_list<Var> inputs, Backward backward, std::string_view op) {
    bool needs = false;
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw Error("autodiff: operand belongs to a different tape");
      needs = needs || nodes_[v.id_].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{}, op);
  }

  const DenseTensor& value(const Var& v) const { return nodes_[v.id_].value; }
  const DenseTensor& value_at(std::size_t id) const { return nodes_[id].value; }

  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

  // Gradient of the last backward() root with respect to v. Zero when v does not influence it.
  DenseTensor grad(const Var& v) const {
    const Node& n = nodes_[v.id_];
    if (n.grad.empty()) return DenseTensor(n.value.shape(), 0.0);
    return n.grad;
  }

  // Gradient accumulator for node `id`, zero-initialised on first use.
  DenseTensor& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = DenseTensor(n.value.shape(), 0.0);
    return n.grad;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void backward(const Var& root) {
    if (root.tape_ != this) throw Error("autodiff: backward root belongs to a different tape");
    if (nodes_[root.id_].value.size() != 1) throw ShapeError("autodiff: backward root must be a scalar");
    for (Node& n : nodes_) n.grad = DenseTensor();
    if (!nodes_[root.id_].requires_grad) return;
    grad_slot(root.id_)[0] = 1.0;
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, n.value, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    DenseTensor value;
    DenseTensor grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(DenseTensor value, bool requires_grad, Backward backward, std::string_view op) {
    if (!value.all_finite()) {
      throw NumericError("autodiff: non-finite value produced by '" + std::string(op) + "' " +
                         value.shape_string());
    }
    nodes_.push_back(Node{std::move(value), DenseTensor(), std::move(backward), requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // deque: pushes keep earlier value references valid
};

inline const DenseTensor& Var::value() const { return tape_->value(*this); }


namespace ad {

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": " + a.value().shape_string() + " vs " + b.value().shape_string());
  }
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx given input x and output y.
template <class F, class D>
Var unary(const Var& a, F f, D deriv, std::string_view name) {
  DenseTensor y = a.value();
  for (double& v : y.values()) v = f(v);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(y), {a},
      [ia, deriv](Tape& t, const DenseTensor& out, const DenseTensor& g) {
        const DenseTensor& x = t.value_at(ia);
        DenseTensor& gx = t.grad_slot(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(x[i], out[i]);
      },
      name);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      dense_matmul(a.value(), b.value()), {a, b},
      [ia, ib](Tape& t, const DenseTensor&, const DenseTensor& g) {
        const DenseTensor& av = t.value_at(ia);
        const DenseTensor& bv = t.value_at(ib);
        const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);  // g * b^T
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < m; ++j) s += g(i, j) * bv(p, j);
              ga(i, p) += s;
            }
        }
        if (t.needs_grad(ib)) {
          DenseTensor& gb = t.grad_slot(ib);  // a^T * g
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av_ip = av(i, p);
              if (av_ip == 0.0) continue;
              double* gbr = gb.row(p).data();
              const double* gr = g.row(i).data();
              for (std::size_t j = 0; j < m; ++j) gbr[j] += av_ip * gr[j];
            }
        }
      },
      "matmul");
}

// a * b^T for a: n x d, b: m x d.
inline Var matmul_bt(const Var& a, const Var& b) {
  const DenseTensor& av = a.value();
  const DenseTensor& bv = b.value();
  if (av.cols() != bv.cols()) throw ShapeError("matmul_bt: " + av.shape_string() + " vs " + bv.shape_string());
  const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
  DenseTensor out = DenseTensor::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) s += av(i, p) * bv(j, p);
      out(i, j) = s;
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), {a, b},
      [ia, ib, n, m, d](Tape& t, const DenseTensor&, const DenseTensor& g) {
        const DenseTensor& av = t.value_at(ia);
        const DenseTensor& bv = t.value_at(ib);
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);  // g * b
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double gij = g(i, j);
              for (std::size_t p = 0; p < d; ++p) ga(i, p) += gij * bv(j, p);
            }
        }
        if (t.needs_grad(ib)) {
          DenseTensor& gb = t.grad_slot(ib);  // g^T * a
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const double gij = g(i, j);
              for (std::size_t p = 0; p < d; ++p) gb(j, p) += gij * av(i, p);
            }
        }
      },
      "matmul_bt");
}

// x * s with a constant sparse right operand.
inline Var matmul(const Var& x, const SparseMatrix& s) {
  const std::size_t ix = x.id();
  return x.tape().record(
      dense_sparse_matmul(x.value(), s), {x},
      [ix, &s](Tape& t, const DenseTensor&, const DenseTensor& g) {
        DenseTensor& gx = t.grad_slot(ix);  // g * s^T
        for (std::size_t b = 0; b < g.rows(); ++b)
          for (std::size_t r = 0; r < s.rows(); ++r) {
            auto cols = s.row_cols(r);
            auto vals = s.row_values(r);
            double acc = 0.0;
            for (std::size_t p = 0; p < cols.size(); ++p) acc += g(b, cols[p]) * vals[p];
            gx(b, r) += acc;
          }
      },
      "dense_sparse_matmul");
}

// s * x with a constant sparse left operand.
inline Var matmul(const SparseMatrix& s, const Var& x) {
  const std::size_t ix = x.id();
  return x.tape().record(
      sparse_dense_matmul(s, x.value()), {x},
      [ix, &s](Tape& t, const DenseTensor&, const DenseTensor& g) {
        DenseTensor& gx = t.grad_slot(ix);  // s^T * g
        const std::size_t d = g.cols();
        for (std::size_t r = 0; r < s.rows(); ++r) {
          auto cols = s.row_cols(r);
          auto vals = s.row_values(r);
          for (std::size_t p = 0; p < cols.size(); ++p)
            for (std::size_t j = 0; j < d; ++j) gx(cols[p], j) += vals[p] * g(r, j);
        }
      },
      "sparse_dense_matmul");
}

inline Var transpose(const Var& a) {
  const DenseTensor& av = a.value();
  DenseTensor out = DenseTensor::zeros(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia](Tape& t, const DenseTensor&, const DenseTensor& g) {
        DenseTensor& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i)
          for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(j, i);
      },
      "transpose");
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (identical shapes)

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  DenseTensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), {a, b},
      [ia, ib](Tape& t, const DenseTensor&, const DenseTensor& g) {
        for (std::size_t id : {ia, ib}) {
          if (!t.needs_grad(id)) continue;
          DenseTensor& gx = t.grad_slot(id);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
      },
      "add");
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  DenseTensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), {a, b},
      [ia, ib](Tape& t, const DenseTensor&, const DenseTensor& g) {
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ib)) {
          DenseTensor& gb = t.grad_slot(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      },
      "sub");
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  DenseTensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), {a, b},
      [ia, ib](Tape& t, const DenseTensor&, const DenseTensor& g) {
        if (t.needs_grad(ia)) {
          const DenseTensor& bv = t.value_at(ib);
          DenseTensor& ga = t.grad_slot(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(ib)) {
          const DenseTensor& av = t.value_at(ia);
          DenseTensor& gb = t.grad_slot(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      },
      "mul");
}

// ---------------------------------------------------------------------------
// Broadcasting against a single row (1 x c) or a single column (r x 1)

inline Var add_row(const Var& a, const Var& row) {
  const DenseTensor& av = a.value();
  const DenseTensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw ShapeError("add_row: " + av.shape_string() + " + " + rv.shape_string());
  DenseTensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += rv(0, j);
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(
      std::move(out), {a, row},
      [ia, ir](Tape& t, const DenseTensor&, const DenseTensor& g) {
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ir)) {
          DenseTensor& gr = t.grad_slot(ir);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
        }
      },
      "add_row");
}

inline Var mul_row(const Var& a, const Var& row) {
  const DenseTensor& av = a.value();
  const DenseTensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw ShapeError("mul_row: " + av.shape_string() + " * " + rv.shape_string());
  DenseTensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) *= rv(0, j);
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(
      std::move(out), {a, row},
      [ia, ir](Tape& t, const DenseTensor&, const DenseTensor& g) {
        const DenseTensor& av = t.value_at(ia);
        const DenseTensor& rv = t.value_at(ir);
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * rv(0, j);
        }
        if (t.needs_grad(ir)) {
          DenseTensor& gr = t.grad_slot(ir);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j) * av(i, j);
        }
      },
      "mul_row");
}

inline Var mul_col(const Var& a, const Var& col) {
  const DenseTensor& av = a.value();
  const DenseTensor& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) throw ShapeError("mul_col: " + av.shape_string() + " * " + cv.shape_string());
  DenseTensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) *= cv(i, 0);
  const std::size_t ia = a.id(), ic = col.id();
  return a.tape().record(
      std::move(out), {a, col},
      [ia, ic](Tape& t, const DenseTensor&, const DenseTensor& g) {
        const DenseTensor& av = t.value_at(ia);
        const DenseTensor& cv = t.value_at(ic);
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);
          for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * cv(i, 0);
        }
        if (t.needs_grad(ic)) {
          DenseTensor& gc = t.grad_slot(ic);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * av(i, j);
            gc(i, 0) += s;
          }
        }
      },
      "mul_col");
}

inline Var sub_col(const Var& a, const Var& col) {
  const DenseTensor& av = a.value();
  const DenseTensor& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) throw ShapeError("sub_col: " + av.shape_string() + " - " + cv.shape_string());
  DenseTensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) -= cv(i, 0);
  const std::size_t ia = a.id(), ic = col.id();
  return a.tape().record(
      std::move(out), {a, col},
      [ia, ic](Tape& t, const DenseTensor&, const DenseTensor& g) {
        if (t.needs_grad(ia)) {
          DenseTensor& ga = t.grad_slot(ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ic)) {
          DenseTensor& gc = t.grad_slot(ic);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
            gc(i, 0) -= s;
          }
        }
      },
      "sub_col");
}

// ---------------------------------------------------------------------------
// Scalar affine maps and elementwise nonlinearities

inline Var scale(const Var& a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; }, "scale");
}

inline Var add_scalar(const Var& a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; }, "add_scalar");
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var exp(const Var& a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var log(const Var& a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Var square(const Var& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; }, "square");
}

inline Var tanh(const Var& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, [](double x) { return dgvae::sigmoid(x); }, [](double, double y) { return y * (1.0 - y); },
                       "sigmoid");
}

inline Var softplus(const Var& a) {
  return detail::unary(a, [](double x) { return dgvae::softplus(x); },
                       [](double x, double) { return dgvae::sigmoid(x); }, "softplus");
}

// Subgradient 0 at the kink.
inline Var abs(const Var& a) {
  return detail::unary(a, [](double x) { return std::fabs(x); },
                       [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

// max(a, lo); no gradient flows through clamped entries.
inline Var clamp_min(const Var& a, double lo) {
  return detail::unary(a, [lo](double x) { return x > lo ? x : lo; },
                       [lo](double x, double) { return x > lo ? 1.0 : 0.0; }, "clamp_min");
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

// r x c -> r x 1
inline Var sum_rows(const Var& a) {
  const DenseTensor& av = a.value();
  DenseTensor out = DenseTensor::zeros(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (double v : av.row(i)) s += v;
    out(i, 0) = s;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia](Tape& t, const DenseTensor&, const DenseTensor& g) {
        DenseTensor& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i)
          for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
      },
      "sum_rows");
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(
      DenseTensor::scalar(s), {a},
      [ia](Tape& t, const DenseTensor&, const DenseTensor& g) {
        DenseTensor& ga = t.grad_slot(ia);
        for (double& v : ga.values()) v += g[0];
      },
      "sum");
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  const DenseTensor& av = a.value();
  if (count == 0 || start + count > av.cols()) throw ShapeError("slice_cols: range outside " + av.shape_string());
  DenseTensor out = DenseTensor::zeros(av.rows(), count);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, start + j);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, start, count](Tape& t, const DenseTensor&, const DenseTensor& g) {
        DenseTensor& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < count; ++j) ga(i, start + j) += g(i, j);
      },
      "slice_cols");
}

// Column j as an r x 1 tensor.
inline Var column(const Var& a, std::size_t j) { return slice_cols(a, j, 1); }

// ---------------------------------------------------------------------------
// Row-wise normalisations

// Each row scaled to unit L2 norm; rows with norm below kNormEpsilon pass through unchanged.
inline Var l2_normalize_rows(const Var& a) {
  const DenseTensor& av = a.value();
  DenseTensor out = av;
  std::vector<double> norms(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    norms[i] = l2_norm(av.row(i));
    if (norms[i] >= kNormEpsilon)
      for (double& v : out.row(i)) v /= norms[i];
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, norms = std::move(norms)](Tape& t, const DenseTensor& y, const DenseTensor& g) {
        DenseTensor& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          if (norms[i] < kNormEpsilon) {
            for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j);
            continue;
          }
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
        }
      },
      "l2_normalize_rows");
}

// Row-wise softmax of a / temperature.
inline Var softmax_rows(const Var& a, double temperature) {
  DenseTensor out = softmax(a.value(), 1, temperature);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [ia, temperature](Tape& t, const DenseTensor& y, const DenseTensor& g) {
        DenseTensor& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot) / temperature;
        }
      },
      "softmax_rows");
}

}  // namespace ad

inline Var operator+(const Var& a, const Var& b) { return ad::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ad::sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return ad::mul(a, b); }
inline Var operator-(const Var& a) { return ad::neg(a); }
inline Var operator*(double c, const Var& a) { return ad::scale(a, c); }
inline Var operator*(const Var& a, double c) { return ad::scale(a, c); }

}  // namespace dgvae
