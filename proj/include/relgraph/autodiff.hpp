#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "relgraph/errors.hpp"
#include "relgraph/matrix.hpp"

// Minimal reverse-mode differentiation over dense matrices.
//
// A Tape records every operation in evaluation order; backward() walks it in
// reverse and accumulates gradients into every node that requires them.
// Vars are lightweight handles (tape pointer + index) and stay valid for the
// lifetime of the tape.
namespace relgraph::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // (tape, gradient of this node, value of this node)
  using Backward = std::function<void(Tape&, const Matrix&, const Matrix&)>;

  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }
  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  // Records an op result; it requires grad iff any parent does.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }
  Var record(Matrix value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every node.
  void backward(Var root) {
    if (root.tape() != this || root.rows() != 1 || root.cols() != 1) {
      throw ValidationError("backward() needs a 1x1 root on this tape");
    }
    for (auto& node : nodes_) {
      if (node.requires_grad) node.grad.setZero(node.value.rows(), node.value.cols());
    }
    if (!nodes_[root.id()].requires_grad) return;
    nodes_[root.id()].grad(0, 0) = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.backward) node.backward(*this, node.grad, node.value);
    }
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

template <class Expr>
void accumulate(Tape& t, std::size_t id, const Expr& expr) {
  if (t.requires_grad(id)) t.grad(id) += expr;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

inline Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ValidationError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                          std::to_string(b.rows()) + " differ");
  }
  Matrix out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b},
                          [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix&) {
                            if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
                            if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
                          });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b},
                          [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix&) {
                            detail::accumulate(t, ia, g);
                            detail::accumulate(t, ib, g);
                          });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b},
                          [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix&) {
                            detail::accumulate(t, ia, g);
                            detail::accumulate(t, ib, -g);
                          });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b},
                          [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix&) {
                            detail::accumulate(t, ia, g.cwiseProduct(t.value(ib)));
                            detail::accumulate(t, ib, g.cwiseProduct(t.value(ia)));
                          });
}

// Elementwise quotient.
inline Var div(Var a, Var b) {
  detail::require_same_shape(a, b, "div");
  Matrix out = a.value().cwiseQuotient(b.value());
  return a.tape()->record(
      std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix& y) {
        detail::accumulate(t, ia, g.cwiseQuotient(t.value(ib)));
        detail::accumulate(t, ib, -g.cwiseProduct(y).cwiseQuotient(t.value(ib)));
      });
}

// X + 1 * bias, bias a 1 x cols row.
inline Var add_row(Var x, Var bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw ValidationError("add_row: bias shape mismatch");
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return x.tape()->record(std::move(out), {x, bias},
                          [ix = x.id(), ib = bias.id()](Tape& t, const Matrix& g, const Matrix&) {
                            detail::accumulate(t, ix, g);
                            detail::accumulate(t, ib, g.colwise().sum());
                          });
}

inline Var scale(Var x, double s) {
  return x.tape()->record(s * x.value(), {x}, [ix = x.id(), s](Tape& t, const Matrix& g, const Matrix&) {
    detail::accumulate(t, ix, s * g);
  });
}

inline Var shift(Var x, double s) {
  Matrix out = x.value().array() + s;
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    detail::accumulate(t, ix, g);
  });
}

inline Var relu(Var x) {
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& in = t.value(ix);
    detail::accumulate(t, ix, (in.array() > 0.0).select(g, 0.0));
  });
}

inline Var sigmoid(Var x) {
  Matrix out = x.value().unaryExpr([](double v) { return detail::sigmoid(v); });
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix& y) {
    detail::accumulate(t, ix, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

inline Var abs(Var x) {
  Matrix out = x.value().cwiseAbs();
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& in = t.value(ix);
    detail::accumulate(t, ix, g.cwiseProduct(in.unaryExpr([](double v) {
      return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    })));
  });
}

// log(max(x, floor)); gradient is zero where the floor is active.
inline Var log_floor(Var x, double floor) {
  Matrix out = x.value().cwiseMax(floor).array().log();
  return x.tape()->record(std::move(out), {x}, [ix = x.id(), floor](Tape& t, const Matrix& g, const Matrix&) {
    const Matrix& in = t.value(ix);
    detail::accumulate(t, ix, (in.array() > floor).select(g.cwiseQuotient(in), 0.0));
  });
}

// Elementwise min / max; ties route the gradient to the first argument.
inline Var minimum(Var a, Var b) {
  detail::require_same_shape(a, b, "minimum");
  Matrix out = a.value().cwiseMin(b.value());
  return a.tape()->record(std::move(out), {a, b},
                          [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix&) {
                            const auto first = (t.value(ia).array() <= t.value(ib).array());
                            detail::accumulate(t, ia, first.select(g, 0.0));
                            detail::accumulate(t, ib, first.select(0.0, g));
                          });
}

inline Var maximum(Var a, Var b) {
  detail::require_same_shape(a, b, "maximum");
  Matrix out = a.value().cwiseMax(b.value());
  return a.tape()->record(std::move(out), {a, b},
                          [ia = a.id(), ib = b.id()](Tape& t, const Matrix& g, const Matrix&) {
                            const auto first = (t.value(ia).array() >= t.value(ib).array());
                            detail::accumulate(t, ia, first.select(g, 0.0));
                            detail::accumulate(t, ib, first.select(0.0, g));
                          });
}

// Row-wise softmax with max subtraction.
inline Var softmax_rows(Var x) {
  Matrix out = x.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix& y) {
    if (!t.requires_grad(ix)) return;
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.grad(ix) += y.cwiseProduct((g.colwise() - dots));
  });
}

// Per-row standardization followed by a learned scale and shift (1 x cols).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (gain.rows() != 1 || gain.cols() != cols || bias.rows() != 1 || bias.cols() != cols) {
    throw ValidationError("layer_norm: parameter shape mismatch");
  }
  Matrix normalized(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = x.value().row(r);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (row.array() - mean) * inv_std(r);
  }
  Matrix out = (normalized.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [ix = x.id(), ig = gain.id(), ib = bias.id(), normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Tape& t, const Matrix& g, const Matrix&) {
        detail::accumulate(t, ig, g.cwiseProduct(normalized).colwise().sum());
        detail::accumulate(t, ib, g.colwise().sum());
        if (!t.requires_grad(ix)) return;
        const Matrix dn = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
        const Eigen::VectorXd mean_dn = dn.rowwise().mean();
        const Eigen::VectorXd mean_dn_n = dn.cwiseProduct(normalized).rowwise().mean();
        Matrix dx = dn.colwise() - mean_dn;
        dx -= (normalized.array().colwise() * mean_dn_n.array()).matrix();
        dx = (dx.array().colwise() * inv_std.array()).matrix();
        t.grad(ix) += dx;
      });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ValidationError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;  // (id, start column)
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts,
                                      [spans = std::move(spans)](Tape& t, const Matrix& g, const Matrix&) {
                                        for (const auto& [id, start] : spans) {
                                          if (t.requires_grad(id)) {
                                            t.grad(id) += g.middleCols(start, t.value(id).cols());
                                          }
                                        }
                                      });
}

inline Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw ValidationError("slice_cols: out of range");
  Matrix out = x.value().middleCols(start, count);
  return x.tape()->record(std::move(out), {x},
                          [ix = x.id(), start, count](Tape& t, const Matrix& g, const Matrix&) {
                            if (t.requires_grad(ix)) t.grad(ix).middleCols(start, count) += g;
                          });
}

// out.row(k) = x.row(index[k]); backward scatter-adds.
inline Var gather_rows(Var x, std::vector<int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= x.rows()) throw ValidationError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = x.value().row(index[k]);
  }
  return x.tape()->record(std::move(out), {x},
                          [ix = x.id(), index = std::move(index)](Tape& t, const Matrix& g, const Matrix&) {
                            if (!t.requires_grad(ix)) return;
                            Matrix& gx = t.grad(ix);
                            for (std::size_t k = 0; k < index.size(); ++k) {
                              gx.row(index[k]) += g.row(static_cast<Eigen::Index>(k));
                            }
                          });
}

// Reinterprets the row-major buffer with a new shape.
inline Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.rows() * x.cols()) throw ValidationError("reshape: element count mismatch");
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    if (!t.requires_grad(ix)) return;
    Matrix& gx = t.grad(ix);
    gx += Eigen::Map<const Matrix>(g.data(), gx.rows(), gx.cols());
  });
}

// rows x 1 column of row sums.
inline Var row_sum(Var x) {
  Matrix out = x.value().rowwise().sum();
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    if (!t.requires_grad(ix)) return;
    t.grad(ix).colwise() += g.col(0);
  });
}

inline Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(ix)) t.grad(ix).array() += g(0, 0);
  });
}

// Overwrites the diagonal of a square matrix with `value`; no gradient flows there.
inline Var mask_diagonal(Var x, double value) {
  if (x.rows() != x.cols()) throw ValidationError("mask_diagonal: matrix must be square");
  Matrix out = x.value();
  out.diagonal().setConstant(value);
  return x.tape()->record(std::move(out), {x}, [ix = x.id()](Tape& t, const Matrix& g, const Matrix&) {
    if (!t.requires_grad(ix)) return;
    Matrix masked = g;
    masked.diagonal().setZero();
    t.grad(ix) += masked;
  });
}

// k x 1 column of x(r, c) for each (r, c) in cells.
inline Var pick(Var x, std::vector<std::pair<int, int>> cells) {
  Matrix out(static_cast<Eigen::Index>(cells.size()), 1);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto [r, c] = cells[k];
    if (r < 0 || r >= x.rows() || c < 0 || c >= x.cols()) throw ValidationError("pick: cell out of range");
    out(static_cast<Eigen::Index>(k), 0) = x.value()(r, c);
  }
  return x.tape()->record(std::move(out), {x},
                          [ix = x.id(), cells = std::move(cells)](Tape& t, const Matrix& g, const Matrix&) {
                            if (!t.requires_grad(ix)) return;
                            for (std::size_t k = 0; k < cells.size(); ++k) {
                              t.grad(ix)(cells[k].first, cells[k].second) += g(static_cast<Eigen::Index>(k), 0);
                            }
                          });
}

// Sum over cells of weight * BCE(target, sigmoid(logit)) in logit form:
// pos_weight * y * softplus(-x) + (1 - y) * softplus(x).
inline Var bce_with_logits(Var logits, const Matrix& targets, const Matrix& weights, double pos_weight = 1.0) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols() || weights.rows() != logits.rows() ||
      weights.cols() != logits.cols()) {
    throw ValidationError("bce_with_logits: shape mismatch");
  }
  const Matrix& x = logits.value();
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double w = weights(r, c);
      if (w == 0.0) continue;
      const double y = targets(r, c);
      total += w * (pos_weight * y * detail::softplus(-x(r, c)) + (1.0 - y) * detail::softplus(x(r, c)));
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return logits.tape()->record(
      std::move(out), {logits},
      [ix = logits.id(), targets, weights, pos_weight](Tape& t, const Matrix& g, const Matrix&) {
        if (!t.requires_grad(ix)) return;
        const Matrix& x = t.value(ix);
        Matrix& gx = t.grad(ix);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double w = weights(r, c);
            if (w == 0.0) continue;
            const double y = targets(r, c);
            const double s = detail::sigmoid(x(r, c));
            gx(r, c) += g(0, 0) * w * (pos_weight * y * (s - 1.0) + (1.0 - y) * s);
          }
        }
      });
}

}  // namespace relgraph::ad
