#pragma once

// Reverse-mode differentiation over rank-2 tensors.
//
// A Tape records every primitive in execution order. Each recorded node keeps
// its forward value and a closure that pushes the node's gradient onto its
// inputs. backward() seeds d(loss)/d(loss) = 1 and replays the closures in
// exact reverse order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hgnn/error.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = std::numeric_limits<std::size_t>::max();

  bool valid() const { return tape != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using Index = std::vector<std::size_t>;

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) { return push("leaf", std::move(value), true, nullptr); }
  Var constant(Tensor value) { return push("constant", std::move(value), false, nullptr); }

  Var push(const char* op, Tensor value, bool requires_grad, Backward back) {
    if (!value.all_finite()) {
      throw Error(ErrorCode::NonFinite, std::string("non-finite value produced by ") + op);
    }
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(back)});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the most recent backward() loss with respect to `v`; zeros if
  /// `v` did not influence the loss.
  Tensor grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (value(loss).size() != 1) {
      throw Error(ErrorCode::Shape, "backward requires a scalar loss, got " + value(loss).shape_string());
    }
    for (auto& n : nodes_) n.grad = Tensor{};
    grad_ref(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.back || n.grad.empty()) continue;
      n.back(*this, i);
    }
  }

  // Accessors used by primitive closures.
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_at(std::size_t id) const { return nodes_[id].grad; }
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad;
    Backward back;
  };

  const Node& node(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw Error(ErrorCode::Precondition, "variable from another tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || !a.tape) throw Error(ErrorCode::Precondition, "operands recorded on different tapes");
  return *a.tape;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::Shape, std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

template <class Fwd, class Dfdx>
Var unary(Var a, const char* op, Fwd fwd, Dfdx dfdx) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::size_t ia = a.id;
  return t.push(op, std::move(out), t.needs(ia), [ia, dfdx](Tape& tp, std::size_t self) {
    const Tensor& x = tp.value_at(ia);
    const Tensor& y = tp.value_at(self);
    const Tensor& g = tp.grad_at(self);
    Tensor& ga = tp.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return t.push("matmul", std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& av = tp.value_at(ia);
    const Tensor& bv = tp.value_at(ib);
    const Tensor& g = tp.grad_at(self);
    const std::size_t p = av.rows(), q = av.cols(), r = bv.cols();
    if (tp.needs(ia)) {
      Tensor& ga = tp.grad_ref(ia);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const double gij = g[i * r + j];
          if (gij == 0.0) continue;
          for (std::size_t k = 0; k < q; ++k) ga[i * q + k] += gij * bv[k * r + j];
        }
    }
    if (tp.needs(ib)) {
      Tensor& gb = tp.grad_ref(ib);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
          const double aik = av[i * q + k];
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < r; ++j) gb[k * r + j] += aik * g[i * r + j];
        }
    }
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.push("add", std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.needs(id)) continue;
      Tensor& gx = tp.grad_ref(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.push("sub", std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.needs(ia)) {
      Tensor& ga = tp.grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.needs(ib)) {
      Tensor& gb = tp.grad_ref(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.push("mul", std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& av = tp.value_at(ia);
    const Tensor& bv = tp.value_at(ib);
    if (tp.needs(ia)) {
      Tensor& ga = tp.grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.needs(ib)) {
      Tensor& gb = tp.grad_ref(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var div(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.push("div", std::move(out), t.needs(ia) || t.needs(ib), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    const Tensor& bv = tp.value_at(ib);
    const Tensor& y = tp.value_at(self);
    if (tp.needs(ia)) {
      Tensor& ga = tp.grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
    }
    if (tp.needs(ib)) {
      Tensor& gb = tp.grad_ref(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * y[i] / bv[i];
    }
  });
}

/// x[n x c] + bias[1 x c] broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  Tape& t = detail::same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw Error(ErrorCode::Shape, "add_bias: bias " + bv.shape_string() + " vs input " + xv.shape_string());
  }
  Tensor out = xv;
  const std::size_t c = xv.cols();
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  const std::size_t ix = x.id, ib = bias.id;
  return t.push("add_bias", std::move(out), t.needs(ix) || t.needs(ib), [ix, ib, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    if (tp.needs(ix)) {
      Tensor& gx = tp.grad_ref(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.needs(ib)) {
      Tensor& gb = tp.grad_ref(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var a, double s) {
  return detail::unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var exp(Var a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var tanh(Var a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  return detail::unary(a, "sigmoid", [](double x) { return sigmoid(x); },
                       [](double, double y) { return y * (1.0 - y); });
}

/// |x| with derivative sign(x) and 0 at the kink.
inline Var abs(Var a) {
  return detail::unary(a, "abs", [](double x) { return std::abs(x); },
                       [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return t.push("sum", Tensor({1, 1}, std::vector<double>{s}), t.needs(ia), [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad_at(self)[0];
    Tensor& ga = tp.grad_ref(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

/// Rows of x picked by idx (repeats allowed).
inline Var gather_rows(Var x, const Index& idx) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const std::size_t c = xv.cols();
  Tensor out = Tensor::zeros(idx.size(), c);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= xv.rows()) throw Error(ErrorCode::Shape, "gather_rows: index out of range");
    std::copy_n(xv.storage().data() + idx[k] * c, c, out.storage().data() + k * c);
  }
  const std::size_t ix = x.id;
  return t.push("gather_rows", std::move(out), t.needs(ix), [ix, idx, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    Tensor& gx = tp.grad_ref(ix);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) gx[idx[k] * c + j] += g[k * c + j];
  });
}

/// Segment sum: out[seg[k]] += x[k]; out has `segments` rows.
inline Var scatter_rows(Var x, const Index& seg, std::size_t segments) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (seg.size() != xv.rows()) throw Error(ErrorCode::Shape, "scatter_rows: segment id count mismatch");
  const std::size_t c = xv.cols();
  Tensor out = Tensor::zeros(segments, c);
  for (std::size_t k = 0; k < seg.size(); ++k) {
    if (seg[k] >= segments) throw Error(ErrorCode::Shape, "scatter_rows: segment out of range");
    for (std::size_t j = 0; j < c; ++j) out[seg[k] * c + j] += xv[k * c + j];
  }
  const std::size_t ix = x.id;
  return t.push("scatter_rows", std::move(out), t.needs(ix), [ix, seg, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    Tensor& gx = tp.grad_ref(ix);
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) gx[k * c + j] += g[seg[k] * c + j];
  });
}

/// Segment mean; empty segments produce zero rows.
inline Var segment_mean(Var x, const Index& seg, std::size_t segments) {
  std::vector<double> counts(segments, 0.0);
  for (std::size_t s : seg) counts.at(s) += 1.0;
  Tape& t = *x.tape;
  Tensor inv({seg.size(), x.cols()});
  for (std::size_t k = 0; k < seg.size(); ++k)
    for (std::size_t j = 0; j < x.cols(); ++j) inv(k, j) = 1.0 / counts[seg[k]];
  return scatter_rows(mul(x, t.constant(std::move(inv))), seg, segments);
}

/// Builds an [n x c] tensor whose row index[p][k] is parts[p] row k. Rows not
/// covered by any part are zero. Each output row may come from one part only.
inline Var assemble_rows(const std::vector<Var>& parts, const std::vector<Index>& index, std::size_t n) {
  if (parts.empty() || parts.size() != index.size()) throw Error(ErrorCode::Precondition, "assemble_rows: bad arguments");
  Tape& t = *parts.front().tape;
  const std::size_t c = parts.front().cols();
  Tensor out = Tensor::zeros(n, c);
  bool rg = false;
  std::vector<std::size_t> ids;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = parts[p].value();
    if (pv.rows() != index[p].size() || pv.cols() != c) throw Error(ErrorCode::Shape, "assemble_rows: part shape");
    for (std::size_t k = 0; k < index[p].size(); ++k)
      std::copy_n(pv.storage().data() + k * c, c, out.storage().data() + index[p][k] * c);
    rg = rg || t.needs(parts[p].id);
    ids.push_back(parts[p].id);
  }
  return t.push("assemble_rows", std::move(out), rg, [ids, index, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_at(self);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (!tp.needs(ids[p])) continue;
      Tensor& gp = tp.grad_ref(ids[p]);
      for (std::size_t k = 0; k < index[p].size(); ++k)
        for (std::size_t j = 0; j < c; ++j) gp[k * c + j] += g[index[p][k] * c + j];
    }
  });
}

/// Column-wise softmax within each segment of rows (max-shifted). Rows whose
/// segment has a single member get exactly 1.
inline Var segment_softmax(Var scores, const Index& seg, std::size_t segments) {
  Tape& t = *scores.tape;
  const Tensor& s = scores.value();
  if (seg.size() != s.rows()) throw Error(ErrorCode::Shape, "segment_softmax: segment id count mismatch");
  const std::size_t c = s.cols();
  const double lowest = -std::numeric_limits<double>::infinity();
  std::vector<double> mx(segments * c, lowest), denom(segments * c, 0.0);
  for (std::size_t k = 0; k < seg.size(); ++k)
    for (std::size_t j = 0; j < c; ++j) mx[seg[k] * c + j] = std::max(mx[seg[k] * c + j], s[k * c + j]);
  Tensor out(s.shape());
  for (std::size_t k = 0; k < seg.size(); ++k)
    for (std::size_t j = 0; j < c; ++j) {
      out[k * c + j] = std::exp(s[k * c + j] - mx[seg[k] * c + j]);
      denom[seg[k] * c + j] += out[k * c + j];
    }
  for (std::size_t k = 0; k < seg.size(); ++k)
    for (std::size_t j = 0; j < c; ++j) out[k * c + j] /= denom[seg[k] * c + j];
  const std::size_t is = scores.id;
  return t.push("segment_softmax", std::move(out), t.needs(is), [is, seg, segments, c](Tape& tp, std::size_t self) {
    const Tensor& y = tp.value_at(self);
    const Tensor& g = tp.grad_at(self);
    std::vector<double> dot(segments * c, 0.0);
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) dot[seg[k] * c + j] += y[k * c + j] * g[k * c + j];
    Tensor& gs = tp.grad_ref(is);
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) gs[k * c + j] += y[k * c + j] * (g[k * c + j] - dot[seg[k] * c + j]);
  });
}

/// Softmax over the entries of a single row; masked-out entries are fixed at 0.
inline Var softmax_stable(Var scores, const std::optional<std::vector<bool>>& mask = std::nullopt) {
  const Tensor& s = scores.value();
  const std::size_t n = s.size();
  if (n == 0) throw Error(ErrorCode::Precondition, "softmax over an empty vector");
  Index keep;
  for (std::size_t i = 0; i < n; ++i)
    if (!mask || (*mask)[i]) keep.push_back(i);
  if (keep.empty()) throw Error(ErrorCode::Precondition, "softmax: all entries masked");
  Tape& t = *scores.tape;
  Var column = t.push("reshape", Tensor({n, 1}, s.storage()), t.needs(scores.id),
                      [is = scores.id](Tape& tp, std::size_t self) {
                        Tensor& gs = tp.grad_ref(is);
                        const Tensor& g = tp.grad_at(self);
                        for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
                      });
  Var kept = gather_rows(column, keep);
  Var soft = segment_softmax(kept, Index(keep.size(), 0), 1);
  Var back = scatter_rows(soft, keep, n);
  return t.push("reshape", Tensor({1, n}, back.value().storage()), t.needs(back.id),
                [ib = back.id](Tape& tp, std::size_t self) {
                  Tensor& gb = tp.grad_ref(ib);
                  const Tensor& g = tp.grad_at(self);
                  for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                });
}

/// Elementwise softmax across a list of equally shaped tensors:
/// out[m][i] = exp(s[m][i]) / sum_m' exp(s[m'][i]).
inline std::vector<Var> softmax_across(const std::vector<Var>& scores) {
  if (scores.empty()) throw Error(ErrorCode::Precondition, "softmax_across: no inputs");
  Tape& t = *scores.front().tape;
  Tensor shift = scores.front().value();
  for (const Var& s : scores) {
    detail::require_same_shape(shift, s.value(), "softmax_across");
    for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = std::max(shift[i], s.value()[i]);
  }
  Var c = t.constant(std::move(shift));
  std::vector<Var> e;
  for (const Var& s : scores) e.push_back(exp(sub(s, c)));
  Var total = e.front();
  for (std::size_t m = 1; m < e.size(); ++m) total = add(total, e[m]);
  std::vector<Var> out;
  for (const Var& em : e) out.push_back(div(em, total));
  return out;
}

/// Per-head linear map. x is [n x d] split into H = d / dh column blocks; w is
/// [d x dh] holding the H stacked [dh x dh] blocks. Head h maps
/// x[:, h*dh:(h+1)*dh] through w[h*dh:(h+1)*dh, :].
inline Var head_linear(Var x, Var w) {
  Tape& t = detail::same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const std::size_t n = xv.rows(), d = xv.cols(), dh = wv.cols();
  if (wv.rows() != d || dh == 0 || d % dh != 0) {
    throw Error(ErrorCode::Shape, "head_linear: weight " + wv.shape_string() + " vs input " + xv.shape_string());
  }
  const std::size_t heads = d / dh;
  Tensor out = Tensor::zeros(n, d);
  {
    const double* xp = xv.storage().data();
    const double* wp = wv.storage().data();
    double* op = out.storage().data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < heads; ++h) {
        const double* xr = xp + i * d + h * dh;
        const double* wb = wp + h * dh * dh;
        double* orow = op + i * d + h * dh;
        for (std::size_t a = 0; a < dh; ++a) {
          const double xa = xr[a];
          const double* wrow = wb + a * dh;
          for (std::size_t b = 0; b < dh; ++b) orow[b] += xa * wrow[b];
        }
      }
  }
  const std::size_t ix = x.id, iw = w.id;
  return t.push("head_linear", std::move(out), t.needs(ix) || t.needs(iw),
                [ix, iw, n, d, dh, heads](Tape& tp, std::size_t self) {
                  const double* xp = tp.value_at(ix).storage().data();
                  const double* wp = tp.value_at(iw).storage().data();
                  const double* gp = tp.grad_at(self).storage().data();
                  if (tp.needs(ix)) {
                    double* gx = tp.grad_ref(ix).storage().data();
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t h = 0; h < heads; ++h) {
                        const double* grow = gp + i * d + h * dh;
                        const double* wb = wp + h * dh * dh;
                        double* gxr = gx + i * d + h * dh;
                        for (std::size_t a = 0; a < dh; ++a) {
                          double acc = 0.0;
                          for (std::size_t b = 0; b < dh; ++b) acc += grow[b] * wb[a * dh + b];
                          gxr[a] += acc;
                        }
                      }
                  }
                  if (tp.needs(iw)) {
                    double* gw = tp.grad_ref(iw).storage().data();
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t h = 0; h < heads; ++h) {
                        const double* grow = gp + i * d + h * dh;
                        const double* xr = xp + i * d + h * dh;
                        double* gwb = gw + h * dh * dh;
                        for (std::size_t a = 0; a < dh; ++a) {
                          const double xa = xr[a];
                          for (std::size_t b = 0; b < dh; ++b) gwb[a * dh + b] += xa * grow[b];
                        }
                      }
                  }
                });
}

/// Per-head row dot products: out[i][h] = <a[i, head h block], b[i, head h block]>.
inline Var head_dot(Var a, Var b, std::size_t heads) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "head_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), d = av.cols();
  if (heads == 0 || d % heads != 0) throw Error(ErrorCode::Shape, "head_dot: width not divisible by heads");
  const std::size_t dh = d / heads;
  Tensor out = Tensor::zeros(n, heads);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < heads; ++h) {
      double acc = 0.0;
      for (std::size_t k = h * dh; k < (h + 1) * dh; ++k) acc += av[i * d + k] * bv[i * d + k];
      out[i * heads + h] = acc;
    }
  const std::size_t ia = a.id, ib = b.id;
  return t.push("head_dot", std::move(out), t.needs(ia) || t.needs(ib),
                [ia, ib, n, d, dh, heads](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  const Tensor& av = tp.value_at(ia);
                  const Tensor& bv = tp.value_at(ib);
                  if (tp.needs(ia)) {
                    Tensor& ga = tp.grad_ref(ia);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t k = 0; k < d; ++k) ga[i * d + k] += g[i * heads + k / dh] * bv[i * d + k];
                  }
                  if (tp.needs(ib)) {
                    Tensor& gb = tp.grad_ref(ib);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t k = 0; k < d; ++k) gb[i * d + k] += g[i * heads + k / dh] * av[i * d + k];
                  }
                });
}

/// x[n x d] with each of the G = w.cols() column groups scaled by w[:, g].
inline Var scale_groups(Var x, Var w) {
  Tape& t = detail::same_tape(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const std::size_t n = xv.rows(), d = xv.cols(), groups = wv.cols();
  if (wv.rows() != n || groups == 0 || d % groups != 0) {
    throw Error(ErrorCode::Shape, "scale_groups: weights " + wv.shape_string() + " vs input " + xv.shape_string());
  }
  const std::size_t width = d / groups;
  Tensor out = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) out[i * d + k] *= wv[i * groups + k / width];
  const std::size_t ix = x.id, iw = w.id;
  return t.push("scale_groups", std::move(out), t.needs(ix) || t.needs(iw),
                [ix, iw, n, d, groups, width](Tape& tp, std::size_t self) {
                  const Tensor& g = tp.grad_at(self);
                  const Tensor& xv = tp.value_at(ix);
                  const Tensor& wv = tp.value_at(iw);
                  if (tp.needs(ix)) {
                    Tensor& gx = tp.grad_ref(ix);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t k = 0; k < d; ++k) gx[i * d + k] += g[i * d + k] * wv[i * groups + k / width];
                  }
                  if (tp.needs(iw)) {
                    Tensor& gw = tp.grad_ref(iw);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t k = 0; k < d; ++k) gw[i * groups + k / width] += g[i * d + k] * xv[i * d + k];
                  }
                });
}

/// Mean negative log-likelihood of softmax(logits[row]) at labels, over the
/// given rows.
inline Var cross_entropy(Var logits, const Index& rows, const std::vector<std::size_t>& labels) {
  if (rows.empty() || rows.size() != labels.size()) {
    throw Error(ErrorCode::Precondition, "cross_entropy: need a non-empty, labeled row set");
  }
  Tape& t = *logits.tape;
  const Tensor& z = logits.value();
  const std::size_t c = z.cols();
  Tensor prob = Tensor::zeros(rows.size(), c);
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= z.rows() || labels[k] >= c) throw Error(ErrorCode::Shape, "cross_entropy: row or label out of range");
    const double* zr = z.storage().data() + rows[k] * c;
    const double mx = *std::max_element(zr, zr + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(zr[j] - mx);
    for (std::size_t j = 0; j < c; ++j) prob(k, j) = std::exp(zr[j] - mx) / denom;
    loss -= (zr[labels[k]] - mx) - std::log(denom);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  const std::size_t iz = logits.id;
  return t.push("cross_entropy", Tensor({1, 1}, std::vector<double>{loss * inv}), t.needs(iz),
                [iz, rows, labels, prob = std::move(prob), c, inv](Tape& tp, std::size_t self) {
                  const double g = tp.grad_at(self)[0] * inv;
                  Tensor& gz = tp.grad_ref(iz);
                  for (std::size_t k = 0; k < rows.size(); ++k)
                    for (std::size_t j = 0; j < c; ++j)
                      gz[rows[k] * c + j] += g * (prob(k, j) - (j == labels[k] ? 1.0 : 0.0));
                });
}

}  // namespace hgnn
