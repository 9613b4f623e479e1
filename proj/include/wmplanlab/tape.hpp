#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wmplanlab/errors.hpp"
#include "wmplanlab/tensor.hpp"

namespace wmplan {

enum class Op { leaf, matmul, add, sub, mul, scale, tanh, relu, sum, mean, square, concat, slice, clip, sign };

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::square: return "square";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::clip: return "clip";
    case Op::sign: return "sign";
  }
  return "?";
}

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

namespace detail {

// Products with a summation order fixed by index. Library kernels peel loops by
// buffer alignment, which would make results depend on heap addresses.
inline std::vector<double> matmul_nn(const Tensor& x, const Tensor& y) {  // x y
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  const double* X = x.data().data();
  const double* Y = y.data().data();
  std::vector<double> out(m * n, 0.0);
  std::size_t i = 0;
  // Four output rows share each row of y.
  for (; i + 4 <= m; i += 4) {
    double* o0 = out.data() + i * n;
    double* o1 = o0 + n;
    double* o2 = o1 + n;
    double* o3 = o2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = X[i * k + p], a1 = X[(i + 1) * k + p], a2 = X[(i + 2) * k + p], a3 = X[(i + 3) * k + p];
      const double* yr = Y + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = yr[j];
        o0[j] += a0 * v;
        o1[j] += a1 * v;
        o2[j] += a2 * v;
        o3[j] += a3 * v;
      }
    }
  }
  for (; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = X[i * k + p];
      const double* yr = Y + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += a * yr[j];
    }
  }
  return out;
}

// Four fixed lanes (lane = j mod 4), summed pairwise at the end.
using Lane4 = double __attribute__((vector_size(32)));

inline Lane4 load4(const double* p) {
  Lane4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline std::vector<double> matmul_nt(const Tensor& x, const Tensor& y) {  // x y^T
  const std::size_t m = x.rows(), n = x.cols(), k = y.rows();
  const double* X = x.data().data();
  const double* Y = y.data().data();
  std::vector<double> out(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < k; ++r) {
      const double* a = X + i * n;
      const double* b = Y + r * n;
      Lane4 acc = {0.0, 0.0, 0.0, 0.0};
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) acc += load4(a + j) * load4(b + j);
      double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
      for (; j < n; ++j) s += a[j] * b[j];
      out[i * k + r] = s;
    }
  return out;
}

inline std::vector<double> matmul_tn(const Tensor& x, const Tensor& y) {  // x^T y
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  const double* X = x.data().data();
  const double* Y = y.data().data();
  std::vector<double> out(k * n, 0.0);
  // Same per-element order as a plain loop over i: each output row sums rows of y in i order.
  for (std::size_t p = 0; p < k; ++p) {
    double* o = out.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = X[i * k + p];
      const double* yr = Y + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += a * yr[j];
    }
  }
  return out;
}
}  // namespace detail

/// Define-by-run reverse-mode tape. Node ids are assigned in creation order,
/// which is a topological order of the graph.
class Tape {
 public:
  Var constant(Tensor t) { return push(Op::leaf, std::move(t), npos, npos, false); }
  Var variable(Tensor t) { return push(Op::leaf, std::move(t), npos, npos, true); }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_[v.id].op; }

  /// Gradients of the scalar `loss` with respect to each node in `wrt`.
  std::vector<Tensor> grad(Var loss, std::span<const Var> wrt) const;

  // Node construction; use the free functions below instead.
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  struct Node {
    Op op;
    std::size_t a, b;
    Tensor value;
    bool needs_grad;
    double p0 = 0.0, p1 = 0.0;  // scale factor / clip bounds
    std::size_t axis = 0, offset = 0;
  };
  Var push(Op op, Tensor value, std::size_t a, std::size_t b, bool needs_grad, double p0 = 0.0,
           double p1 = 0.0, std::size_t axis = 0, std::size_t offset = 0) {
    nodes_.push_back(Node{op, a, b, std::move(value), needs_grad, p0, p1, axis, offset});
    return Var{this, nodes_.size() - 1};
  }
  const Node& node(std::size_t id) const { return nodes_[id]; }

 private:
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

inline void same_tape(Var a, Var b) { require(a.tape == b.tape && a.tape, "vars live on different tapes"); }

inline bool need(Var a) { return a.tape->needs_grad(a); }

inline bool is_row_broadcast(const Shape& a, const Shape& b) {
  return a.size() == 2 && b.size() == 2 && b[0] == 1 && a[1] == b[1] && a[0] != 1;
}

template <class F>
Var binary_elementwise(Op op, Var a, Var b, F f) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  std::vector<double> out(x.size());
  if (x.shape() == y.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  } else if (op != Op::mul && is_row_broadcast(x.shape(), y.shape())) {
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i % n]);
  } else {
    throw ContractError(std::string(op_name(op)) + ": shape mismatch " + shape_str(x.shape()) + " vs " +
                        shape_str(y.shape()));
  }
  return a.tape->push(op, Tensor::raw(x.shape(), std::move(out)), a.id, b.id, need(a) || need(b));
}

template <class F>
Var unary_elementwise(Op op, Var a, F f, double p0 = 0.0, double p1 = 0.0) {
  const Tensor& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  const bool ng = op == Op::sign ? false : need(a);
  return a.tape->push(op, Tensor::raw(x.shape(), std::move(out)), a.id, Tape::npos, ng, p0, p1);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows())
    throw ContractError("matmul: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
  auto out = detail::matmul_nn(x, y);
  return a.tape->push(Op::matmul, Tensor::raw({x.rows(), y.cols()}, std::move(out)), a.id, b.id,
                      detail::need(a) || detail::need(b));
}

/// Elementwise sum; `b` may also be a [1, n] row broadcast over the rows of `a`.
inline Var add(Var a, Var b) {
  return detail::binary_elementwise(Op::add, a, b, [](double x, double y) { return x + y; });
}
inline Var sub(Var a, Var b) {
  return detail::binary_elementwise(Op::sub, a, b, [](double x, double y) { return x - y; });
}
inline Var mul(Var a, Var b) {
  return detail::binary_elementwise(Op::mul, a, b, [](double x, double y) { return x * y; });
}
inline Var scale(Var a, double s) {
  return detail::unary_elementwise(Op::scale, a, [s](double x) { return s * x; }, s);
}
inline Var tanh(Var a) {
  return detail::unary_elementwise(Op::tanh, a, [](double x) { return std::tanh(x); });
}
inline Var relu(Var a) {
  return detail::unary_elementwise(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
inline Var square(Var a) {
  return detail::unary_elementwise(Op::square, a, [](double x) { return x * x; });
}
/// Non-differentiable in the usual sense: backward passes the gradient inside [lo, hi], zero outside.
inline Var clip(Var a, double lo, double hi) {
  require(lo <= hi, "clip: lo > hi");
  return detail::unary_elementwise(Op::clip, a, [lo, hi](double x) { return std::clamp(x, lo, hi); }, lo, hi);
}
/// Zero gradient everywhere.
inline Var sign(Var a) {
  return detail::unary_elementwise(Op::sign, a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape->push(Op::sum, Tensor::raw({1}, {s}), a.id, Tape::npos, detail::need(a));
}

inline Var mean(Var a) {
  const auto& v = a.value();
  require(v.size() > 0, "mean of empty tensor");
  double s = 0.0;
  for (double x : v.data()) s += x;
  return a.tape->push(Op::mean, Tensor::raw({1}, {s / static_cast<double>(v.size())}), a.id, Tape::npos,
                      detail::need(a));
}

/// Concatenate two rank-2 tensors along axis 0 (rows) or 1 (columns).
inline Var concat(Var a, Var b, std::size_t axis = 1) {
  detail::same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.rank() == 2 && y.rank() == 2 && axis < 2, "concat: rank-2 tensors and axis 0/1 required");
  std::vector<double> out;
  out.reserve(x.size() + y.size());
  Shape shape;
  if (axis == 0) {
    require(x.cols() == y.cols(), "concat rows: column mismatch");
    out.insert(out.end(), x.data().begin(), x.data().end());
    out.insert(out.end(), y.data().begin(), y.data().end());
    shape = {x.rows() + y.rows(), x.cols()};
  } else {
    require(x.rows() == y.rows(), "concat cols: row mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r) {
      out.insert(out.end(), x.data().begin() + static_cast<std::ptrdiff_t>(r * x.cols()),
                 x.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * x.cols()));
      out.insert(out.end(), y.data().begin() + static_cast<std::ptrdiff_t>(r * y.cols()),
                 y.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * y.cols()));
    }
    shape = {x.rows(), x.cols() + y.cols()};
  }
  return a.tape->push(Op::concat, Tensor::raw(std::move(shape), std::move(out)), a.id, b.id,
                      detail::need(a) || detail::need(b), 0.0, 0.0, axis);
}

/// Half-open range [begin, end) of a rank-2 tensor along `axis`.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require(x.rank() == 2 && axis < 2, "slice: rank-2 tensor and axis 0/1 required");
  require(begin < end && end <= x.shape()[axis], "slice: range out of bounds");
  std::vector<double> out;
  Shape shape;
  if (axis == 0) {
    out.assign(x.data().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()),
               x.data().begin() + static_cast<std::ptrdiff_t>(end * x.cols()));
    shape = {end - begin, x.cols()};
  } else {
    out.reserve(x.rows() * (end - begin));
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) out.push_back(x.at(r, c));
    shape = {x.rows(), end - begin};
  }
  return a.tape->push(Op::slice, Tensor::raw(std::move(shape), std::move(out)), a.id, Tape::npos,
                      detail::need(a), 0.0, 0.0, axis, begin);
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

inline std::vector<Tensor> Tape::grad(Var loss, std::span<const Var> wrt) const {
  require(loss.tape == this, "grad: loss is on another tape");
  if (value(loss).size() != 1)
    throw ContractError("grad: loss must be a scalar, got shape " + shape_str(value(loss).shape()));
  for (const auto& w : wrt) require(w.tape == this, "grad: wrt on another tape");

  std::vector<std::vector<double>> adj(loss.id + 1);
  adj[loss.id] = {1.0};

  auto accum = [&](std::size_t id, std::vector<double>&& g, Op op) {
    if (id == npos || !nodes_[id].needs_grad) return;
    for (double x : g)
      if (!std::isfinite(x)) throw NumericError(std::string("NaN encountered during backward in op ") + op_name(op));
    if (adj[id].empty()) {
      adj[id] = std::move(g);
    } else {
      auto& dst = adj[id];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
  };

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (adj[id].empty() || !n.needs_grad || n.op == Op::leaf) continue;
    const std::vector<double>& g = adj[id];
    const Tensor& out = n.value;
    switch (n.op) {
      case Op::leaf: break;
      case Op::matmul: {
        const Tensor& x = nodes_[n.a].value;
        const Tensor& y = nodes_[n.b].value;
        const Tensor G = Tensor::raw(out.shape(), g);
        if (nodes_[n.a].needs_grad) accum(n.a, detail::matmul_nt(G, y), n.op);
        if (nodes_[n.b].needs_grad) accum(n.b, detail::matmul_tn(x, G), n.op);
        break;
      }
      case Op::add:
      case Op::sub: {
        accum(n.a, std::vector<double>(g), n.op);
        if (nodes_[n.b].needs_grad) {
          const Tensor& y = nodes_[n.b].value;
          const double sgn = n.op == Op::add ? 1.0 : -1.0;
          std::vector<double> gb(y.size(), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % y.size()] += sgn * g[i];
          accum(n.b, std::move(gb), n.op);
        }
        break;
      }
      case Op::mul: {
        const Tensor& x = nodes_[n.a].value;
        const Tensor& y = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) {
          std::vector<double> ga(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i];
          accum(n.a, std::move(ga), n.op);
        }
        if (nodes_[n.b].needs_grad) {
          std::vector<double> gb(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * x[i];
          accum(n.b, std::move(gb), n.op);
        }
        break;
      }
      case Op::scale: {
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = n.p0 * g[i];
        accum(n.a, std::move(ga), n.op);
        break;
      }
      case Op::tanh: {
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (1.0 - out[i] * out[i]);
        accum(n.a, std::move(ga), n.op);
        break;
      }
      case Op::relu: {
        const Tensor& x = nodes_[n.a].value;
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
        accum(n.a, std::move(ga), n.op);
        break;
      }
      case Op::square: {
        const Tensor& x = nodes_[n.a].value;
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = 2.0 * x[i] * g[i];
        accum(n.a, std::move(ga), n.op);
        break;
      }
      case Op::sum:
      case Op::mean: {
        const auto m = nodes_[n.a].value.size();
        const double v = n.op == Op::sum ? g[0] : g[0] / static_cast<double>(m);
        accum(n.a, std::vector<double>(m, v), n.op);
        break;
      }
      case Op::concat: {
        const Tensor& x = nodes_[n.a].value;
        const Tensor& y = nodes_[n.b].value;
        std::vector<double> ga, gb;
        if (n.axis == 0) {
          ga.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(x.size()));
          gb.assign(g.begin() + static_cast<std::ptrdiff_t>(x.size()), g.end());
        } else {
          ga.reserve(x.size());
          gb.reserve(y.size());
          const auto w = out.cols();
          for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = g.begin() + static_cast<std::ptrdiff_t>(r * w);
            ga.insert(ga.end(), row, row + static_cast<std::ptrdiff_t>(x.cols()));
            gb.insert(gb.end(), row + static_cast<std::ptrdiff_t>(x.cols()), row + static_cast<std::ptrdiff_t>(w));
          }
        }
        accum(n.a, std::move(ga), n.op);
        accum(n.b, std::move(gb), n.op);
        break;
      }
      case Op::slice: {
        const Tensor& x = nodes_[n.a].value;
        std::vector<double> ga(x.size(), 0.0);
        if (n.axis == 0) {
          std::copy(g.begin(), g.end(), ga.begin() + static_cast<std::ptrdiff_t>(n.offset * x.cols()));
        } else {
          const auto w = out.cols();
          for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) ga[r * x.cols() + n.offset + c] = g[r * w + c];
        }
        accum(n.a, std::move(ga), n.op);
        break;
      }
      case Op::clip: {
        const Tensor& x = nodes_[n.a].value;
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = (x[i] >= n.p0 && x[i] <= n.p1) ? g[i] : 0.0;
        accum(n.a, std::move(ga), n.op);
        break;
      }
      case Op::sign: break;
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    const Shape& s = nodes_[w.id].value.shape();
    if (w.id <= loss.id && !adj[w.id].empty())
      out.push_back(Tensor::raw(s, adj[w.id]));
    else
      out.push_back(Tensor::zeros(s));
  }
  return out;
}

}  // namespace wmplan
