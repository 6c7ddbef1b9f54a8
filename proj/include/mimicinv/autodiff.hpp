// Copyright 2026 The mimicinv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation on a define-by-run tape.
//
// Every op call appends a node holding its forward value; nodes are
// therefore stored in topological order. `Tape::backward` walks the list in
// reverse once, accumulating gradients additively at fan-out. Only nodes
// that (transitively) depend on a leaf created with requires_grad run their
// backward closure.
//
// Sub-gradient conventions: relu/leaky_relu/abs/sign at 0 and clip at its
// bounds all have derivative 0.

#ifndef MIMICINV_AUTODIFF_HPP
#define MIMICINV_AUTODIFF_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mimicinv/errors.hpp"
#include "mimicinv/kernels.hpp"
#include "mimicinv/tensor.hpp"

namespace mimicinv {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a node's backward closure sees.
struct BackwardContext {
  const Tensor& grad_out;
  const Tensor& out;
  std::span<const Tensor* const> in;
  /// nullptr where the input does not need a gradient.
  std::span<Tensor* const> grad_in;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Result of a backward pass: gradient per node id.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> grads, std::vector<bool> present, std::vector<Shape> shapes)
      : grads_(std::move(grads)), present_(std::move(present)), shapes_(std::move(shapes)) {}

  /// Gradient wrt `v`; zero when `v` did not reach the output.
  Tensor wrt(const Var& v) const {
    if (v.id() >= shapes_.size()) throw TapeError("variable not on this tape");
    if (!present_[v.id()]) return Tensor(shapes_[v.id()]);
    return grads_[v.id()];
  }

 private:
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
  std::vector<Shape> shapes_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value, bool requires_grad = true) {
    return push("leaf", std::move(value), {}, nullptr, requires_grad);
  }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }

  /// Append a node. `backward` may be null for non-differentiable ops.
  Var push(const char* op, Tensor value, std::vector<std::size_t> inputs,
           BackwardFn backward, bool leaf_requires_grad = false) {
    if (backward_done_) throw TapeError("tape already consumed by backward()");
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
    bool rg = leaf_requires_grad;
    for (auto i : inputs) {
      if (i >= nodes_.size()) throw TapeError("input from another tape");
      rg = rg || nodes_[i].requires_grad;
    }
    if (!backward) rg = rg && inputs.empty();
    nodes_.push_back(Node{op, std::move(value), std::move(inputs), std::move(backward), rg});
    return Var(this, nodes_.size() - 1);
  }

  /// Reverse sweep seeded with `seed` (same shape as `output`). Callable once.
  /// Returns gradients of every leaf; interior gradients are released.
  Gradients backward(const Var& output, const Tensor& seed) {
    check(output);
    if (backward_done_) throw TapeError("backward() called twice on one tape");
    if (seed.shape() != output.shape()) {
      throw ShapeError("backward seed shape " + to_string(seed.shape()) +
                       " != output shape " + to_string(output.shape()));
    }
    backward_done_ = true;
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> reached(nodes_.size(), false);
    grads[output.id()] = seed;
    reached[output.id()] = true;
    std::vector<const Tensor*> in_vals;
    std::vector<Tensor*> in_grads;
    for (std::size_t id = output.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!reached[id] || !node.requires_grad || !node.backward) continue;
      in_vals.clear();
      in_grads.clear();
      for (auto i : node.inputs) {
        in_vals.push_back(&nodes_[i].value);
        if (nodes_[i].requires_grad) {
          if (!reached[i]) {
            grads[i] = Tensor(nodes_[i].value.shape());
            reached[i] = true;
          }
          in_grads.push_back(&grads[i]);
        } else {
          in_grads.push_back(nullptr);
        }
      }
      node.backward(BackwardContext{grads[id], node.value, in_vals, in_grads});
      grads[id] = Tensor();
      reached[id] = false;
    }
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (auto& n : nodes_) shapes.push_back(n.value.shape());
    return Gradients(std::move(grads), std::move(reached), std::move(shapes));
  }

  /// Backward from a scalar output with seed 1.
  Gradients backward(const Var& output) {
    if (output.value().size() != 1) {
      throw ShapeError("backward() without seed needs a scalar output, got " +
                       to_string(output.shape()));
    }
    return backward(output, Tensor(output.shape(), 1.0));
  }

  void check(const Var& v) const {
    if (&v.tape() != this) throw TapeError("variable belongs to a different tape");
  }

 private:
  struct Node {
    const char* op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const {
  if (!tape_) throw TapeError("use of unbound Var");
  return tape_->value(id_);
}

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw TapeError("operands on different tapes");
  return a.tape();
}

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

inline void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

/// Elementwise unary op from value and derivative-in-terms-of (x, y).
template <class F, class DF>
Var unary(const char* op, const Var& x, F f, DF df) {
  Tensor out(x.shape());
  auto xs = x.value().data();
  auto os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = f(xs[i]);
  return x.tape().push(op, std::move(out), {x.id()}, [df](const BackwardContext& c) {
    if (!c.grad_in[0]) return;
    auto g = c.grad_out.data();
    auto xv = c.in[0]->data();
    auto yv = c.out.data();
    auto gi = c.grad_in[0]->data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("add", a, b);
  Tensor out = a.value();
  detail::add_into(out, b.value());
  return t.push("add", std::move(out), {a.id(), b.id()}, [](const BackwardContext& c) {
    for (auto* g : c.grad_in)
      if (g) detail::add_into(*g, c.grad_out);
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return t.push("sub", std::move(out), {a.id(), b.id()}, [](const BackwardContext& c) {
    if (c.grad_in[0]) detail::add_into(*c.grad_in[0], c.grad_out);
    if (c.grad_in[1]) {
      auto gi = c.grad_in[1]->data();
      auto g = c.grad_out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("mul", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return t.push("mul", std::move(out), {a.id(), b.id()}, [](const BackwardContext& c) {
    auto g = c.grad_out.data();
    for (int k = 0; k < 2; ++k) {
      if (!c.grad_in[k]) continue;
      auto other = c.in[1 - k]->data();
      auto gi = c.grad_in[k]->data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * other[i];
    }
  });
}

inline Var scale(const Var& x, double s) {
  return detail::unary("scale", x, [s](double v) { return s * v; },
                       [s](double, double) { return s; });
}

inline Var neg(const Var& x) { return scale(x, -1.0); }

inline Var add_scalar(const Var& x, double s) {
  return detail::unary("add_scalar", x, [s](double v) { return v + s; },
                       [](double, double) { return 1.0; });
}

inline Var relu(const Var& x) {
  return detail::unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& x, double alpha) {
  return detail::unary(
      "leaky_relu", x, [alpha](double v) { return v > 0.0 ? v : alpha * v; },
      [alpha](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? alpha : 0.0); });
}

inline Var tanh(const Var& x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var log(const Var& x) {
  return detail::unary("log", x, [](double v) { return std::log(v); },
                       [](double v, double) { return 1.0 / v; });
}

inline Var abs(const Var& x) {
  return detail::unary("abs", x, [](double v) { return std::abs(v); },
                       [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Var square(const Var& x) {
  return detail::unary("square", x, [](double v) { return v * v; },
                       [](double v, double) { return 2.0 * v; });
}

inline Var sin(const Var& x) {
  return detail::unary("sin", x, [](double v) { return std::sin(v); },
                       [](double v, double) { return std::cos(v); });
}

inline Var cos(const Var& x) {
  return detail::unary("cos", x, [](double v) { return std::cos(v); },
                       [](double v, double) { return -std::sin(v); });
}

/// Clamp to [lo, hi]; derivative 1 strictly inside, 0 at or beyond the bounds.
inline Var clip(const Var& x, double lo, double hi) {
  return detail::unary(
      "clip", x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ------------------------------------------------------------ reductions etc.

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().push("sum", Tensor::scalar(s), {x.id()}, [](const BackwardContext& c) {
    if (!c.grad_in[0]) return;
    const double g = c.grad_out[0];
    for (auto& v : c.grad_in[0]->data()) v += g;
  });
}

inline Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  return scale(sum(x), n ? 1.0 / static_cast<double>(n) : 0.0);
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().push("reshape", std::move(out), {x.id()}, [](const BackwardContext& c) {
    if (!c.grad_in[0]) return;
    auto gi = c.grad_in[0]->data();
    auto g = c.grad_out.data();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
  });
}

/// x[B, ...] + b broadcast along the last axis (b has shape [last]).
inline Var add_bias(const Var& x, const Var& b) {
  Tape& t = detail::same_tape(x, b);
  if (x.value().rank() == 0 || b.value().rank() != 1 || b.shape()[0] != x.shape().back()) {
    throw ShapeError("add_bias: bias " + to_string(b.shape()) + " vs input " +
                     to_string(x.shape()));
  }
  const std::size_t ch = b.shape()[0];
  Tensor out = x.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % ch];
  return t.push("add_bias", std::move(out), {x.id(), b.id()}, [ch](const BackwardContext& c) {
    if (c.grad_in[0]) detail::add_into(*c.grad_in[0], c.grad_out);
    if (c.grad_in[1]) {
      auto gb = c.grad_in[1]->data();
      auto g = c.grad_out.data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % ch] += g[i];
    }
  });
}

/// x[B, S...] * m[S...] with m broadcast over the batch axis.
inline Var mul_broadcast(const Var& x, const Var& m) {
  Tape& t = detail::same_tape(x, m);
  const Shape& xs = x.shape();
  if (xs.empty() || Shape(xs.begin() + 1, xs.end()) != m.shape()) {
    throw ShapeError("mul_broadcast: factor " + to_string(m.shape()) + " vs input " +
                     to_string(xs));
  }
  const std::size_t n = m.value().size();
  Tensor out = x.value();
  auto o = out.data();
  auto mv = m.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mv[i % n];
  return t.push("mul_broadcast", std::move(out), {x.id(), m.id()}, [n](const BackwardContext& c) {
    auto g = c.grad_out.data();
    if (c.grad_in[0]) {
      auto gi = c.grad_in[0]->data();
      auto mv = c.in[1]->data();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * mv[i % n];
    }
    if (c.grad_in[1]) {
      auto gm = c.grad_in[1]->data();
      auto xv = c.in[0]->data();
      for (std::size_t i = 0; i < g.size(); ++i) gm[i % n] += g[i] * xv[i];
    }
  });
}

/// a[m,k] x b[k,n]
inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw ShapeError("matmul: " + to_string(as) + " x " + to_string(bs));
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor out(Shape{m, n});
  kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return t.push("matmul", std::move(out), {a.id(), b.id()}, [m, k, n](const BackwardContext& c) {
    if (c.grad_in[0]) kernels::gemm_nt(c.grad_out.data(), c.in[1]->data(), c.grad_in[0]->data(), m, n, k);
    if (c.grad_in[1]) kernels::gemm_tn(c.in[0]->data(), c.grad_out.data(), c.grad_in[1]->data(), k, m, n);
  });
}

// ---------------------------------------------------------------- convolution

using kernels::Padding;

/// Cross-correlation. input [B,H,W,Cin], kernel [kh,kw,Cin,Cout].
inline Var conv2d(const Var& input, const Var& kernel, std::size_t stride = 1,
                  Padding padding = Padding::Same) {
  Tape& t = detail::same_tape(input, kernel);
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4) {
    throw ShapeError("conv2d: input " + to_string(xs) + ", kernel " + to_string(ks));
  }
  if (ks[2] != xs[3]) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(ks[2]) +
                     " input channels, input has " + std::to_string(xs[3]));
  }
  const auto g = kernels::ConvGeometry::make(xs[1], xs[2], ks[0], ks[1], stride, padding);
  const std::size_t batch = xs[0], cin = xs[3], cout = ks[3];
  const std::size_t rows = batch * g.out_h * g.out_w, cols_len = g.patch() * cin;
  std::vector<double> cols(rows * cols_len);
  kernels::im2col(input.value().data(), cols, batch, cin, g);
  Tensor out(Shape{batch, g.out_h, g.out_w, cout});
  kernels::gemm_nn(cols, kernel.value().data(), out.data(), rows, cols_len, cout);
  return t.push("conv2d", std::move(out), {input.id(), kernel.id()},
                [g, batch, cin, cout, rows, cols_len](const BackwardContext& c) {
                  if (c.grad_in[1]) {
                    std::vector<double> cols(rows * cols_len);
                    kernels::im2col(c.in[0]->data(), cols, batch, cin, g);
                    kernels::gemm_tn(cols, c.grad_out.data(), c.grad_in[1]->data(), cols_len, rows, cout);
                  }
                  if (c.grad_in[0]) {
                    std::vector<double> dcols(rows * cols_len);
                    kernels::gemm_nt(c.grad_out.data(), c.in[1]->data(), dcols, rows, cout, cols_len);
                    kernels::col2im(dcols, c.grad_in[0]->data(), batch, cin, g);
                  }
                });
}

/// Adjoint of conv2d with the same geometry. input [B,h,w,Cin],
/// kernel [kh,kw,Cout,Cin]; output spatial extent is h*stride for "same".
inline Var conv_transpose2d(const Var& input, const Var& kernel, std::size_t stride = 1,
                            Padding padding = Padding::Same) {
  Tape& t = detail::same_tape(input, kernel);
  const Shape& ys = input.shape();
  const Shape& ks = kernel.shape();
  if (ys.size() != 4 || ks.size() != 4) {
    throw ShapeError("conv_transpose2d: input " + to_string(ys) + ", kernel " + to_string(ks));
  }
  if (ks[3] != ys[3]) {
    throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(ks[3]) +
                     " input channels, input has " + std::to_string(ys[3]));
  }
  const auto g = kernels::ConvGeometry::for_transpose(ys[1], ys[2], ks[0], ks[1], stride, padding);
  const std::size_t batch = ys[0], cin = ys[3], cout = ks[2];
  const std::size_t rows = batch * g.out_h * g.out_w, cols_len = g.patch() * cout;
  std::vector<double> cols(rows * cols_len);
  kernels::gemm_nt(input.value().data(), kernel.value().data(), cols, rows, cin, cols_len);
  Tensor out(Shape{batch, g.in_h, g.in_w, cout});
  kernels::col2im(cols, out.data(), batch, cout, g);
  return t.push("conv_transpose2d", std::move(out), {input.id(), kernel.id()},
                [g, batch, cin, cout, rows, cols_len](const BackwardContext& c) {
                  std::vector<double> gcols(rows * cols_len);
                  kernels::im2col(c.grad_out.data(), gcols, batch, cout, g);
                  if (c.grad_in[0]) {
                    kernels::gemm_nn(gcols, c.in[1]->data(), c.grad_in[0]->data(), rows, cols_len, cin);
                  }
                  if (c.grad_in[1]) {
                    kernels::gemm_tn(gcols, c.in[0]->data(), c.grad_in[1]->data(), cols_len, rows, cin);
                  }
                });
}

// ----------------------------------------------------------- normalization

/// Per-channel statistics over all axes but the last.
struct ChannelStats {
  Tensor mean;
  Tensor var;  ///< includes epsilon, see batch_norm_train
};

/// Batch normalization using the batch's own statistics. If `stats` is
/// non-null it receives the batch mean and (biased variance + eps), which is
/// the form batch_norm_frozen consumes.
inline Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                            ChannelStats* stats = nullptr) {
  Tape& t = detail::same_tape(x, gamma);
  const Shape& xs = x.shape();
  if (xs.empty() || gamma.shape() != Shape{xs.back()} || beta.shape() != gamma.shape()) {
    throw ShapeError("batch_norm: input " + to_string(xs) + ", gamma " + to_string(gamma.shape()));
  }
  const std::size_t ch = xs.back();
  const std::size_t n = x.value().size() / ch;
  auto xv = x.value().data();
  std::vector<double> mu(ch, 0.0), var(ch, 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) mu[i % ch] += xv[i];
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv[i] - mu[i % ch];
    var[i % ch] += d * d;
  }
  std::vector<double> inv_std(ch);
  for (std::size_t k = 0; k < ch; ++k) {
    var[k] = var[k] / static_cast<double>(n) + eps;
    inv_std[k] = 1.0 / std::sqrt(var[k]);
  }
  if (stats) {
    stats->mean = Tensor(Shape{ch}, mu);
    stats->var = Tensor(Shape{ch}, var);
  }
  Tensor xhat(xs);
  Tensor out(xs);
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t k = i % ch;
    xhat[i] = (xv[i] - mu[k]) * inv_std[k];
    out[i] = gv[k] * xhat[i] + bv[k];
  }
  return t.push("batch_norm_train", std::move(out), {x.id(), gamma.id(), beta.id()},
                [ch, n, xhat = std::move(xhat), inv_std](const BackwardContext& c) {
                  auto g = c.grad_out.data();
                  auto xh = xhat.data();
                  std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    sum_g[i % ch] += g[i];
                    sum_gx[i % ch] += g[i] * xh[i];
                  }
                  if (c.grad_in[1]) {
                    auto gg = c.grad_in[1]->data();
                    for (std::size_t k = 0; k < ch; ++k) gg[k] += sum_gx[k];
                  }
                  if (c.grad_in[2]) {
                    auto gb = c.grad_in[2]->data();
                    for (std::size_t k = 0; k < ch; ++k) gb[k] += sum_g[k];
                  }
                  if (c.grad_in[0]) {
                    auto gx = c.grad_in[0]->data();
                    auto gamma_v = c.in[1]->data();
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const std::size_t k = i % ch;
                      gx[i] += gamma_v[k] * inv_std[k] *
                               (g[i] - inv_n * sum_g[k] - xh[i] * inv_n * sum_gx[k]);
                    }
                  }
                });
}

/// Batch normalization with stored statistics: gamma * (x - mean) / sqrt(var) + beta.
/// `var` is expected to already include epsilon.
inline Var batch_norm_frozen(const Var& x, const Var& gamma, const Var& beta, const Var& mean,
                             const Var& var) {
  Tape& t = detail::same_tape(x, gamma);
  const Shape& xs = x.shape();
  const Shape cs{xs.empty() ? 0 : xs.back()};
  if (xs.empty() || gamma.shape() != cs || beta.shape() != cs || mean.shape() != cs ||
      var.shape() != cs) {
    throw ShapeError("batch_norm: input " + to_string(xs) + ", gamma " + to_string(gamma.shape()));
  }
  const std::size_t ch = cs[0];
  auto xv = x.value().data();
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  auto mv = mean.value().data();
  auto vv = var.value().data();
  std::vector<double> inv_std(ch);
  for (std::size_t k = 0; k < ch; ++k) inv_std[k] = 1.0 / std::sqrt(vv[k]);
  Tensor out(xs);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t k = i % ch;
    out[i] = gv[k] * ((xv[i] - mv[k]) * inv_std[k]) + bv[k];
  }
  return t.push("batch_norm_frozen", std::move(out),
                {x.id(), gamma.id(), beta.id(), mean.id(), var.id()},
                [ch, inv_std](const BackwardContext& c) {
                  auto g = c.grad_out.data();
                  auto xv = c.in[0]->data();
                  auto gv = c.in[1]->data();
                  auto mv = c.in[3]->data();
                  if (c.grad_in[0]) {
                    auto gx = c.grad_in[0]->data();
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gv[i % ch] * inv_std[i % ch];
                  }
                  if (c.grad_in[1]) {
                    auto gg = c.grad_in[1]->data();
                    for (std::size_t i = 0; i < g.size(); ++i)
                      gg[i % ch] += g[i] * (xv[i] - mv[i % ch]) * inv_std[i % ch];
                  }
                  if (c.grad_in[2]) {
                    auto gb = c.grad_in[2]->data();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % ch] += g[i];
                  }
                  if (c.grad_in[3] || c.grad_in[4]) {
                    throw TapeError("batch_norm_frozen: statistics are not differentiable");
                  }
                });
}

// ------------------------------------------------------------------- losses

/// Mean softmax cross-entropy. logits [B,C], labels in [0,C).
inline Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + to_string(s) + ", " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = s[0], nc = s[1];
  auto lv = logits.value().data();
  Tensor probs(s);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= nc) throw ShapeError("label out of range");
    const double* row = lv.data() + i * nc;
    double mx = row[0];
    for (std::size_t j = 1; j < nc; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < nc; ++j) z += std::exp(row[j] - mx);
    const double logz = mx + std::log(z);
    for (std::size_t j = 0; j < nc; ++j) probs[i * nc + j] = std::exp(row[j] - logz);
    loss += logz - row[static_cast<std::size_t>(y)];
  }
  loss /= static_cast<double>(b);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape().push("softmax_cross_entropy", Tensor::scalar(loss), {logits.id()},
                            [probs = std::move(probs), ys = std::move(ys), b, nc](const BackwardContext& c) {
                              if (!c.grad_in[0]) return;
                              const double g = c.grad_out[0] / static_cast<double>(b);
                              auto gi = c.grad_in[0]->data();
                              for (std::size_t i = 0; i < b; ++i) {
                                for (std::size_t j = 0; j < nc; ++j) {
                                  const double target = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
                                  gi[i * nc + j] += g * (probs[i * nc + j] - target);
                                }
                              }
                            });
}

// Operator sugar for readable loss expressions.
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& x) { return scale(x, s); }

}  // namespace mimicinv

#endif  // MIMICINV_AUTODIFF_HPP
