// Copyright 2026 The colab-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over Tensors. A Var is a shared handle to a
// graph node; every op below builds a new node holding its forward value and a
// closure that maps the output gradient to parent gradients. Gradients are
// returned from backward() in a fresh map, never stored on the nodes, so the
// same graph can be differentiated any number of times.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "colab/error.hpp"
#include "colab/tensor.hpp"

namespace colab {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAddScalar,
  kMulScalar,
  kMatmul,
  kConv2d,
  kUpsample,
  kRelu,
  kSigmoid,
  kExp,
  kLog,
  kClamp,
  kSoftmax,
  kSum,
  kMean,
  kSumSpatial,
  kConcat,
  kSlice,
  kReshape,
};

inline std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMulScalar: return "mul_scalar";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kUpsample: return "upsample_nearest2x";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kClamp: return "clamp";
    case OpKind::kSoftmax: return "softmax_channels";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSumSpatial: return "sum_spatial";
    case OpKind::kConcat: return "concat_channels";
    case OpKind::kSlice: return "slice_channels";
    case OpKind::kReshape: return "reshape";
  }
  return "?";
}

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<std::vector<Tensor>(const Node& self, const Tensor& grad_out)>;

struct Node {
  Tensor value;
  OpKind kind = OpKind::kLeaf;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;
};

class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad = true) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Interior node; requires_grad is inherited from the parents.
  static Var make(OpKind kind, Tensor value, std::vector<Var> parents, BackwardFn fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->kind = kind;
    for (Var& p : parents) {
      n->requires_grad = n->requires_grad || p.requires_grad();
      n->parents.push_back(std::move(p.node_));
    }
    if (n->requires_grad) n->backward = std::move(fn);
    return Var(std::move(n));
  }

  explicit operator bool() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  OpKind kind() const { return node_->kind; }
  const Node* node() const { return node_.get(); }

 private:
  explicit Var(NodePtr n) : node_(std::move(n)) {}
  NodePtr node_;
};

/// Result of backward(): gradient per reachable leaf.
class Gradients {
 public:
  /// Gradient of `v`; zeros when `v` was not reachable from the loss.
  Tensor of(const Var& v) const {
    auto it = grads_.find(v.node());
    if (it == grads_.end()) return Tensor(v.shape(), 0.0);
    return it->second;
  }
  bool contains(const Var& v) const { return grads_.count(v.node()) != 0; }

 private:
  friend Gradients backward(const Var& loss);
  std::unordered_map<const Node*, Tensor> grads_;
};

inline Gradients backward(const Var& loss) {
  if (!loss) throw Error("backward: null loss");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.value().all_finite()) throw NumericError("backward: loss is not finite");

  // Iterative post-order DFS over nodes that require grad.
  std::vector<const Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  if (loss.requires_grad()) {
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Gradients out;
  auto& g = out.grads_;
  if (order.empty()) return out;
  g.emplace(loss.node(), Tensor(loss.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    if (node->kind == OpKind::kLeaf) continue;
    auto found = g.find(node);
    if (found == g.end()) continue;
    Tensor grad_out = std::move(found->second);
    g.erase(found);
    std::vector<Tensor> pg = node->backward(*node, grad_out);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Node* p = node->parents[i].get();
      if (!p->requires_grad || i >= pg.size() || pg[i].empty()) continue;
      auto [slot, inserted] = g.try_emplace(p, std::move(pg[i]));
      if (!inserted) slot->second += pg[i];
    }
  }
  return out;
}

/// Throws NumericError naming `where` if `v` holds NaN or Inf.
inline void check_finite(const Var& v, std::string_view where) {
  if (!v.value().all_finite()) {
    throw NumericError("non-finite values in " + std::string(where) + " (" + std::string(op_name(v.kind())) + ", shape " +
                       to_string(v.shape()) + ")");
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, OpKind k) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(k)) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <class F, class DF>
Var unary(OpKind kind, const Var& x, F f, DF df) {
  Tensor out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Var::make(kind, std::move(out), {x}, [df](const Node& self, const Tensor& g) {
    const Tensor& xin = self.parents[0]->value;
    Tensor gx(xin.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * df(xin[i], self.value[i]);
    return std::vector<Tensor>{std::move(gx)};
  });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, OpKind::kAdd);
  Tensor out = a.value();
  out += b.value();
  return Var::make(OpKind::kAdd, std::move(out), {a, b},
                   [](const Node&, const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, OpKind::kSub);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return Var::make(OpKind::kSub, std::move(out), {a, b}, [](const Node&, const Tensor& g) {
    Tensor gb = g;
    gb *= -1.0;
    return std::vector<Tensor>{g, std::move(gb)};
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, OpKind::kMul);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return Var::make(OpKind::kMul, std::move(out), {a, b}, [](const Node& self, const Tensor& g) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    std::vector<Tensor> r(2);
    if (self.parents[0]->requires_grad) {
      r[0] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) r[0][i] = g[i] * bv[i];
    }
    if (self.parents[1]->requires_grad) {
      r[1] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) r[1][i] = g[i] * av[i];
    }
    return r;
  });
}

inline Var div(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, OpKind::kDiv);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return Var::make(OpKind::kDiv, std::move(out), {a, b}, [](const Node& self, const Tensor& g) {
    const Tensor& bv = self.parents[1]->value;
    std::vector<Tensor> r(2);
    if (self.parents[0]->requires_grad) {
      r[0] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) r[0][i] = g[i] / bv[i];
    }
    if (self.parents[1]->requires_grad) {
      r[1] = Tensor(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) r[1][i] = -g[i] * self.value[i] / bv[i];
    }
    return r;
  });
}

inline Var add_scalar(const Var& x, double s) {
  return detail::unary(OpKind::kAddScalar, x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Var mul_scalar(const Var& x, double s) {
  return detail::unary(OpKind::kMulScalar, x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }
inline Var operator-(const Var& a) { return mul_scalar(a, -1.0); }

inline Var relu(const Var& x) {
  return detail::unary(
      OpKind::kRelu, x, [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(
      OpKind::kSigmoid, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(const Var& x) {
  return detail::unary(OpKind::kExp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(const Var& x) {
  return detail::unary(OpKind::kLog, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// Clamp to [lo, hi]; gradient is zero where the bound is active.
inline Var clamp(const Var& x, double lo, double hi) {
  return detail::unary(
      OpKind::kClamp, x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions and shape ops

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return Var::make(OpKind::kSum, Tensor::scalar(s), {x}, [](const Node& self, const Tensor& g) {
    return std::vector<Tensor>{Tensor(self.parents[0]->value.shape(), g[0])};
  });
}

inline Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return Var::make(OpKind::kMean, Tensor::scalar(s / n), {x}, [n](const Node& self, const Tensor& g) {
    return std::vector<Tensor>{Tensor(self.parents[0]->value.shape(), g[0] / n)};
  });
}

/// [N,C,H,W] -> [N,C], summing over H and W.
inline Var sum_spatial(const Var& x) {
  if (x.value().rank() != 4) throw ShapeError("sum_spatial: expected NCHW, got " + to_string(x.shape()));
  const std::size_t N = x.shape()[0], C = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  Tensor out(Shape{N, C});
  for (std::size_t i = 0; i < N * C; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x.value()[i * hw + j];
    out[i] = s;
  }
  return Var::make(OpKind::kSumSpatial, std::move(out), {x}, [hw](const Node& self, const Tensor& g) {
    Tensor gx(self.parents[0]->value.shape());
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] = g[i];
    return std::vector<Tensor>{std::move(gx)};
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::make(OpKind::kReshape, std::move(out), {x}, [](const Node& self, const Tensor& g) {
    return std::vector<Tensor>{g.reshaped(self.parents[0]->value.shape())};
  });
}

/// Concatenate NCHW tensors along the channel axis.
inline Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  if (s0.size() != 4) throw ShapeError("concat_channels: expected NCHW, got " + to_string(s0));
  std::size_t C = 0;
  for (const Var& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: shape mismatch " + to_string(s0) + " vs " + to_string(s));
    }
    C += s[1];
  }
  const std::size_t N = s0[0], hw = s0[2] * s0[3];
  Tensor out(Shape{N, C, s0[2], s0[3]});
  std::vector<std::size_t> widths;
  for (std::size_t n = 0, off = 0; n < N; ++n) {
    for (const Var& x : xs) {
      const std::size_t len = x.shape()[1] * hw;
      std::copy_n(x.value().data().begin() + static_cast<std::ptrdiff_t>(n * len), len,
                  out.data().begin() + static_cast<std::ptrdiff_t>(off));
      off += len;
    }
  }
  for (const Var& x : xs) widths.push_back(x.shape()[1]);
  return Var::make(OpKind::kConcat, std::move(out), xs, [widths, hw, N, C](const Node& self, const Tensor& g) {
    std::vector<Tensor> r(widths.size());
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (self.parents[k]->requires_grad) {
        r[k] = Tensor(self.parents[k]->value.shape());
        for (std::size_t n = 0; n < N; ++n)
          std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>((n * C + c0) * hw), widths[k] * hw,
                      r[k].data().begin() + static_cast<std::ptrdiff_t>(n * widths[k] * hw));
      }
      c0 += widths[k];
    }
    return r;
  });
}

/// Channels [begin, end) of an NCHW tensor.
inline Var slice_channels(const Var& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (s.size() != 4 || begin >= end || end > s[1]) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + to_string(s));
  }
  const std::size_t N = s[0], C = s[1], hw = s[2] * s[3], w = end - begin;
  Tensor out(Shape{N, w, s[2], s[3]});
  for (std::size_t n = 0; n < N; ++n)
    std::copy_n(x.value().data().begin() + static_cast<std::ptrdiff_t>((n * C + begin) * hw), w * hw,
                out.data().begin() + static_cast<std::ptrdiff_t>(n * w * hw));
  return Var::make(OpKind::kSlice, std::move(out), {x}, [=](const Node& self, const Tensor& g) {
    Tensor gx(self.parents[0]->value.shape());
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(g.data().begin() + static_cast<std::ptrdiff_t>(n * w * hw), w * hw,
                  gx.data().begin() + static_cast<std::ptrdiff_t>((n * C + begin) * hw));
    return std::vector<Tensor>{std::move(gx)};
  });
}

/// Softmax over the channel axis of an NCHW tensor, max-subtracted per pixel.
inline Tensor softmax_channels(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("softmax_channels: expected NCHW, got " + to_string(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t base = n * C * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, x[base + c * hw + p]);
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double e = std::exp(x[base + c * hw + p] - mx);
        out[base + c * hw + p] = e;
        z += e;
      }
      for (std::size_t c = 0; c < C; ++c) out[base + c * hw + p] /= z;
    }
  }
  return out;
}

inline Var softmax_channels(const Var& x) {
  Tensor out = softmax_channels(x.value());
  return Var::make(OpKind::kSoftmax, std::move(out), {x}, [](const Node& self, const Tensor& g) {
    const Tensor& y = self.value;
    const std::size_t N = y.dim(0), C = y.dim(1), hw = y.dim(2) * y.dim(3);
    Tensor gx(y.shape());
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = n * C * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += g[base + c * hw + p] * y[base + c * hw + p];
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = base + c * hw + p;
          gx[i] = y[i] * (g[i] - s);
        }
      }
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

// ---------------------------------------------------------------------------
// Dense linear algebra (Eigen-backed GEMM)

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap cmap(const double* p, std::size_t r, std::size_t c) {
  return ConstMatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MatMap map(double* p, std::size_t r, std::size_t c) {
  return MatMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
}  // namespace detail

/// [M,K] x [K,N] -> [M,N]
inline Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: incompatible shapes " + to_string(sa) + " vs " + to_string(sb));
  }
  const std::size_t M = sa[0], K = sa[1], N = sb[1];
  Tensor out(Shape{M, N});
  detail::map(out.data().data(), M, N).noalias() =
      detail::cmap(a.value().data().data(), M, K) * detail::cmap(b.value().data().data(), K, N);
  return Var::make(OpKind::kMatmul, std::move(out), {a, b}, [M, K, N](const Node& self, const Tensor& g) {
    std::vector<Tensor> r(2);
    auto G = detail::cmap(g.data().data(), M, N);
    if (self.parents[0]->requires_grad) {
      r[0] = Tensor(Shape{M, K});
      detail::map(r[0].data().data(), M, K).noalias() =
          G * detail::cmap(self.parents[1]->value.data().data(), K, N).transpose();
    }
    if (self.parents[1]->requires_grad) {
      r[1] = Tensor(Shape{K, N});
      detail::map(r[1].data().data(), K, N).noalias() =
          detail::cmap(self.parents[0]->value.data().data(), M, K).transpose() * G;
    }
    return r;
  });
}

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// 2-D cross-correlation, NCHW input, [O,C,kh,kw] weight, optional [O] bias,
/// explicit zero padding. Implemented as im2col + GEMM per sample.
inline Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions opt = {}) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1]) {
    throw ShapeError("conv2d: incompatible input/weight shapes " + to_string(xs) + " vs " + to_string(ws));
  }
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0) throw ShapeError("conv2d: kernel must have odd extent, got " + to_string(ws));
  if (bias && bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " vs weight " + to_string(ws));
  }
  if (opt.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t O = ws[0], kh = ws[2], kw = ws[3], s = opt.stride, pad = opt.padding;
  if (H + 2 * pad < kh || W + 2 * pad < kw) {
    throw ShapeError("conv2d: kernel " + to_string(ws) + " larger than padded input " + to_string(xs));
  }
  const std::size_t Ho = (H + 2 * pad - kh) / s + 1, Wo = (W + 2 * pad - kw) / s + 1;
  const std::size_t K = C * kh * kw, P = Ho * Wo;

  auto cols = std::make_shared<std::vector<double>>(N * K * P, 0.0);
  const double* xin = x.value().data().data();
  for (std::size_t n = 0; n < N; ++n) {
    double* col = cols->data() + n * K * P;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < kh; ++i)
        for (std::size_t j = 0; j < kw; ++j) {
          double* row = col + ((c * kh + i) * kw + j) * P;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + i) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            const double* src = xin + ((n * C + c) * H + static_cast<std::size_t>(iy)) * W;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + j) - static_cast<std::ptrdiff_t>(pad);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) row[oy * Wo + ox] = src[ix];
            }
          }
        }
  }

  Tensor out(Shape{N, O, Ho, Wo});
  auto Wm = detail::cmap(weight.value().data().data(), O, K);
  for (std::size_t n = 0; n < N; ++n) {
    auto Y = detail::map(out.data().data() + n * O * P, O, P);
    Y.noalias() = Wm * detail::cmap(cols->data() + n * K * P, K, P);
    if (bias) {
      for (std::size_t o = 0; o < O; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias.value()[o];
    }
  }

  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return Var::make(
      OpKind::kConv2d, std::move(out), std::move(parents),
      [=](const Node& self, const Tensor& g) {
        std::vector<Tensor> r(self.parents.size());
        const Tensor& wv = self.parents[1]->value;
        if (self.parents[1]->requires_grad) {
          r[1] = Tensor(wv.shape());
          auto dW = detail::map(r[1].data().data(), O, K);
          for (std::size_t n = 0; n < N; ++n)
            dW.noalias() += detail::cmap(g.data().data() + n * O * P, O, P) *
                            detail::cmap(cols->data() + n * K * P, K, P).transpose();
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          r[2] = Tensor(Shape{O});
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) {
              double acc = 0.0;
              const double* gp = g.data().data() + (n * O + o) * P;
              for (std::size_t p = 0; p < P; ++p) acc += gp[p];
              r[2][o] += acc;
            }
        }
        if (self.parents[0]->requires_grad) {
          r[0] = Tensor(Shape{N, C, H, W});
          std::vector<double> dcol(K * P);
          auto Wt = detail::cmap(wv.data().data(), O, K).transpose();
          for (std::size_t n = 0; n < N; ++n) {
            detail::map(dcol.data(), K, P).noalias() = Wt * detail::cmap(g.data().data() + n * O * P, O, P);
            double* dx = r[0].data().data();
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t i = 0; i < kh; ++i)
                for (std::size_t j = 0; j < kw; ++j) {
                  const double* row = dcol.data() + ((c * kh + i) * kw + j) * P;
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * s + i) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    double* dst = dx + ((n * C + c) * H + static_cast<std::size_t>(iy)) * W;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      const std::ptrdiff_t ix =
                          static_cast<std::ptrdiff_t>(ox * s + j) - static_cast<std::ptrdiff_t>(pad);
                      if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) dst[ix] += row[oy * Wo + ox];
                    }
                  }
                }
          }
        }
        return r;
      });
}

/// Nearest-neighbour 2x upsampling of an NCHW tensor.
inline Var upsample_nearest2x(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample_nearest2x: expected NCHW, got " + to_string(s));
  const std::size_t NC = s[0] * s[1], H = s[2], W = s[3];
  Tensor out(Shape{s[0], s[1], 2 * H, 2 * W});
  for (std::size_t k = 0; k < NC; ++k)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx)
        out[(k * 2 * H + y) * 2 * W + xx] = x.value()[(k * H + y / 2) * W + xx / 2];
  return Var::make(OpKind::kUpsample, std::move(out), {x}, [NC, H, W](const Node& self, const Tensor& g) {
    Tensor gx(self.parents[0]->value.shape());
    for (std::size_t k = 0; k < NC; ++k)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx) gx[(k * H + y / 2) * W + xx / 2] += g[(k * 2 * H + y) * 2 * W + xx];
    return std::vector<Tensor>{std::move(gx)};
  });
}

}  // namespace colab
