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

// Independent reference implementations used by the unit and acceptance
// tests. Each one is deliberately naive so it shares no code path with the
// library routine it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "colab/autodiff.hpp"
#include "colab/bilevel.hpp"
#include "colab/grid.hpp"
#include "colab/params.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab::oracle {

/// Tensor of the given shape with values uniform in [lo, hi).
inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Same, but every |value| is at least `gap` (keeps kinks out of FD stencils).
inline Tensor random_tensor_away_from_zero(const Shape& shape, Rng& rng, double gap = 1e-2) {
  Tensor t(shape);
  for (double& v : t.data()) {
    const double u = rng.uniform(gap, 1.0);
    v = rng.uniform() < 0.5 ? -u : u;
  }
  return t;
}

inline Mask random_mask(std::size_t h, std::size_t w, double density, Rng& rng) {
  Mask m(h, w);
  for (auto& v : m.data) v = rng.uniform() < density ? 1 : 0;
  return m;
}

/// Random union of filled discs, a more blob-like mask than iid pixels.
inline Mask random_blobs(std::size_t h, std::size_t w, std::size_t blobs, double max_r, Rng& rng) {
  Mask m(h, w);
  for (std::size_t b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0.0, static_cast<double>(h)), cx = rng.uniform(0.0, static_cast<double>(w));
    const double r = rng.uniform(1.0, max_r);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        if (dy * dy + dx * dx <= r * r) m(y, x) = 1;
      }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor): relative where the gradient is
/// non-negligible, absolute below the floor where FD round-off dominates.
inline double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares reverse-mode gradients of the scalar f(inputs) with central
/// differences of step h on every element of every input.
inline GradCheck grad_check(const std::function<Var(const std::vector<Var>&)>& f, const std::vector<Tensor>& inputs,
                            double h = 1e-5, double floor = 1e-6) {
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(Var::leaf(t));
  const Gradients g = backward(f(vars));
  GradCheck out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = g.of(vars[i]);
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Var> c;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == i) t[k] += delta;
          c.push_back(Var::constant(std::move(t)));
        }
        return f(c).value().item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[k], numeric, floor));
      ++out.checked;
    }
  }
  return out;
}

/// Scalar projection sum(x * r) with a fixed random r, so every output element
/// carries a distinct weight into the gradient.
inline Var project(const Var& x, const Tensor& r) { return sum(x * Var::constant(r)); }

// ---------------------------------------------------------------------------
// Geometry

/// Exact distance to the nearest foreground pixel by scanning all of them.
inline Grid<double> brute_force_distance(const Mask& m) {
  std::vector<std::pair<long, long>> fg;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m(y, x)) fg.emplace_back(static_cast<long>(y), static_cast<long>(x));
  Grid<double> d(m.height, m.width, std::numeric_limits<double>::infinity());
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      long best = std::numeric_limits<long>::max();
      for (auto [fy, fx] : fg) {
        const long dy = static_cast<long>(y) - fy, dx = static_cast<long>(x) - fx;
        best = std::min(best, dy * dy + dx * dx);
      }
      if (!fg.empty()) d(y, x) = std::sqrt(static_cast<double>(best));
    }
  return d;
}

/// Boundary pixels: foreground with at least one 8-neighbour that is background
/// or outside the image.
inline std::vector<std::pair<long, long>> boundary_pixels(const Mask& m) {
  std::vector<std::pair<long, long>> out;
  const long H = static_cast<long>(m.height), W = static_cast<long>(m.width);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      if (!m(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) continue;
      bool edge = false;
      for (long dy = -1; dy <= 1 && !edge; ++dy)
        for (long dx = -1; dx <= 1 && !edge; ++dx) {
          const long yy = y + dy, xx = x + dx;
          edge = yy < 0 || xx < 0 || yy >= H || xx >= W || !m(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        }
      if (edge) out.emplace_back(y, x);
    }
  return out;
}

/// 95th percentile (linear interpolation) of all pairwise-nearest surface
/// distances in both directions, by O(n^2) search.
inline double brute_hd95(const Mask& a, const Mask& b) {
  const auto sa = boundary_pixels(a), sb = boundary_pixels(b);
  std::vector<double> d;
  auto directed = [&d](const auto& from, const auto& to) {
    for (auto [y, x] : from) {
      long best = std::numeric_limits<long>::max();
      for (auto [v, u] : to) best = std::min(best, (y - v) * (y - v) + (x - u) * (x - u));
      d.push_back(std::sqrt(static_cast<double>(best)));
    }
  };
  directed(sa, sb);
  directed(sb, sa);
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

// ---------------------------------------------------------------------------
// Clustering

/// Minimum within-cluster SSE of 1-D values into 3 clusters. Optimal 1-D
/// clusters are contiguous in sorted order, so trying every pair of cut points
/// is exhaustive.
inline double optimal_sse_3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  auto sse = [&v](std::size_t b, std::size_t e) {
    double mean = 0.0;
    for (std::size_t i = b; i < e; ++i) mean += v[i];
    mean /= static_cast<double>(e - b);
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += (v[i] - mean) * (v[i] - mean);
    return s;
  };
  std::vector<double> head(n + 1), tail(n + 1);
  for (std::size_t i = 1; i <= n; ++i) head[i] = sse(0, i);
  for (std::size_t i = 0; i < n; ++i) tail[i] = sse(i, n);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) best = std::min(best, head[i] + sse(i, j) + tail[j]);
  return best;
}

// ---------------------------------------------------------------------------
// Hypergradient

/// d/d omega of the composite omega -> L_roi(theta - alpha grad_theta L_seg(theta, omega)),
/// by central differences of step h on every element of omega.
template <BilevelProblem P>
GradientMap composite_hypergradient(const P& problem, const NetworkParams& theta, const NetworkParams& omega,
                                    double alpha, double h = 1e-6) {
  auto composite = [&](const NetworkParams& w) {
    const SegGrads s = problem.seg_grads(theta, w);
    return problem.roi_grads(axpy(theta, -alpha, s.theta)).loss;
  };
  GradientMap out;
  for (const auto& [name, value] : omega) {
    Tensor g(value.shape());
    for (std::size_t k = 0; k < value.size(); ++k) {
      NetworkParams plus = omega, minus = omega;
      plus.at(name)[k] += h;
      minus.at(name)[k] -= h;
      g[k] = (composite(plus) - composite(minus)) / (2.0 * h);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

/// ||a - b|| / max(||a||, ||b||) over all entries of two gradient maps.
inline double map_rel_err(const GradientMap& a, const GradientMap& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    for (std::size_t k = 0; k < ta.size(); ++k) {
      diff += (ta[k] - tb[k]) * (ta[k] - tb[k]);
      na += ta[k] * ta[k];
      nb += tb[k] * tb[k];
    }
  }
  const double den = std::sqrt(std::max(na, nb));
  return den == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / den;
}

}  // namespace colab::oracle
