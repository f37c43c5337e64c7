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

// Exact Euclidean distance maps and the soft dilated mask built on them.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "colab/error.hpp"
#include "colab/grid.hpp"

namespace colab {

/// Distance (in pixel units) from each pixel to the nearest ROI pixel; 0 inside.
struct DistanceField {
  Grid<double> d;
};

/// 1 where d < m, exp((m - d) / tau) elsewhere.
struct SoftMask {
  double m_margin = 0.0;
  double tau = 1.0;
  Grid<double> values;
};

struct PixelSpacing {
  double dy = 1.0;
  double dx = 1.0;
};

namespace detail {

/// One pass of the lower-envelope transform (Felzenszwalb & Huttenlocher):
/// out[q] = min_p (spacing * (q - p))^2 + f[p] over sites with finite f.
/// With unit spacing and integer f the result is exact.
inline void envelope_pass(const std::vector<double>& f, std::vector<double>& out, double spacing,
                          std::vector<std::size_t>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t n = f.size();
  const double s2 = spacing * spacing;
  v.clear();
  z.clear();
  for (std::size_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    const double fq = f[q] + s2 * static_cast<double>(q) * static_cast<double>(q);
    while (!v.empty()) {
      const std::size_t p = v.back();
      const double fp = f[p] + s2 * static_cast<double>(p) * static_cast<double>(p);
      const double s = (fq - fp) / (2.0 * s2 * static_cast<double>(q - p));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        v.push_back(q);
        z.push_back(s);
        break;
      }
    }
    if (v.empty()) {
      v.push_back(q);
      z.push_back(-inf);
    }
  }
  if (v.empty()) {
    std::fill(out.begin(), out.end(), inf);
    return;
  }
  std::size_t k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (k + 1 < v.size() && z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = spacing * (static_cast<double>(q) - static_cast<double>(v[k]));
    out[q] = diff * diff + f[v[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance to the nearest nonzero pixel of `mask`.
/// Returns nullopt when the mask is empty.
inline std::optional<Grid<double>> squared_distance_map(const Mask& mask, PixelSpacing spacing = {}) {
  if (count(mask) == 0) return std::nullopt;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t H = mask.height, W = mask.width;
  Grid<double> sq(H, W);
  std::vector<std::size_t> v;
  std::vector<double> z;

  std::vector<double> f(H), out(H);
  for (std::size_t x = 0; x < W; ++x) {
    for (std::size_t y = 0; y < H; ++y) f[y] = mask(y, x) ? 0.0 : inf;
    detail::envelope_pass(f, out, spacing.dy, v, z);
    for (std::size_t y = 0; y < H; ++y) sq(y, x) = out[y];
  }
  f.resize(W);
  out.resize(W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) f[x] = sq(y, x);
    detail::envelope_pass(f, out, spacing.dx, v, z);
    for (std::size_t x = 0; x < W; ++x) sq(y, x) = out[x];
  }
  return sq;
}

/// Distance map of an ROI mask (union of all foreground classes). nullopt means
/// "no ROI": the caller should fall back to the far-field background label.
inline std::optional<DistanceField> distance_map(const Mask& roi, PixelSpacing spacing = {}) {
  auto sq = squared_distance_map(roi, spacing);
  if (!sq) return std::nullopt;
  DistanceField df{std::move(*sq)};
  for (double& v : df.d.data) v = std::sqrt(v);
  return df;
}

inline double soft_mask_value(double d, double m, double tau) {
  return d < m ? 1.0 : std::exp((m - d) / tau);
}

inline SoftMask soft_dilated_mask(const DistanceField& d, double m, double tau) {
  if (!(tau > 0.0)) throw ConfigError("soft_dilated_mask: tau must be positive");
  if (!(m >= 0.0)) throw ConfigError("soft_dilated_mask: margin m must be non-negative");
  SoftMask out{m, tau, Grid<double>(d.d.height, d.d.width)};
  for (std::size_t i = 0; i < d.d.size(); ++i) out.values.data[i] = soft_mask_value(d.d.data[i], m, tau);
  return out;
}

/// Soft mask for an image without ROI: zero everywhere (pure far field).
inline SoftMask empty_soft_mask(std::size_t h, std::size_t w, double m, double tau) {
  return SoftMask{m, tau, Grid<double>(h, w, 0.0)};
}

}  // namespace colab
