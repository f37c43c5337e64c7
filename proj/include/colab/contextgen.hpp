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

// Static context-label baselines. Each produces, per image, a t-channel
// context probability field q over the full image; the trainer crops it with
// the patch and aggregates it with the ROI label exactly like the generator's q.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "colab/error.hpp"
#include "colab/geometry.hpp"
#include "colab/grid.hpp"
#include "colab/log.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab {

enum class ContextKind { kNone, kKmeans, kDilated, kOracle, kColab };

inline std::string to_string(ContextKind k) {
  switch (k) {
    case ContextKind::kNone: return "none";
    case ContextKind::kKmeans: return "kmeans";
    case ContextKind::kDilated: return "dilated";
    case ContextKind::kOracle: return "oracle";
    case ContextKind::kColab: return "colab";
  }
  return "?";
}

inline ContextKind parse_context_kind(const std::string& s) {
  for (auto k : {ContextKind::kNone, ContextKind::kKmeans, ContextKind::kDilated, ContextKind::kOracle, ContextKind::kColab})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown arm '" + s + "' (expected none, kmeans, dilated, oracle or colab)");
}

/// A static context source: one [t,H,W] probability field per training image.
/// `distance_constrained` blends the aggregated label towards the far-field
/// label with the soft dilated mask, as the learned generator's labels are.
struct ContextSource {
  ContextKind kind = ContextKind::kNone;
  std::size_t t = 1;
  std::vector<Tensor> q;
  bool distance_constrained = false;
};

/// One-hot [t,H,W] field from an index map.
inline Tensor one_hot(const Grid<std::uint8_t>& labels, std::size_t t) {
  Tensor q(Shape{t, labels.height, labels.width}, 0.0);
  const std::size_t hw = labels.size();
  for (std::size_t p = 0; p < hw; ++p) {
    if (labels.data[p] >= t) throw ConfigError("one_hot: label out of range");
    q[labels.data[p] * hw + p] = 1.0;
  }
  return q;
}

// ---------------------------------------------------------------------------
// k-means on scalar intensities

struct KMeansResult {
  std::vector<double> centroids;  // ascending
  double sse = 0.0;
  std::vector<double> sse_trace;  // objective after each Lloyd iteration of the winning restart
};

namespace detail {

/// Index of the nearest centroid (ties to the lower index); centroids ascending.
inline std::size_t nearest(const std::vector<double>& c, double x) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < c.size(); ++j)
    if (std::abs(x - c[j]) < std::abs(x - c[best])) best = j;
  return best;
}

inline double sse_of(const std::vector<double>& sorted, const std::vector<double>& c) {
  double s = 0.0;
  for (double x : sorted) {
    const double d = x - c[nearest(c, x)];
    s += d * d;
  }
  return s;
}

inline KMeansResult lloyd(const std::vector<double>& sorted, std::vector<double> c, std::size_t max_iter) {
  KMeansResult r;
  std::sort(c.begin(), c.end());
  const std::size_t k = c.size();
  std::vector<double> prefix(sorted.size() + 1, 0.0);
  for (std::size_t i = 0; i < sorted.size(); ++i) prefix[i + 1] = prefix[i] + sorted[i];
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Segment boundaries in the sorted sample: x belongs to cluster j iff it is
    // nearest to c[j]; since c is ascending the clusters are contiguous.
    std::vector<std::size_t> bounds{0};
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double mid = 0.5 * (c[j] + c[j + 1]);
      auto pos = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin());
      // a sample exactly at the midpoint is equidistant only up to rounding; defer to nearest()
      while (pos > bounds.back() && nearest(c, sorted[pos - 1]) > j) --pos;
      while (pos < sorted.size() && nearest(c, sorted[pos]) <= j) ++pos;
      bounds.push_back(std::max(pos, bounds.back()));
    }
    bounds.push_back(sorted.size());
    std::vector<double> next = c;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t n = bounds[j + 1] - bounds[j];
      if (n > 0) next[j] = (prefix[bounds[j + 1]] - prefix[bounds[j]]) / static_cast<double>(n);
    }
    std::sort(next.begin(), next.end());
    r.sse_trace.push_back(sse_of(sorted, next));
    const bool converged = next == c;
    c = std::move(next);
    if (converged) break;
  }
  r.centroids = c;
  r.sse = r.sse_trace.empty() ? sse_of(sorted, c) : r.sse_trace.back();
  return r;
}

/// Hartigan single-point moves across the boundaries of contiguous clusters:
/// moving x from A to B lowers the SSE iff nB/(nB+1)(x-mB)^2 < nA/(nA-1)(x-mA)^2.
/// Escapes Lloyd fixed points that are off the optimum by boundary points.
inline bool hartigan_boundaries(const std::vector<double>& sorted, std::vector<double>& c) {
  const std::size_t k = c.size();
  std::vector<std::size_t> bounds{0};
  for (std::size_t j = 0; j + 1 < k; ++j) {
    std::size_t pos = bounds.back();
    while (pos < sorted.size() && nearest(c, sorted[pos]) <= j) ++pos;
    bounds.push_back(pos);
  }
  bounds.push_back(sorted.size());
  std::vector<double> n(k), mean(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    n[j] = static_cast<double>(bounds[j + 1] - bounds[j]);
    for (std::size_t i = bounds[j]; i < bounds[j + 1]; ++i) mean[j] += sorted[i];
    if (n[j] > 0) mean[j] /= n[j];
  }
  auto gain = [&](double x, std::size_t from, std::size_t to) {
    if (n[from] <= 1.0) return 0.0;
    const double out = n[from] / (n[from] - 1.0) * (x - mean[from]) * (x - mean[from]);
    const double in = n[to] / (n[to] + 1.0) * (x - mean[to]) * (x - mean[to]);
    return out - in;
  };
  auto move = [&](double x, std::size_t from, std::size_t to) {
    mean[from] = (mean[from] * n[from] - x) / (n[from] - 1.0);
    mean[to] = (mean[to] * n[to] + x) / (n[to] + 1.0);
    n[from] -= 1.0;
    n[to] += 1.0;
  };
  bool changed = false;
  for (bool again = true; again;) {
    again = false;
    for (std::size_t j = 0; j + 1 < k; ++j) {
      std::size_t& b = bounds[j + 1];
      while (b > bounds[j] && gain(sorted[b - 1], j, j + 1) > 1e-12) {
        move(sorted[b - 1], j, j + 1);
        --b;
        again = changed = true;
      }
      while (b < bounds[j + 2] && gain(sorted[b], j + 1, j) > 1e-12) {
        move(sorted[b], j + 1, j);
        ++b;
        again = changed = true;
      }
    }
  }
  if (changed) c = mean;
  return changed;
}

}  // namespace detail

/// 1-D k-means (quantile start plus k-means++ restarts, Lloyd iterations,
/// boundary refinement of the best run).
/// If the sample has fewer than t distinct values, t is reduced with a warning.
inline KMeansResult kmeans_1d(std::vector<double> samples, std::size_t t, std::uint64_t seed, std::size_t restarts = 10,
                              std::size_t max_iter = 200) {
  if (t < 2) throw ConfigError("kmeans: t must be >= 2");
  if (samples.empty()) throw ConfigError("kmeans: no samples");
  std::sort(samples.begin(), samples.end());
  std::vector<double> distinct;
  std::unique_copy(samples.begin(), samples.end(), std::back_inserter(distinct));
  if (distinct.size() < t) {
    log_warn("kmeans: only " + std::to_string(distinct.size()) + " distinct intensities; reducing t from " +
             std::to_string(t));
    t = distinct.size();
    if (t == 1) return KMeansResult{{distinct[0]}, 0.0, {0.0}};
  }
  // One deterministic start at evenly spaced quantiles, then k-means++ restarts.
  std::vector<double> quantiles;
  for (std::size_t j = 0; j < t; ++j)
    quantiles.push_back(samples[(2 * j + 1) * samples.size() / (2 * t)]);
  KMeansResult best = detail::lloyd(samples, quantiles, max_iter);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = Rng::keyed(seed, "kmeans/" + std::to_string(r));
    std::vector<double> c{samples[rng.below(samples.size())]};
    std::vector<double> d2(samples.size());
    while (c.size() < t) {
      double total = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (double cj : c) m = std::min(m, (samples[i] - cj) * (samples[i] - cj));
        d2[i] = m;
        total += m;
      }
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      for (; pick + 1 < samples.size(); ++pick) {
        if (d2[pick] > 0.0 && u < d2[pick]) break;
        u -= d2[pick];
      }
      while (d2[pick] == 0.0 && pick > 0) --pick;
      c.push_back(samples[pick]);
    }
    KMeansResult res = detail::lloyd(samples, std::move(c), max_iter);
    if (res.sse < best.sse) best = std::move(res);
  }
  // Polish the winner: alternate boundary moves and Lloyd until neither changes.
  for (std::vector<double> c = best.centroids; detail::hartigan_boundaries(samples, c);) {
    KMeansResult res = detail::lloyd(samples, c, max_iter);
    best.sse_trace.insert(best.sse_trace.end(), res.sse_trace.begin(), res.sse_trace.end());
    best.centroids = res.centroids;
    best.sse = res.sse;
    c = best.centroids;
  }
  return best;
}

struct KMeansContext {
  KMeansResult fit;
  std::size_t t = 0;
  std::vector<Grid<std::uint8_t>> labels;  // cluster index per pixel, 0 = darkest centroid
};

/// Dataset-global k-means on the background intensities inside each region
/// mask. Pixels inside the region get their nearest centroid; pixels outside
/// get the darkest cluster.
inline KMeansContext kmeans_context(const std::vector<Grid<double>>& images, const std::vector<Mask>& region,
                                    const std::vector<Mask>& roi, std::size_t t, std::uint64_t seed,
                                    std::size_t restarts = 10) {
  if (t < 2) throw ConfigError("kmeans_context: t must be >= 2");
  if (images.size() != region.size() || images.size() != roi.size()) {
    throw ShapeError("kmeans_context: images/masks count mismatch");
  }
  std::vector<double> samples;
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_grid(images[i], region[i], "kmeans_context");
    require_same_grid(images[i], roi[i], "kmeans_context");
    for (std::size_t p = 0; p < images[i].size(); ++p)
      if (region[i].data[p] && !roi[i].data[p]) samples.push_back(images[i].data[p]);
  }
  if (samples.empty()) throw ConfigError("kmeans_context: region masks contain no background pixels");
  KMeansContext out;
  out.fit = kmeans_1d(std::move(samples), t, seed, restarts);
  out.t = out.fit.centroids.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    Grid<std::uint8_t> lab(images[i].height, images[i].width, 0);
    for (std::size_t p = 0; p < lab.size(); ++p)
      if (region[i].data[p]) lab.data[p] = static_cast<std::uint8_t>(detail::nearest(out.fit.centroids, images[i].data[p]));
    out.labels.push_back(std::move(lab));
  }
  return out;
}

/// q = (1 - M, M): the near-ROI band is the second context class.
inline Tensor dilated_mask_context(const Mask& roi, double m, double tau) {
  const std::size_t H = roi.height, W = roi.width, hw = H * W;
  auto d = distance_map(roi);
  SoftMask M = d ? soft_dilated_mask(*d, m, tau) : empty_soft_mask(H, W, m, tau);
  Tensor q(Shape{2, H, W});
  for (std::size_t p = 0; p < hw; ++p) {
    q[p] = 1.0 - M.values.data[p];
    q[hw + p] = M.values.data[p];
  }
  return q;
}

/// Hard two-class context from an anatomy mask: class 0 = organ minus ROI,
/// class 1 = everything else. ROI pixels are left to the aggregation step.
inline Tensor oracle_context(const Mask& organ, const Mask& roi, std::size_t t = 2) {
  if (t != 2) throw ConfigError("oracle_context: only t = 2 (organ vs rest) is supported");
  require_same_grid(organ, roi, "oracle_context");
  bool superset = true;
  Grid<std::uint8_t> lab(organ.height, organ.width, 1);
  for (std::size_t p = 0; p < lab.size(); ++p) {
    if (roi.data[p] && !organ.data[p]) superset = false;
    if (organ.data[p] && !roi.data[p]) lab.data[p] = 0;
  }
  if (!superset) log_warn("oracle_context: organ mask does not contain the ROI; using the set difference");
  return one_hot(lab, 2);
}

}  // namespace colab
