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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "colab/error.hpp"
#include "colab/geometry.hpp"
#include "colab/grid.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab {

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const Mask& pred, const Mask& gt) {
  require_same_grid(pred, gt, "confusion");
  Confusion c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Empty-mask conventions: with an empty ground truth, dsc/sen/prc are 1 when the
// prediction is also empty and dsc/prc are 0 otherwise (sen stays 1: nothing to
// miss). With an empty prediction and non-empty ground truth, prc is 0.

inline double dsc(const Confusion& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double sen(const Confusion& c) {
  return c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

inline double prc(const Confusion& c) {
  if (c.tp + c.fp == 0) return c.fn == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}

/// Foreground pixels with at least one background 8-neighbour (outside the grid counts as background).
inline Mask surface(const Mask& m) {
  Mask s(m.height, m.width);
  const auto H = static_cast<std::ptrdiff_t>(m.height), W = static_cast<std::ptrdiff_t>(m.width);
  for (std::ptrdiff_t y = 0; y < H; ++y)
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      if (!m(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx) {
          const auto yy = y + dy, xx = x + dx;
          edge = yy < 0 || xx < 0 || yy >= H || xx >= W || !m(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
        }
      s(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = edge;
    }
  return s;
}

/// Linear-interpolation percentile (q in [0,1]) of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

struct HausdorffResult {
  double value = 0.0;
  bool empty = false;  // a mask was empty; value is the image diagonal
};

/// 95th percentile of the pooled surface-to-surface nearest distances in both directions.
inline HausdorffResult hd95(const Mask& pred, const Mask& gt) {
  require_same_grid(pred, gt, "hd95");
  const Mask sp = surface(pred), sg = surface(gt);
  auto dp = distance_map(sp);
  auto dg = distance_map(sg);
  if (!dp || !dg) {
    const double diag = std::hypot(static_cast<double>(gt.height), static_cast<double>(gt.width));
    return {diag, true};
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < sp.size(); ++i)
    if (sp.data[i]) d.push_back(dg->d.data[i]);
  for (std::size_t i = 0; i < sg.size(); ++i)
    if (sg.data[i]) d.push_back(dp->d.data[i]);
  return {percentile(std::move(d), 0.95), false};
}

/// Keep only the largest 8-connected region of nonzero labels (all classes
/// taken as a whole). Ties go to the component found first in raster order.
inline Grid<std::uint8_t> largest_component(const Grid<std::uint8_t>& pred) {
  const std::size_t H = pred.height, W = pred.width;
  Grid<int> label(H, W, -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < pred.size(); ++start) {
    if (!pred.data[start] || label.data[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t n = 0;
    stack.push_back(start);
    label.data[start] = id;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++n;
      const auto y = static_cast<std::ptrdiff_t>(p / W), x = static_cast<std::ptrdiff_t>(p % W);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(H) || xx >= static_cast<std::ptrdiff_t>(W)) continue;
          const auto q = static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx);
          if (pred.data[q] && label.data[q] < 0) {
            label.data[q] = id;
            stack.push_back(q);
          }
        }
    }
    sizes.push_back(n);
  }
  Grid<std::uint8_t> out(H, W, 0);
  if (sizes.empty()) return out;
  std::size_t best = 0;
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] > sizes[best]) best = i;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (label.data[i] == static_cast<int>(best)) out.data[i] = pred.data[i];
  return out;
}

/// ROI prediction from [K,H,W] logits: z_0 > max(z_1..z_{K-1}); ties go to background.
inline Mask predict_roi(const Tensor& logits) {
  const std::size_t r = logits.rank();
  if (r < 3) throw ShapeError("predict_roi: expected [K,H,W], got " + to_string(logits.shape()));
  const std::size_t K = logits.dim(r - 3), H = logits.dim(r - 2), W = logits.dim(r - 1), hw = H * W;
  Mask m(H, W);
  for (std::size_t p = 0; p < hw; ++p) {
    double rest = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < K; ++k) rest = std::max(rest, logits[k * hw + p]);
    m.data[p] = logits[p] > rest;
  }
  return m;
}

struct MetricsRecord {
  std::size_t case_id = 0;
  Confusion counts;
  double dsc = 0.0, sen = 0.0, prc = 0.0, hd95 = 0.0;
  bool hd95_empty = false;
};

inline MetricsRecord evaluate_case(std::size_t case_id, const Mask& pred, const Mask& gt) {
  MetricsRecord r;
  r.case_id = case_id;
  r.counts = confusion(pred, gt);
  r.dsc = dsc(r.counts);
  r.sen = sen(r.counts);
  r.prc = prc(r.counts);
  const HausdorffResult h = hd95(pred, gt);
  r.hd95 = h.value;
  r.hd95_empty = h.empty;
  return r;
}

struct LogitSample {
  int label = 0;         // 1 = ROI pixel, 0 = background
  double z_roi = 0.0;    // z_1
  double z_other = 0.0;  // max(z_2..z_{t+1})
};

/// Stratified uniform pixel sample (with replacement) from [K,H,W] logits:
/// round(n * roi_share) ROI pixels, the rest background, pooled over cases.
inline std::vector<LogitSample> export_logits(const std::vector<Tensor>& logits, const std::vector<Mask>& gt,
                                              std::size_t n_samples, Rng& rng, double roi_share = 0.5) {
  if (logits.size() != gt.size()) throw ShapeError("export_logits: logits/mask count mismatch");
  std::vector<std::pair<std::size_t, std::size_t>> roi_px, bg_px;
  for (std::size_t c = 0; c < gt.size(); ++c)
    for (std::size_t p = 0; p < gt[c].size(); ++p) (gt[c].data[p] ? roi_px : bg_px).emplace_back(c, p);
  auto n_roi = static_cast<std::size_t>(std::llround(roi_share * static_cast<double>(n_samples)));
  if (roi_px.empty()) n_roi = 0;
  if (bg_px.empty()) n_roi = n_samples;
  std::vector<LogitSample> out;
  out.reserve(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k) {
    const auto& pool = k < n_roi ? roi_px : bg_px;
    const auto [c, p] = pool[rng.below(pool.size())];
    const Tensor& z = logits[c];
    const std::size_t K = z.dim(z.rank() - 3), hw = gt[c].size();
    LogitSample s;
    s.label = k < n_roi ? 1 : 0;
    s.z_roi = z[p];
    s.z_other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < K; ++j) s.z_other = std::max(s.z_other, z[j * hw + p]);
    out.push_back(s);
  }
  return out;
}

/// Fraction of background samples that sit on the ROI side of the decision boundary.
inline double background_fp_fraction(const std::vector<LogitSample>& samples) {
  std::size_t bg = 0, fp = 0;
  for (const auto& s : samples) {
    if (s.label != 0) continue;
    ++bg;
    fp += s.z_roi > s.z_other;
  }
  return bg == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(bg);
}

struct Histogram {
  double lo = 0.0, hi = 1.0;
  std::vector<std::vector<double>> per_class;  // [class][bin], each row sums to 1 (or all 0 when the class is absent)
};

/// Per-class normalized intensity histograms over the argmax classes of `labels`.
inline Histogram intensity_histogram(const Grid<double>& image, const Grid<std::uint8_t>& labels,
                                     std::size_t num_classes, std::size_t bins,
                                     std::optional<std::pair<double, double>> range = std::nullopt) {
  if (bins < 1) throw ConfigError("intensity_histogram: bins must be >= 1");
  require_same_grid(image, labels, "intensity_histogram");
  Histogram h;
  if (range) {
    h.lo = range->first;
    h.hi = range->second;
  } else {
    h.lo = *std::min_element(image.data.begin(), image.data.end());
    h.hi = *std::max_element(image.data.begin(), image.data.end());
  }
  h.per_class.assign(num_classes, std::vector<double>(bins, 0.0));
  std::vector<std::size_t> totals(num_classes, 0);
  const double width = h.hi - h.lo;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::size_t c = labels.data[i];
    if (c >= num_classes) throw ConfigError("intensity_histogram: label out of range");
    std::size_t b = 0;
    if (width > 0.0) {
      const double f = (image.data[i] - h.lo) / width;
      b = static_cast<std::size_t>(std::clamp(f * static_cast<double>(bins), 0.0, static_cast<double>(bins - 1)));
    }
    h.per_class[c][b] += 1.0;
    ++totals[c];
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (totals[c])
      for (double& v : h.per_class[c]) v /= static_cast<double>(totals[c]);
  return h;
}

}  // namespace colab
