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

// Label algebra on batched label fields. A label field is an NCHW tensor whose
// channels are ordered [ROI classes..., background/context classes...] and
// whose per-pixel values sum to one. Every op here is a graph op, so targets
// built from the task generator's output stay differentiable in its weights.

#include <cmath>
#include <string>
#include <vector>

#include "colab/autodiff.hpp"
#include "colab/error.hpp"
#include "colab/grid.hpp"
#include "colab/tensor.hpp"

namespace colab {

/// Largest deviation of a per-pixel channel sum from 1.
inline double max_sum_deviation(const Tensor& field) {
  if (field.rank() != 4) throw ShapeError("label field must be NCHW, got " + to_string(field.shape()));
  const std::size_t N = field.dim(0), C = field.dim(1), hw = field.dim(2) * field.dim(3);
  double worst = 0.0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < hw; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += field[(n * C + c) * hw + p];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  return worst;
}

/// One-hot [N,2,H,W] field from ROI masks: channel 0 = ROI, channel 1 = background.
inline Tensor one_hot_binary(const std::vector<Mask>& roi) {
  if (roi.empty()) throw ShapeError("one_hot_binary: empty batch");
  const std::size_t H = roi[0].height, W = roi[0].width, hw = H * W;
  Tensor y(Shape{roi.size(), 2, H, W});
  for (std::size_t n = 0; n < roi.size(); ++n) {
    require_same_grid(roi[0], roi[n], "one_hot_binary");
    for (std::size_t p = 0; p < hw; ++p) {
      const bool fg = roi[n].data[p] != 0;
      y[(n * 2) * hw + p] = fg ? 1.0 : 0.0;
      y[(n * 2 + 1) * hw + p] = fg ? 0.0 : 1.0;
    }
  }
  return y;
}

/// Context probabilities q = softmax(o) over the t generator channels.
inline Var context_probability(const Var& generator_logits) {
  if (generator_logits.value().rank() != 4) {
    throw ShapeError("context_probability: expected NCHW, got " + to_string(generator_logits.shape()));
  }
  if (generator_logits.shape()[1] < 2) {
    throw ConfigError("context_probability: need t >= 2 context channels, got " +
                      std::to_string(generator_logits.shape()[1]));
  }
  return softmax_channels(generator_logits);
}

/// Extended label for c classes (c-1 ROI channels first, background last) and
/// t context channels: ROI channels are copied from y, context channels take q
/// on pure-background pixels and 0 elsewhere. Result has c + t - 1 channels.
inline Var aggregate_multiclass(const Tensor& y, const Var& q, std::size_t c) {
  const Shape& ys = y.shape();
  const Shape& qs = q.shape();
  if (ys.size() != 4 || qs.size() != 4 || ys[1] != c || c < 2 || ys[0] != qs[0] || ys[2] != qs[2] || ys[3] != qs[3]) {
    throw ShapeError("aggregate_multiclass: y " + to_string(ys) + " and q " + to_string(qs) + " incompatible for c=" +
                     std::to_string(c));
  }
  const std::size_t N = ys[0], t = qs[1], hw = ys[2] * ys[3];
  Tensor background(qs, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < hw; ++p) {
      bool pure = true;
      for (std::size_t j = 0; j + 1 < c; ++j) pure = pure && y[(n * c + j) * hw + p] == 0.0;
      if (pure)
        for (std::size_t j = 0; j < t; ++j) background[(n * t + j) * hw + p] = 1.0;
    }
  Var context = q * Var::constant(std::move(background));
  Var roi = slice_channels(Var::constant(y), 0, c - 1);
  return concat_channels({roi, context});
}

/// Binary case: y = (ROI, background), result has t + 1 channels.
inline Var aggregate_binary(const Tensor& y, const Var& q) { return aggregate_multiclass(y, q, 2); }

/// Far-field label: one-hot on the first context channel (index c - 1).
inline Tensor background_hard_label(std::size_t t, std::size_t c = 2) {
  if (t < 2) throw ConfigError("background_hard_label: t must be >= 2");
  if (c < 2) throw ConfigError("background_hard_label: c must be >= 2");
  Tensor b(Shape{c + t - 1}, 0.0);
  b[c - 1] = 1.0;
  return b;
}

/// M * ytilde + (1 - M) * b per pixel. `mask` is [N,1,H,W] (or [N,H,W]).
inline Var distance_constrained_label(const Var& ytilde, const Tensor& b, const Tensor& mask) {
  const Shape& s = ytilde.shape();
  if (s.size() != 4 || b.size() != s[1] || mask.size() != s[0] * s[2] * s[3]) {
    throw ShapeError("distance_constrained_label: ytilde " + to_string(s) + ", b " + to_string(b.shape()) +
                     ", mask " + to_string(mask.shape()));
  }
  const std::size_t N = s[0], K = s[1], hw = s[2] * s[3];
  Tensor scale(s), offset(s);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t p = 0; p < hw; ++p) {
        const double m = mask[n * hw + p];
        scale[(n * K + k) * hw + p] = m;
        offset[(n * K + k) * hw + p] = (1.0 - m) * b[k];
      }
  return ytilde * Var::constant(std::move(scale)) + Var::constant(std::move(offset));
}

/// Channel argmax per pixel of a [K,H,W] or [1,K,H,W] field (ties to lower index).
inline Grid<std::uint8_t> argmax_labels(const Tensor& field) {
  const std::size_t r = field.rank();
  if (r != 3 && !(r == 4 && field.dim(0) == 1)) {
    throw ShapeError("argmax_labels: expected [K,H,W], got " + to_string(field.shape()));
  }
  const std::size_t K = field.dim(r - 3), H = field.dim(r - 2), W = field.dim(r - 1), hw = H * W;
  Grid<std::uint8_t> out(H, W);
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (field[k * hw + p] > field[best * hw + p]) best = k;
    out.data[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace colab
