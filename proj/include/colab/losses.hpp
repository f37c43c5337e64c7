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

#include <map>
#include <string>
#include <vector>

#include "colab/autodiff.hpp"
#include "colab/error.hpp"

namespace colab {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-7;
/// Additive smoothing of the soft Dice ratio.
inline constexpr double kDiceSmooth = 1e-5;

struct LossValue {
  Var total;
  std::map<std::string, double> breakdown;
};

/// Cross entropy with soft targets: -mean over pixels of sum_j y_j log p_j.
inline Var ce(const Var& p, const Var& y_soft) {
  if (p.shape() != y_soft.shape() || p.value().rank() != 4) {
    throw ShapeError("ce: probabilities " + to_string(p.shape()) + " vs target " + to_string(y_soft.shape()));
  }
  const Shape& s = p.shape();
  const double pixels = static_cast<double>(s[0] * s[2] * s[3]);
  return sum(y_soft * log(clamp(p, kProbFloor, 1.0 - kProbFloor))) * (-1.0 / pixels);
}

/// Mean soft Dice coefficient, computed per sample and class then averaged.
inline Var soft_dice(const Var& p, const Var& y_soft) {
  if (p.shape() != y_soft.shape() || p.value().rank() != 4) {
    throw ShapeError("soft_dice: probabilities " + to_string(p.shape()) + " vs target " + to_string(y_soft.shape()));
  }
  Var inter = sum_spatial(p * y_soft) * 2.0 + kDiceSmooth;
  Var denom = sum_spatial(p) + sum_spatial(y_soft) + kDiceSmooth;
  return mean(inter / denom);
}

/// Binary cross entropy, averaged over all elements.
inline Var bce(const Var& p, const Var& y) {
  if (p.shape() != y.shape()) throw ShapeError("bce: " + to_string(p.shape()) + " vs " + to_string(y.shape()));
  Var pc = clamp(p, kProbFloor, 1.0 - kProbFloor);
  Var one_minus_y = y * -1.0 + 1.0;
  Var one_minus_p = pc * -1.0 + 1.0;
  return mean(y * log(pc) + one_minus_y * log(one_minus_p)) * -1.0;
}

/// CE + (1 - soft Dice) with equal weight, on softmax(logits) against a soft target.
inline LossValue seg_loss(const Var& logits, const Var& target) {
  if (logits.shape() != target.shape()) {
    throw ShapeError("seg_loss: logits " + to_string(logits.shape()) + " vs target " + to_string(target.shape()));
  }
  Var p = softmax_channels(logits);
  Var ce_term = ce(p, target);
  Var dice_term = soft_dice(p, target) * -1.0 + 1.0;
  LossValue out{ce_term + dice_term, {}};
  out.breakdown["ce"] = ce_term.value().item();
  out.breakdown["dice"] = dice_term.value().item();
  return out;
}

/// One-versus-all ROI loss: BCE between the softmax probability of each ROI
/// channel (normalized over all K logits) and its ground truth. `y_roi` holds
/// one channel per entry of `channels`; by default all foreground channels
/// 0..y_roi.channels-1 are used.
inline LossValue roi_loss(const Var& logits, const Tensor& y_roi, std::vector<std::size_t> channels = {}) {
  const Shape& s = logits.shape();
  if (s.size() != 4 || s[1] < 2) throw ShapeError("roi_loss: need NCHW logits with K >= 2, got " + to_string(s));
  if (y_roi.rank() != 4 || y_roi.dim(0) != s[0] || y_roi.dim(2) != s[2] || y_roi.dim(3) != s[3]) {
    throw ShapeError("roi_loss: logits " + to_string(s) + " vs ROI target " + to_string(y_roi.shape()));
  }
  if (channels.empty())
    for (std::size_t c = 0; c < y_roi.dim(1); ++c) channels.push_back(c);
  if (channels.size() != y_roi.dim(1)) throw ShapeError("roi_loss: channel list does not match ROI target");
  Var p = softmax_channels(logits);
  std::vector<Var> picked;
  for (std::size_t c : channels) {
    if (c + 1 >= s[1]) throw ShapeError("roi_loss: channel " + std::to_string(c) + " is not a ROI channel");
    picked.push_back(slice_channels(p, c, c + 1));
  }
  Var p_roi = picked.size() == 1 ? picked[0] : concat_channels(picked);
  Var loss = bce(p_roi, Var::constant(y_roi));
  LossValue out{loss, {}};
  out.breakdown["roi"] = loss.value().item();
  return out;
}

}  // namespace colab
