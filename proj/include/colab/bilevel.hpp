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

// One-step bilevel approximation with a finite-difference hypergradient.
//
// The outer objective L_roi(theta*(omega)) is differentiated through a single
// unrolled inner step theta* = theta - alpha * grad_theta L_seg(theta, omega):
//
//   grad_omega L_roi(theta*) = -alpha * d/domega [grad_theta L_seg(theta, omega)]^T g,
//   g = grad_theta L_roi(theta*),
//
// and the mixed second derivative times g is replaced by a central difference
// of grad_omega L_seg along g:
//
//   [grad_omega L_seg(theta + eps g) - grad_omega L_seg(theta - eps g)] / (2 eps),
//   eps = eps_scale / |g|.
//
// Any problem type exposing the two first-order oracles below can be plugged in.

#include <cmath>
#include <concepts>

#include "colab/error.hpp"
#include "colab/log.hpp"
#include "colab/params.hpp"

namespace colab {

struct SegGrads {
  double loss = 0.0;
  GradientMap theta;
  GradientMap omega;
};

struct RoiGrads {
  double loss = 0.0;
  GradientMap theta;
};

template <class P>
concept BilevelProblem = requires(const P& p, const NetworkParams& theta, const NetworkParams& omega) {
  { p.seg_grads(theta, omega) } -> std::same_as<SegGrads>;
  { p.roi_grads(theta) } -> std::same_as<RoiGrads>;
};

inline bool all_finite(const GradientMap& g) {
  for (const auto& [_, t] : g)
    if (!t.all_finite()) return false;
  return true;
}

struct InnerStepResult {
  NetworkParams theta_star;
  double seg_loss = 0.0;
  double grad_norm = 0.0;
};

/// theta* = theta - alpha * grad_theta L_seg(theta, omega), plain gradient step on a copy.
template <BilevelProblem P>
InnerStepResult inner_step(const P& problem, const NetworkParams& theta, const NetworkParams& omega, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("inner_step: alpha must be non-negative");
  SegGrads g = problem.seg_grads(theta, omega);
  if (!all_finite(g.theta)) throw NumericError("inner_step: non-finite segmentation gradient");
  return {axpy(theta, -alpha, g.theta), g.loss, std::sqrt(squared_norm(g.theta))};
}

struct Hypergradient {
  GradientMap omega;     // estimate of grad_omega L_roi(theta*)
  double eps = 0.0;
  double roi_loss = 0.0;
  double roi_grad_norm = 0.0;
};

template <BilevelProblem P>
Hypergradient hypergradient(const P& problem, const NetworkParams& theta, const NetworkParams& theta_star,
                            const NetworkParams& omega, double alpha, double eps_scale = 0.01) {
  RoiGrads roi = problem.roi_grads(theta_star);
  if (!all_finite(roi.theta)) throw NumericError("hypergradient: non-finite ROI gradient");
  Hypergradient out;
  out.roi_loss = roi.loss;
  out.roi_grad_norm = std::sqrt(squared_norm(roi.theta));
  if (out.roi_grad_norm == 0.0) {
    log_warn("hypergradient: ROI gradient vanished; returning a zero hypergradient");
    for (const auto& [name, t] : omega) out.omega.emplace(name, Tensor(t.shape(), 0.0));
    return out;
  }
  out.eps = eps_scale / out.roi_grad_norm;
  const GradientMap plus = problem.seg_grads(axpy(theta, out.eps, roi.theta), omega).omega;
  const GradientMap minus = problem.seg_grads(axpy(theta, -out.eps, roi.theta), omega).omega;
  const double scale = -alpha / (2.0 * out.eps);
  for (const auto& [name, gp] : plus) {
    const Tensor& gm = minus.at(name);
    Tensor h(gp.shape());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = scale * (gp[i] - gm[i]);
    out.omega.emplace(name, std::move(h));
  }
  if (!all_finite(out.omega)) throw NumericError("hypergradient: non-finite estimate");
  return out;
}

}  // namespace colab
