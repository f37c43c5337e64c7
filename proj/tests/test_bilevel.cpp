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

#include <cmath>

#include <gtest/gtest.h>

#include "bilevel_problems.hpp"
#include "colab/bilevel.hpp"
#include "oracles.hpp"

namespace colab {
namespace {

using oracle::ScalarToy;

TEST(InnerStep, ZeroStepLeavesThetaUnchanged) {
  const ScalarToy toy;
  const auto theta = ScalarToy::scalar("x", 2.0);
  EXPECT_EQ(inner_step(toy, theta, ScalarToy::scalar("w", 0.0), 0.0).theta_star, theta);
}

TEST(InnerStep, QuadraticToyGivesOne) {
  const ScalarToy toy;
  const auto theta = ScalarToy::scalar("x", 2.0);
  const InnerStepResult r = inner_step(toy, theta, ScalarToy::scalar("w", 0.0), 0.5);
  EXPECT_DOUBLE_EQ(r.theta_star.at("x").item(), 1.0);
  EXPECT_DOUBLE_EQ(theta.at("x").item(), 2.0);
}

TEST(InnerStep, StepLengthIsAlphaTimesGradNorm) {
  auto pair = oracle::make_conv_pair(3);
  const double alpha = 0.3;
  const InnerStepResult r = inner_step(*pair.problem, pair.theta, pair.omega, alpha);
  GradientMap diff;
  for (const auto& [name, t] : r.theta_star) {
    Tensor d = t;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= pair.theta.at(name)[i];
    diff.emplace(name, d);
  }
  EXPECT_NEAR(std::sqrt(squared_norm(diff)), alpha * r.grad_norm, 1e-12 * r.grad_norm);
}

TEST(Hypergradient, QuadraticToyValue) {
  const ScalarToy toy;
  const auto theta = ScalarToy::scalar("x", 2.0), omega = ScalarToy::scalar("w", 0.0);
  const InnerStepResult inner = inner_step(toy, theta, omega, 0.5);
  const Hypergradient h = hypergradient(toy, theta, inner.theta_star, omega, 0.5);
  // theta* = theta - alpha (theta - w), d theta*/dw = alpha, dL/dw = theta* alpha = 0.5.
  EXPECT_NEAR(h.omega.at("w").item(), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(h.eps, 0.01);
  const GradientMap oracle = oracle::composite_hypergradient(toy, theta, omega, 0.5);
  EXPECT_NEAR(oracle.at("w").item(), 0.5, 1e-8);
  EXPECT_LE(oracle::map_rel_err(h.omega, oracle), 1e-3);
}

TEST(Hypergradient, UncoupledSegLossGivesZero) {
  struct Uncoupled {
    SegGrads seg_grads(const NetworkParams& t, const NetworkParams&) const {
      const double x = t.at("x").item();
      return {0.5 * x * x, ScalarToy::scalar("x", x), ScalarToy::scalar("w", 0.0)};
    }
    RoiGrads roi_grads(const NetworkParams& t) const {
      return {0.0, ScalarToy::scalar("x", t.at("x").item())};
    }
  } p;
  const auto theta = ScalarToy::scalar("x", 1.5), omega = ScalarToy::scalar("w", 0.3);
  const Hypergradient h = hypergradient(p, theta, inner_step(p, theta, omega, 0.1).theta_star, omega, 0.1);
  EXPECT_EQ(h.omega.at("w").item(), 0.0);
}

TEST(Hypergradient, VanishingRoiGradientGivesZero) {
  const ScalarToy toy;
  const Hypergradient h =
      hypergradient(toy, ScalarToy::scalar("x", 0.0), ScalarToy::scalar("x", 0.0), ScalarToy::scalar("w", 0.0), 0.5);
  EXPECT_EQ(h.omega.at("w").item(), 0.0);
  EXPECT_EQ(h.eps, 0.0);
}

TEST(Hypergradient, NanAborts) {
  const ScalarToy toy;
  EXPECT_THROW(hypergradient(toy, ScalarToy::scalar("x", 1.0), ScalarToy::scalar("x", std::nan("")),
                             ScalarToy::scalar("w", 0.0), 0.5),
               NumericError);
}

TEST(Hypergradient, RichardsonRatioOnNonQuadraticToy) {
  // Central differences of a cubic gradient have error exactly K eps^2, so
  // halving eps shrinks the change by a factor of four.
  const ScalarToy toy{0.7};
  const auto theta = ScalarToy::scalar("x", 1.3), omega = ScalarToy::scalar("w", -0.4);
  const auto theta_star = inner_step(toy, theta, omega, 0.5).theta_star;
  auto est = [&](double scale) { return hypergradient(toy, theta, theta_star, omega, 0.5, scale).omega.at("w").item(); };
  const double e1 = est(0.2), e2 = est(0.1), e4 = est(0.05);
  const double d1 = std::abs(e1 - e2), d2 = std::abs(e2 - e4);
  EXPECT_GT(d1, 0.0);
  EXPECT_LE(d1, 4.0 * d2 * (1.0 + 1e-3));
  EXPECT_NEAR(d1 / d2, 4.0, 1e-3);
}

TEST(Hypergradient, ConvPairMatchesCompositeOracle) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto pair = oracle::make_conv_pair(seed);
    EXPECT_LE(count_parameters(pair.theta) + count_parameters(pair.omega), 500u);
    const double alpha = 0.5;
    const InnerStepResult inner = inner_step(*pair.problem, pair.theta, pair.omega, alpha);
    const Hypergradient h = hypergradient(*pair.problem, pair.theta, inner.theta_star, pair.omega, alpha);
    const GradientMap oracle = oracle::composite_hypergradient(*pair.problem, pair.theta, pair.omega, alpha);
    const double err = oracle::map_rel_err(h.omega, oracle);
    EXPECT_LE(err, 5e-2) << "seed " << seed;
    EXPECT_GT(std::sqrt(squared_norm(oracle)), 0.0);
  }
}

}  // namespace
}  // namespace colab
