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

#include "colab/metrics.hpp"
#include "oracles.hpp"

namespace colab {
namespace {

Mask from_rows(const std::vector<std::string>& rows) {
  Mask m(rows.size(), rows[0].size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x) m(y, x) = rows[y][x] == '#';
  return m;
}

TEST(Confusion, HandCase) {
  const Mask pred = from_rows({"##.", "...", "..."});
  const Mask gt = from_rows({"#..", "#..", "..."});
  const Confusion c = confusion(pred, gt);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 6u);
  EXPECT_DOUBLE_EQ(dsc(c), 0.5);
  EXPECT_DOUBLE_EQ(sen(c), 0.5);
  EXPECT_DOUBLE_EQ(prc(c), 0.5);
}

TEST(Confusion, EmptyMaskConventions) {
  const Mask empty(4, 4);
  Mask one(4, 4);
  one(1, 1) = 1;
  EXPECT_EQ(dsc(confusion(empty, empty)), 1.0);
  EXPECT_EQ(prc(confusion(empty, empty)), 1.0);
  EXPECT_EQ(dsc(confusion(one, empty)), 0.0);
  EXPECT_EQ(prc(confusion(one, empty)), 0.0);
  EXPECT_EQ(sen(confusion(one, empty)), 1.0);
  EXPECT_EQ(prc(confusion(empty, one)), 0.0);
  EXPECT_EQ(sen(confusion(empty, one)), 0.0);
}

TEST(Confusion, DiceIsHarmonicMeanOfSensitivityAndPrecision) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Mask p = oracle::random_mask(16, 16, 0.4, rng), g = oracle::random_mask(16, 16, 0.4, rng);
    const Confusion c = confusion(p, g);
    if (c.tp == 0) continue;
    const double s = sen(c), q = prc(c);
    EXPECT_NEAR(dsc(c), 2.0 * s * q / (s + q), 1e-12);
  }
}

TEST(Confusion, ShapeMismatchThrows) { EXPECT_THROW(confusion(Mask(3, 3), Mask(3, 4)), ShapeError); }

TEST(Surface, SolidSquare) {
  const Mask m = from_rows({".....", ".###.", ".###.", ".###.", "....."});
  const Mask s = surface(m);
  EXPECT_EQ(count(s), 8u);
  EXPECT_EQ(s(2, 2), 0);
}

TEST(Hd95, SinglePixelsFiveApart) {
  Mask a(10, 10), b(10, 10);
  a(1, 1) = 1;
  b(4, 5) = 1;
  const HausdorffResult h = hd95(a, b);
  EXPECT_FALSE(h.empty);
  EXPECT_DOUBLE_EQ(h.value, 5.0);
}

TEST(Hd95, IdenticalMasksGiveZero) {
  Rng rng(2);
  const Mask m = oracle::random_blobs(20, 20, 2, 5, rng);
  EXPECT_EQ(hd95(m, m).value, 0.0);
}

TEST(Hd95, MatchesBruteForce) {
  Rng rng(4);
  for (int i = 0; i < 40; ++i) {
    const Mask a = oracle::random_blobs(24, 24, 2, 6, rng), b = oracle::random_blobs(24, 24, 2, 6, rng);
    if (count(a) == 0 || count(b) == 0) continue;
    EXPECT_NEAR(hd95(a, b).value, oracle::brute_hd95(a, b), 1e-9);
  }
}

TEST(Hd95, EmptyMaskGivesDiagonal) {
  Mask a(6, 8), b(6, 8);
  a(2, 2) = 1;
  const HausdorffResult h = hd95(a, b);
  EXPECT_TRUE(h.empty);
  EXPECT_DOUBLE_EQ(h.value, 10.0);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(percentile({0.0, 10.0}, 0.95), 9.5);
  EXPECT_THROW(percentile({}, 0.5), Error);
}

TEST(LargestComponent, KeepsBiggerRegion) {
  const Mask m = from_rows({"##...#", "###..#", ".....#", "......"});
  const auto out = largest_component(m);
  EXPECT_EQ(count(out), 5u);
  EXPECT_EQ(out(0, 5), 0);
  EXPECT_EQ(out(1, 2), 1);
}

TEST(LargestComponent, DiagonalNeighboursConnect) {
  const Mask m = from_rows({"#...", ".#..", "..#.", "...."});
  EXPECT_EQ(count(largest_component(m)), 3u);
}

TEST(LargestComponent, NeverAddsPixels) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const Mask p = oracle::random_mask(16, 16, 0.3, rng), g = oracle::random_mask(16, 16, 0.3, rng);
    const Mask q = largest_component(p);
    for (std::size_t k = 0; k < p.size(); ++k) ASSERT_LE(q.data[k], p.data[k]);
    const Confusion a = confusion(p, g), b = confusion(q, g);
    EXPECT_LE(b.fp, a.fp);
    EXPECT_LE(b.tp, a.tp);
    EXPECT_EQ(b.tp + b.fn, a.tp + a.fn);
  }
}

TEST(PredictRoi, TiesGoToBackground) {
  Tensor z(Shape{3, 1, 3}, 0.0);
  z[0] = 2.0;  // roi wins
  z[1] = 1.0;  // tie with channel 2
  z[4] = 1.0;
  z[2] = 0.0;  // channel 1 wins
  z[5] = 0.5;
  const Mask m = predict_roi(z);
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{1, 0, 0}));
  EXPECT_THROW(predict_roi(Tensor(Shape{3, 3}, 0.0)), ShapeError);
}

TEST(ExportLogits, StrataAndRethreshold) {
  Rng rng(1);
  std::vector<Tensor> logits;
  std::vector<Mask> gt;
  for (int c = 0; c < 3; ++c) {
    Mask g = oracle::random_blobs(12, 12, 1, 4, rng);
    g(6, 6) = 1;
    Tensor z(Shape{3, 12, 12}, 0.0);
    for (std::size_t p = 0; p < 144; ++p) {
      z[p] = g.data[p] ? 2.0 : -1.0;
      z[144 + p] = 0.5;
      z[288 + p] = rng.uniform(-1.0, 1.0);
    }
    logits.push_back(std::move(z));
    gt.push_back(std::move(g));
  }
  Rng draw(2);
  const auto samples = export_logits(logits, gt, 1001, draw, 0.25);
  ASSERT_EQ(samples.size(), 1001u);
  std::size_t roi = 0;
  for (const auto& s : samples) {
    roi += s.label;
    EXPECT_EQ(s.z_roi, s.label ? 2.0 : -1.0);
    EXPECT_GE(s.z_other, 0.5);
  }
  EXPECT_EQ(roi, 250u);
  EXPECT_EQ(background_fp_fraction(samples), 0.0);

  for (auto& z : logits)
    for (std::size_t p = 0; p < 144; ++p) z[p] = 5.0;
  Rng again(2);
  EXPECT_EQ(background_fp_fraction(export_logits(logits, gt, 1001, again, 0.25)), 1.0);
}

TEST(IntensityHistogram, RowsNormalise) {
  Grid<double> img(2, 4);
  img.data = {0.0, 0.1, 0.5, 0.9, 1.0, 0.2, 0.6, 0.7};
  Grid<std::uint8_t> lab(2, 4);
  lab.data = {0, 0, 1, 1, 1, 0, 1, 1};
  const Histogram h = intensity_histogram(img, lab, 3, 2);
  EXPECT_EQ(h.lo, 0.0);
  EXPECT_EQ(h.hi, 1.0);
  EXPECT_EQ(h.per_class[0], (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(h.per_class[1], (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(h.per_class[2], (std::vector<double>{0.0, 0.0}));
}

TEST(IntensityHistogram, FixedRangeClampsOutliers) {
  Grid<double> img(1, 4);
  img.data = {-5.0, 0.3, 0.6, 5.0};
  Grid<std::uint8_t> lab(1, 4, 0);
  const Histogram h = intensity_histogram(img, lab, 1, 4, std::make_pair(0.0, 1.0));
  EXPECT_EQ(h.per_class[0], (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  lab.data[0] = 4;
  EXPECT_THROW(intensity_histogram(img, lab, 1, 4), ConfigError);
}

}  // namespace
}  // namespace colab
