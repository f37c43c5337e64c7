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
#include <filesystem>

#include <gtest/gtest.h>

#include "colab/metrics.hpp"
#include "colab/synthdata.hpp"

namespace colab {
namespace {

TaskSpec small_spec(std::uint64_t seed, std::size_t n_train = 8, std::size_t n_test = 4) {
  TaskSpec s;
  s.seed = seed;
  s.n_train = n_train;
  s.n_test = n_test;
  return s;
}

TEST(SynthData, DeterministicInSeed) {
  const Dataset a = generate_task(small_spec(3));
  const Dataset b = generate_task(small_spec(3));
  const Dataset c = generate_task(small_spec(4));
  ASSERT_EQ(a.train.size(), 8u);
  ASSERT_EQ(a.test.size(), 4u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].image, b.train[i].image);
    EXPECT_EQ(a.train[i].roi, b.train[i].roi);
    EXPECT_EQ(a.train[i].organ, b.train[i].organ);
  }
  EXPECT_NE(a.train[0].image, c.train[0].image);
}

TEST(SynthData, GeometryInvariantsOnThousandCases) {
  const Dataset ds = generate_task(small_spec(11, 1000, 0));
  for (const Case& c : ds.train) {
    ASSERT_GT(count(c.roi), 0u);
    ASSERT_GT(count(c.distractors), 0u);
    for (std::size_t i = 0; i < c.roi.size(); ++i) {
      ASSERT_FALSE(c.roi.data[i] && !c.organ.data[i]) << "roi outside organ in case " << c.id;
      ASSERT_FALSE(c.distractors.data[i] && c.organ.data[i]) << "distractor touches organ in case " << c.id;
    }
  }
}

TEST(SynthData, EmptyTestFraction) {
  TaskSpec s = small_spec(5, 2, 10);
  s.test_empty_fraction = 0.3;
  const Dataset ds = generate_task(s);
  std::size_t empty = 0;
  for (const Case& c : ds.test) empty += count(c.roi) == 0;
  EXPECT_EQ(empty, 3u);
}

// Without noise, ROI and distractors share one intensity, so thresholding
// cannot separate them while the organ mask can.
TEST(SynthData, IntensityAloneIsAmbiguous) {
  TaskSpec s = small_spec(7, 200, 0);
  s.noise_sigma = 0.0;
  const Dataset ds = generate_task(s);
  for (int step = 1; step <= 20; ++step) {
    const double thr = 0.05 * step;
    Confusion plain, gated;
    for (const Case& c : ds.train) {
      Mask p(c.roi.height, c.roi.width), g(c.roi.height, c.roi.width);
      for (std::size_t i = 0; i < p.size(); ++i) {
        p.data[i] = c.image[i] >= thr;
        g.data[i] = p.data[i] && c.organ.data[i];
      }
      const Confusion a = confusion(p, c.roi), b = confusion(g, c.roi);
      plain.tp += a.tp;
      plain.fp += a.fp;
      gated.tp += b.tp;
      gated.fp += b.fp;
    }
    ASSERT_GT(plain.tp, 0u);
    EXPECT_LT(prc(plain), 0.7) << "threshold " << thr;
    if (thr > s.mu_organ) {
      EXPECT_EQ(prc(gated), 1.0) << "threshold " << thr;
    }
  }
}

TEST(SynthData, RoiAndDistractorHistogramsOverlap) {
  const Dataset ds = generate_task(small_spec(9, 100, 0));
  const std::size_t bins = 32;
  std::vector<double> roi(bins, 0.0), dist(bins, 0.0);
  double n_roi = 0.0, n_dist = 0.0;
  for (const Case& c : ds.train) {
    Grid<double> img(c.roi.height, c.roi.width);
    Grid<std::uint8_t> lab(c.roi.height, c.roi.width, 0);
    for (std::size_t i = 0; i < img.size(); ++i) {
      img.data[i] = c.image[i];
      lab.data[i] = c.roi.data[i] ? 1 : (c.distractors.data[i] ? 2 : 0);
    }
    const Histogram h = intensity_histogram(img, lab, 3, bins, std::make_pair(0.5, 1.5));
    const double r = static_cast<double>(count(c.roi)), d = static_cast<double>(count(c.distractors));
    for (std::size_t b = 0; b < bins; ++b) {
      roi[b] += r * h.per_class[1][b];
      dist[b] += d * h.per_class[2][b];
    }
    n_roi += r;
    n_dist += d;
  }
  double bc = 0.0;
  for (std::size_t b = 0; b < bins; ++b) bc += std::sqrt(roi[b] / n_roi * dist[b] / n_dist);
  EXPECT_GT(bc, 0.9);
}

TEST(SynthData, InfeasibleGeometryThrows) {
  TaskSpec s = small_spec(1, 1, 0);
  s.organ_radius = {2.0, 2.0};
  s.roi_radius = {5.0, 5.0};
  EXPECT_THROW(generate_task(s), ConfigError);
}

TEST(SynthData, InvalidSpecThrows) {
  TaskSpec s = small_spec(1);
  s.mu_bg = s.mu_roi;
  EXPECT_THROW(generate_task(s), ConfigError);
  s = small_spec(1);
  s.roi_radius = {3.0, 2.0};
  EXPECT_THROW(generate_task(s), ConfigError);
}

TEST(SampleBatch, RoiCentredPatchesContainRoi) {
  const Dataset ds = generate_task(small_spec(2));
  Rng rng(5);
  for (int it = 0; it < 50; ++it) {
    const Batch b = sample_batch(ds.train, 4, 1.0, 32, 4.0, rng);
    ASSERT_EQ(b.images.shape(), (Shape{4, 1, 32, 32}));
    for (std::size_t k = 0; k < b.size(); ++k) {
      EXPECT_TRUE(b.roi_centered[k]);
      EXPECT_GT(count(b.roi[k]), 0u);
    }
  }
}

TEST(SampleBatch, ZeroFractionIsUniform) {
  const Dataset ds = generate_task(small_spec(2));
  Rng rng(6);
  std::vector<std::size_t> hits(ds.train.size(), 0);
  for (int it = 0; it < 400; ++it) {
    const Batch b = sample_batch(ds.train, 5, 0.0, 32, 4.0, rng);
    for (std::size_t k = 0; k < b.size(); ++k) {
      EXPECT_FALSE(b.roi_centered[k]);
      ++hits[b.case_index[k]];
    }
  }
  for (std::size_t h : hits) EXPECT_NEAR(static_cast<double>(h) / 2000.0, 1.0 / 8.0, 0.03);
}

TEST(SampleBatch, EmpiricalFractionMatches) {
  const Dataset ds = generate_task(small_spec(2));
  for (double f : {0.1, 0.25, 0.5, 0.73, 0.9}) {
    Rng rng(7);
    std::size_t centred = 0, total = 0;
    for (int it = 0; it < 100; ++it) {
      const Batch b = sample_batch(ds.train, 100, f, 16, 4.0, rng);
      for (bool c : b.roi_centered) centred += c;
      total += b.size();
    }
    EXPECT_EQ(total, 10000u);
    EXPECT_NEAR(static_cast<double>(centred) / static_cast<double>(total), f, 0.01);
  }
}

TEST(SampleBatch, CropsMatchSource) {
  const Dataset ds = generate_task(small_spec(2));
  Rng rng(8);
  const Batch b = sample_batch(ds.train, 6, 0.5, 24, 3.0, rng);
  for (std::size_t k = 0; k < b.size(); ++k) {
    const Case& c = ds.train[b.case_index[k]];
    for (std::size_t y = 0; y < 24; ++y)
      for (std::size_t x = 0; x < 24; ++x) {
        const std::size_t src = (b.y0[k] + y) * c.roi.width + b.x0[k] + x;
        ASSERT_EQ(b.images[k * 576 + y * 24 + x], c.image[src]);
        ASSERT_EQ(b.roi[k](y, x), c.roi.data[src]);
      }
  }
}

TEST(SampleBatch, RejectsBadArguments) {
  const Dataset ds = generate_task(small_spec(2));
  Rng rng(1);
  EXPECT_THROW(sample_batch(ds.train, 2, 1.5, 16, 1.0, rng), ConfigError);
  EXPECT_THROW(sample_batch(ds.train, 2, 0.5, 65, 1.0, rng), ConfigError);
  EXPECT_THROW(sample_batch({}, 2, 0.5, 16, 1.0, rng), ConfigError);
}

TEST(SynthData, SaveLoadRoundTrip) {
  const Dataset ds = generate_task(small_spec(12, 3, 2));
  const auto dir = std::filesystem::temp_directory_path() / "colab_synth_roundtrip";
  std::filesystem::remove_all(dir);
  save_dataset(ds, dir);
  const Dataset back = load_dataset(dir);
  EXPECT_EQ(back.spec.seed, 12u);
  ASSERT_EQ(back.train.size(), 3u);
  ASSERT_EQ(back.test.size(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.train[i].image, ds.train[i].image);
    EXPECT_EQ(back.train[i].roi, ds.train[i].roi);
    EXPECT_EQ(back.train[i].organ, ds.train[i].organ);
  }
  EXPECT_EQ(back.test[1].image, ds.test[1].image);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace colab
