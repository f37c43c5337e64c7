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

// Seeded generator of 2-D segmentation tasks. Each image holds an elliptical
// "organ" with a bright ROI blob strictly inside it, and ROI-like distractor
// blobs (same intensity) strictly outside it, over a cluttered background. A
// pixel classifier that only looks at intensity over-segments; telling ROI
// from distractor requires the surrounding context.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colab/error.hpp"
#include "colab/geometry.hpp"
#include "colab/grid.hpp"
#include "colab/io.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Range, lo, hi)

struct TaskSpec {
  std::size_t image_size = 64;
  Range organ_radius{13.0, 20.0};
  Range roi_radius{2.5, 5.0};
  double mu_roi = 1.0;
  std::size_t distractors_min = 1;
  std::size_t distractors_max = 3;
  Range distractor_radius{2.5, 5.0};
  double mu_dist = 1.0;
  double mu_organ = 0.45;
  double mu_bg = 0.0;
  std::size_t clutter_min = 2;
  std::size_t clutter_max = 4;
  Range clutter_radius{4.0, 10.0};
  Range clutter_intensity{0.2, 0.7};
  double noise_sigma = 0.08;
  std::size_t n_train = 40;
  std::size_t n_test = 20;
  double test_empty_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (image_size < 16) throw ConfigError("TaskSpec.image_size must be >= 16");
    if (mu_roi == mu_bg) throw ConfigError("TaskSpec: mu_roi must differ from mu_bg");
    if (distractors_min > distractors_max) throw ConfigError("TaskSpec: distractors_min > distractors_max");
    if (clutter_min > clutter_max) throw ConfigError("TaskSpec: clutter_min > clutter_max");
    for (const Range* r : {&organ_radius, &roi_radius, &distractor_radius, &clutter_radius}) {
      if (!(r->lo > 0.0 && r->lo <= r->hi)) throw ConfigError("TaskSpec: radius ranges need 0 < lo <= hi");
    }
    if (roi_radius.lo + 1.0 >= organ_radius.hi) {
      throw ConfigError("TaskSpec: infeasible geometry, the ROI cannot fit strictly inside the organ");
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("TaskSpec.noise_sigma must be >= 0");
    if (n_train == 0) throw ConfigError("TaskSpec.n_train must be positive");
    if (!(test_empty_fraction >= 0.0 && test_empty_fraction <= 1.0)) {
      throw ConfigError("TaskSpec.test_empty_fraction must lie in [0, 1]");
    }
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TaskSpec, image_size, organ_radius, roi_radius, mu_roi, distractors_min,
                                                distractors_max, distractor_radius, mu_dist, mu_organ, mu_bg,
                                                clutter_min, clutter_max, clutter_radius, clutter_intensity,
                                                noise_sigma, n_train, n_test, test_empty_fraction, seed)

struct Case {
  std::size_t id = 0;
  Tensor image;  // [1,H,W]
  Mask roi;
  Mask organ;
  Mask distractors;
};

struct Dataset {
  TaskSpec spec;
  std::vector<Case> train;
  std::vector<Case> test;
};

namespace detail {

struct Ellipse {
  double cy, cx, ry, rx, angle;
  bool contains(double y, double x) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (x - cx) * c + (y - cy) * s;
    const double v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
  }
};

inline Mask rasterize(const Ellipse& e, std::size_t size) {
  Mask m(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) m(y, x) = e.contains(static_cast<double>(y), static_cast<double>(x));
  return m;
}

inline Ellipse random_ellipse(Rng& rng, const Range& radius, double size, double border) {
  Ellipse e{};
  e.ry = radius.draw(rng);
  e.rx = radius.draw(rng);
  const double r = std::max(e.ry, e.rx) + border;
  e.cy = rng.uniform(r, size - 1.0 - r);
  e.cx = rng.uniform(r, size - 1.0 - r);
  e.angle = rng.uniform(0.0, std::numbers::pi);
  return e;
}

/// Dilate by one pixel (8-connectivity).
inline Mask dilate(const Mask& m, std::size_t times = 1) {
  Mask cur = m;
  for (std::size_t it = 0; it < times; ++it) {
    Mask next = cur;
    for (std::size_t y = 0; y < m.height; ++y)
      for (std::size_t x = 0; x < m.width; ++x) {
        if (!cur(y, x)) continue;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy >= 0 && xx >= 0 && yy < static_cast<std::ptrdiff_t>(m.height) &&
                xx < static_cast<std::ptrdiff_t>(m.width))
              next(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) = 1;
          }
      }
    cur = std::move(next);
  }
  return cur;
}

inline bool disjoint(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data[i] && b.data[i]) return false;
  return true;
}

inline bool subset(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

inline constexpr int kMaxRejections = 1000;

inline Case generate_case(const TaskSpec& spec, std::size_t id, bool with_roi) {
  Rng rng = Rng::keyed(spec.seed, "case/" + std::to_string(id));
  const std::size_t S = spec.image_size;
  const double size = static_cast<double>(S);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    Case c;
    c.id = id;
    const Ellipse organ = random_ellipse(rng, spec.organ_radius, size, 1.0);
    c.organ = rasterize(organ, S);
    const Mask organ_halo = dilate(c.organ, 2);

    c.roi = Mask(S, S);
    if (with_roi) {
      bool placed = false;
      for (int k = 0; k < kMaxRejections && !placed; ++k) {
        Ellipse roi = random_ellipse(rng, spec.roi_radius, size, 1.0);
        roi.cy = organ.cy + rng.uniform(-organ.ry, organ.ry);
        roi.cx = organ.cx + rng.uniform(-organ.rx, organ.rx);
        Mask m = rasterize(roi, S);
        // strictly inside: the ROI plus a one-pixel ring lies in the organ
        if (count(m) > 0 && subset(dilate(m), c.organ)) {
          c.roi = std::move(m);
          placed = true;
        }
      }
      if (!placed) continue;
    }

    std::vector<std::pair<Mask, double>> clutter;
    const std::size_t n_clutter = spec.clutter_min + rng.below(spec.clutter_max - spec.clutter_min + 1);
    for (std::size_t k = 0; k < n_clutter; ++k) {
      for (int tries = 0; tries < 50; ++tries) {
        Mask m = rasterize(random_ellipse(rng, spec.clutter_radius, size, 0.0), S);
        if (count(m) > 0 && disjoint(m, organ_halo)) {
          clutter.emplace_back(std::move(m), spec.clutter_intensity.draw(rng));
          break;
        }
      }
    }

    c.distractors = Mask(S, S);
    const std::size_t n_dist = spec.distractors_min + rng.below(spec.distractors_max - spec.distractors_min + 1);
    std::size_t placed_dist = 0;
    for (int k = 0; k < kMaxRejections && placed_dist < n_dist; ++k) {
      Mask m = rasterize(random_ellipse(rng, spec.distractor_radius, size, 1.0), S);
      if (count(m) > 0 && disjoint(m, organ_halo) && disjoint(dilate(m), c.distractors)) {
        for (std::size_t i = 0; i < m.size(); ++i) c.distractors.data[i] |= m.data[i];
        ++placed_dist;
      }
    }
    if (placed_dist < n_dist) continue;

    c.image = Tensor(Shape{1, S, S}, spec.mu_bg);
    for (const auto& [m, mu] : clutter)
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m.data[i]) c.image[i] = mu;
    for (std::size_t i = 0; i < S * S; ++i) {
      if (c.organ.data[i]) c.image[i] = spec.mu_organ;
      if (c.roi.data[i]) c.image[i] = spec.mu_roi;
      if (c.distractors.data[i]) c.image[i] = spec.mu_dist;
    }
    if (spec.noise_sigma > 0.0) {
      Rng noise = Rng::keyed(spec.seed, "noise/" + std::to_string(id));
      for (double& v : c.image.data()) v += spec.noise_sigma * noise.normal();
    }
    return c;
  }
  throw ConfigError("generate_task: infeasible geometry for case " + std::to_string(id) + " after " +
                    std::to_string(kMaxRejections) + " attempts");
}

}  // namespace detail

/// Deterministic in spec.seed. Cases 0..n_train-1 are training cases (always
/// with ROI); the following n_test cases form the test split.
inline Dataset generate_task(const TaskSpec& spec) {
  spec.validate();
  Dataset ds{spec, {}, {}};
  for (std::size_t i = 0; i < spec.n_train; ++i) ds.train.push_back(detail::generate_case(spec, i, true));
  const auto n_empty = static_cast<std::size_t>(std::llround(spec.test_empty_fraction * static_cast<double>(spec.n_test)));
  for (std::size_t j = 0; j < spec.n_test; ++j) {
    const bool with_roi = j >= n_empty;
    ds.test.push_back(detail::generate_case(spec, spec.n_train + j, with_roi));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Patch sampling

struct Batch {
  Tensor images;  // [N,1,P,P]
  std::vector<Mask> roi;
  std::vector<Mask> organ;
  std::vector<std::size_t> case_index;  // index into the case list
  std::vector<std::size_t> y0, x0;      // crop origin in the source image
  std::vector<bool> roi_centered;

  std::size_t size() const { return case_index.size(); }
};

/// The first ceil(roi_fraction * batch_size) patches are centred within
/// `margin` (per axis, capped at patch/2 - 1) of a random ROI pixel, so they
/// always contain ROI; the remaining patches are uniform crops of uniform cases.
inline Batch sample_batch(const std::vector<Case>& cases, std::size_t batch_size, double roi_fraction,
                          std::size_t patch, double margin, Rng& rng) {
  if (cases.empty()) throw ConfigError("sample_batch: no cases");
  if (!(roi_fraction >= 0.0 && roi_fraction <= 1.0)) throw ConfigError("sample_batch: roi_fraction not in [0,1]");
  const std::size_t S = cases[0].roi.height;
  if (patch > S || patch == 0) throw ConfigError("sample_batch: patch larger than image");
  std::vector<std::size_t> with_roi;
  for (std::size_t i = 0; i < cases.size(); ++i)
    if (count(cases[i].roi) > 0) with_roi.push_back(i);

  const auto n_roi = static_cast<std::size_t>(std::ceil(roi_fraction * static_cast<double>(batch_size) - 1e-9));
  Batch b;
  std::vector<Tensor> crops;
  const std::size_t span = S - patch;
  const auto half = static_cast<std::ptrdiff_t>(patch / 2);
  const auto reach = static_cast<std::ptrdiff_t>(std::min<double>(margin, static_cast<double>(half - 1)));
  for (std::size_t k = 0; k < batch_size; ++k) {
    std::size_t ci, y0, x0;
    const bool roi_draw = k < n_roi && !with_roi.empty();
    if (roi_draw) {
      ci = with_roi[rng.below(with_roi.size())];
      const Mask& roi = cases[ci].roi;
      std::vector<std::size_t> pixels;
      for (std::size_t i = 0; i < roi.size(); ++i)
        if (roi.data[i]) pixels.push_back(i);
      const std::size_t p = pixels[rng.below(pixels.size())];
      const auto span_offset = static_cast<std::uint64_t>(2 * reach + 1);
      const auto cy = static_cast<std::ptrdiff_t>(p / S) + static_cast<std::ptrdiff_t>(rng.below(span_offset)) - reach;
      const auto cx = static_cast<std::ptrdiff_t>(p % S) + static_cast<std::ptrdiff_t>(rng.below(span_offset)) - reach;
      y0 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(cy - half, 0, static_cast<std::ptrdiff_t>(span)));
      x0 = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(cx - half, 0, static_cast<std::ptrdiff_t>(span)));
    } else {
      ci = rng.below(cases.size());
      y0 = rng.below(span + 1);
      x0 = rng.below(span + 1);
    }
    const Case& c = cases[ci];
    crops.push_back(crop_chw(c.image, y0, x0, patch, patch));
    b.roi.push_back(crop(c.roi, y0, x0, patch, patch));
    b.organ.push_back(crop(c.organ, y0, x0, patch, patch));
    b.case_index.push_back(ci);
    b.y0.push_back(y0);
    b.x0.push_back(x0);
    b.roi_centered.push_back(roi_draw);
  }
  b.images = stack(crops);
  return b;
}

/// Full images of the given cases as one [N,1,H,W] batch.
inline Tensor stack_images(const std::vector<Case>& cases, std::size_t begin, std::size_t end) {
  std::vector<Tensor> imgs;
  for (std::size_t i = begin; i < end; ++i) imgs.push_back(cases[i].image);
  return stack(imgs);
}

// ---------------------------------------------------------------------------
// On-disk layout: case_XXXX.ten, case_XXXX_roi.pgm, case_XXXX_organ.pgm, spec.json

inline std::string case_stem(std::size_t id) {
  std::ostringstream ss;
  ss << "case_" << std::setw(4) << std::setfill('0') << id;
  return ss.str();
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "spec.json", nlohmann::json(ds.spec).dump(2) + "\n");
  for (const auto* split : {&ds.train, &ds.test})
    for (const Case& c : *split) {
      const std::string stem = case_stem(c.id);
      save_ten(dir / (stem + ".ten"), c.image);
      write_mask_pgm(dir / (stem + "_roi.pgm"), c.roi);
      write_mask_pgm(dir / (stem + "_organ.pgm"), c.organ);
    }
}

inline TaskSpec load_task_spec(const std::filesystem::path& file) {
  try {
    return nlohmann::json::parse(read_file(file)).get<TaskSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid task spec " + file.string() + ": " + e.what());
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.spec = load_task_spec(dir / "spec.json");
  auto load_case = [&](std::size_t id) {
    Case c;
    c.id = id;
    const std::string stem = case_stem(id);
    c.image = load_ten(dir / (stem + ".ten"));
    c.roi = read_mask_pgm(dir / (stem + "_roi.pgm"));
    c.organ = read_mask_pgm(dir / (stem + "_organ.pgm"));
    return c;
  };
  for (std::size_t i = 0; i < ds.spec.n_train; ++i) ds.train.push_back(load_case(i));
  for (std::size_t j = 0; j < ds.spec.n_test; ++j) ds.test.push_back(load_case(ds.spec.n_train + j));
  return ds;
}

}  // namespace colab
