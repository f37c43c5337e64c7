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
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "colab/error.hpp"
#include "colab/io.hpp"

namespace colab {

/// update_period value meaning "never update the task generator".
inline constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

struct ColabConfig {
  std::size_t t = 2;                 // context classes
  double alpha = 0.003;              // segmenter learning rate, also the inner step size
  double beta = 1e-3;                // task generator learning rate
  double m = 10.0;                   // soft mask margin (pixels)
  double tau = 7.0;                  // soft mask temperature
  std::size_t update_period = 10;    // iterations between generator updates; kNever disables them
  std::size_t inner_steps = 1;
  std::size_t epochs = 20;
  std::size_t iters_per_epoch = 100;
  std::size_t batch_size = 4;
  double roi_patch_fraction = 0.5;
  std::vector<std::uint64_t> seeds{0};
  double momentum = 0.9;             // segmenter SGD momentum
  double beta_momentum = 0.9;        // generator SGD momentum
  std::size_t patch_size = 32;
  std::size_t base_width = 8;
  std::size_t depth = 2;
  double eps_scale = 0.01;           // finite-difference radius: eps = eps_scale / |grad L_roi|
  std::vector<std::size_t> roi_loss_channels;  // empty = all foreground channels
  std::size_t kmeans_restarts = 10;
  double divergence_factor = 1e3;
  std::string lr_schedule = "constant";  // "constant" or "poly": alpha * (1 - k / total)^poly_power
  double poly_power = 0.9;

  /// Segmenter step size at iteration k.
  double alpha_at(std::size_t k) const {
    if (lr_schedule != "poly") return alpha;
    const double total = static_cast<double>(epochs * iters_per_epoch);
    return alpha * std::pow(std::max(0.0, 1.0 - static_cast<double>(k) / total), poly_power);
  }

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw ConfigError("config." + field + ": " + why);
    };
    if (t < 2) fail("t", "must be >= 2");
    if (!(alpha > 0.0)) fail("alpha", "must be > 0");
    if (!(beta >= 0.0)) fail("beta", "must be >= 0");
    if (!(m >= 0.0)) fail("m", "must be >= 0");
    if (!(tau > 0.0)) fail("tau", "must be > 0");
    if (update_period < 1) fail("update_period", "must be >= 1 (or \"never\")");
    if (inner_steps < 1) fail("inner_steps", "must be >= 1");
    if (epochs < 1) fail("epochs", "must be >= 1");
    if (iters_per_epoch < 1) fail("iters_per_epoch", "must be >= 1");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (!(roi_patch_fraction >= 0.0 && roi_patch_fraction <= 1.0)) fail("roi_patch_fraction", "must lie in [0, 1]");
    if (seeds.empty()) fail("seeds", "must list at least one seed");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
    if (!(beta_momentum >= 0.0 && beta_momentum < 1.0)) fail("beta_momentum", "must lie in [0, 1)");
    if (depth < 1) fail("depth", "must be >= 1");
    if (base_width < 1) fail("base_width", "must be >= 1");
    if (patch_size == 0 || patch_size % (std::size_t{1} << depth) != 0) fail("patch_size", "must be divisible by 2^depth");
    if (!(eps_scale > 0.0)) fail("eps_scale", "must be > 0");
    if (!(divergence_factor > 1.0)) fail("divergence_factor", "must be > 1");
    if (lr_schedule != "constant" && lr_schedule != "poly") fail("lr_schedule", "must be \"constant\" or \"poly\"");
    if (!(poly_power > 0.0)) fail("poly_power", "must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const ColabConfig& c) {
  j = nlohmann::json{{"t", c.t},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"m", c.m},
                     {"tau", c.tau},
                     {"inner_steps", c.inner_steps},
                     {"epochs", c.epochs},
                     {"iters_per_epoch", c.iters_per_epoch},
                     {"batch_size", c.batch_size},
                     {"roi_patch_fraction", c.roi_patch_fraction},
                     {"seeds", c.seeds},
                     {"momentum", c.momentum},
                     {"beta_momentum", c.beta_momentum},
                     {"patch_size", c.patch_size},
                     {"base_width", c.base_width},
                     {"depth", c.depth},
                     {"eps_scale", c.eps_scale},
                     {"roi_loss_channels", c.roi_loss_channels},
                     {"kmeans_restarts", c.kmeans_restarts},
                     {"divergence_factor", c.divergence_factor},
                     {"lr_schedule", c.lr_schedule},
                     {"poly_power", c.poly_power}};
  if (c.update_period == kNever) j["update_period"] = "never";
  else j["update_period"] = c.update_period;
}

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config.") + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, ColabConfig& c) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::vector<std::string> known{
      "t",     "alpha",      "beta",       "m",        "tau",           "update_period",   "inner_steps",
      "epochs", "iters_per_epoch", "batch_size", "roi_patch_fraction", "seeds", "momentum", "beta_momentum",
      "patch_size", "base_width", "depth", "eps_scale", "roi_loss_channels", "kmeans_restarts", "divergence_factor",
      "lr_schedule", "poly_power"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("config." + key + ": unknown field");
  }
  detail::read_field(j, "t", c.t);
  detail::read_field(j, "alpha", c.alpha);
  detail::read_field(j, "beta", c.beta);
  detail::read_field(j, "m", c.m);
  detail::read_field(j, "tau", c.tau);
  if (j.contains("update_period")) {
    const auto& u = j.at("update_period");
    if (u.is_string() && u.get<std::string>() == "never") c.update_period = kNever;
    else if (u.is_number_integer() && u.get<long long>() >= 0) c.update_period = u.get<std::size_t>();
    else throw ConfigError("config.update_period: expected a non-negative integer or \"never\"");
  }
  detail::read_field(j, "inner_steps", c.inner_steps);
  detail::read_field(j, "epochs", c.epochs);
  detail::read_field(j, "iters_per_epoch", c.iters_per_epoch);
  detail::read_field(j, "batch_size", c.batch_size);
  detail::read_field(j, "roi_patch_fraction", c.roi_patch_fraction);
  detail::read_field(j, "seeds", c.seeds);
  detail::read_field(j, "momentum", c.momentum);
  detail::read_field(j, "beta_momentum", c.beta_momentum);
  detail::read_field(j, "patch_size", c.patch_size);
  detail::read_field(j, "base_width", c.base_width);
  detail::read_field(j, "depth", c.depth);
  detail::read_field(j, "eps_scale", c.eps_scale);
  detail::read_field(j, "roi_loss_channels", c.roi_loss_channels);
  detail::read_field(j, "kmeans_restarts", c.kmeans_restarts);
  detail::read_field(j, "divergence_factor", c.divergence_factor);
  detail::read_field(j, "lr_schedule", c.lr_schedule);
  detail::read_field(j, "poly_power", c.poly_power);
}

inline ColabConfig parse_config(const std::string& text) {
  ColabConfig c;
  try {
    c = nlohmann::json::parse(text).get<ColabConfig>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  c.validate();
  return c;
}

inline ColabConfig load_config(const std::filesystem::path& p) { return parse_config(read_file(p)); }

}  // namespace colab
