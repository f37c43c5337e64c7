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

// Small 2-D encoder-decoder used both as the segmenter and as the task
// generator. Topology per level l (width base_width * 2^l):
//   level 0:   conv3x3+ReLU, conv3x3+ReLU
//   level l>0: stride-2 conv3x3+ReLU, conv3x3+ReLU, conv3x3+ReLU
//   decoder:   nearest 2x upsample, concat skip, conv3x3+ReLU, conv3x3+ReLU
//   head:      conv1x1 to out_channels (logits)
// No normalization layers, so every sample is processed independently.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "colab/autodiff.hpp"
#include "colab/error.hpp"
#include "colab/params.hpp"
#include "colab/rng.hpp"

namespace colab {

struct NetConfig {
  std::size_t in_channels = 1;
  std::size_t base_width = 8;
  std::size_t depth = 2;
  std::size_t out_channels = 2;
  std::uint64_t seed = 0;

  std::size_t width(std::size_t level) const { return base_width << level; }

  void validate() const {
    if (in_channels == 0 || base_width == 0 || out_channels == 0) throw ConfigError("NetConfig: zero-sized layer");
    if (depth < 1) throw ConfigError("NetConfig: depth must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetConfig, in_channels, base_width, depth, out_channels, seed)

struct SegNetwork {
  NetConfig config;
  NetworkParams params;
};

namespace detail {

inline void add_conv(NetworkParams& p, const std::string& name, std::size_t out, std::size_t in, std::size_t k,
                     std::uint64_t seed, std::string_view stream = "init/") {
  Rng rng = Rng::keyed(seed, std::string(stream) + name + ".w");
  p.emplace(name + ".w", kaiming_uniform(Shape{out, in, k, k}, in * k * k, rng));
  p.emplace(name + ".b", Tensor(Shape{out}, 0.0));
}

inline Var conv_layer(const ParamVars& p, const std::string& name, const Var& x, std::size_t stride, bool activate) {
  const Var& w = p.at(name + ".w");
  const std::size_t k = w.shape()[2];
  Var y = conv2d(x, w, p.at(name + ".b"), {stride, k / 2});
  check_finite(y, name);
  return activate ? relu(y) : y;
}

}  // namespace detail

inline SegNetwork build_net(const NetConfig& cfg) {
  cfg.validate();
  SegNetwork net{cfg, {}};
  auto& p = net.params;
  const auto s = cfg.seed;
  detail::add_conv(p, "enc0.conv0", cfg.width(0), cfg.in_channels, 3, s);
  detail::add_conv(p, "enc0.conv1", cfg.width(0), cfg.width(0), 3, s);
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    const std::string e = "enc" + std::to_string(l);
    detail::add_conv(p, e + ".down", cfg.width(l), cfg.width(l - 1), 3, s);
    detail::add_conv(p, e + ".conv0", cfg.width(l), cfg.width(l), 3, s);
    detail::add_conv(p, e + ".conv1", cfg.width(l), cfg.width(l), 3, s);
    const std::string d = "dec" + std::to_string(l);
    detail::add_conv(p, d + ".conv0", cfg.width(l - 1), cfg.width(l) + cfg.width(l - 1), 3, s);
    detail::add_conv(p, d + ".conv1", cfg.width(l - 1), cfg.width(l - 1), 3, s);
  }
  detail::add_conv(p, "head", cfg.out_channels, cfg.width(0), 1, s);
  return net;
}

/// Widen a 2-output head to t + 1 outputs. The original two rows are copied
/// verbatim; the new rows are drawn from a separate "extend/" seed stream.
inline SegNetwork extend_head(const SegNetwork& net, std::size_t t) {
  if (t < 2) throw ConfigError("extend_head: t must be >= 2");
  if (net.config.out_channels != 2) throw ConfigError("extend_head: expected a 2-output network");
  SegNetwork out = net;
  out.config.out_channels = t + 1;
  const std::size_t w0 = net.config.width(0);
  NetworkParams fresh;
  detail::add_conv(fresh, "head", t + 1, w0, 1, net.config.seed, "extend/");
  Tensor& w = fresh.at("head.w");
  const Tensor& old_w = net.params.at("head.w");
  std::copy(old_w.data().begin(), old_w.data().end(), w.data().begin());
  Tensor& b = fresh.at("head.b");
  b[0] = net.params.at("head.b")[0];
  b[1] = net.params.at("head.b")[1];
  out.params["head.w"] = std::move(w);
  out.params["head.b"] = std::move(b);
  return out;
}

/// Logits [N, out_channels, H, W] for a [N, in_channels, H, W] batch.
inline Var forward(const NetConfig& cfg, const ParamVars& p, const Var& batch) {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[1] != cfg.in_channels) {
    throw ShapeError("forward: expected [N," + std::to_string(cfg.in_channels) + ",H,W], got " + to_string(s));
  }
  const std::size_t factor = std::size_t{1} << cfg.depth;
  if (s[2] % factor != 0 || s[3] % factor != 0) {
    throw ShapeError("forward: spatial dims " + to_string(s) + " not divisible by 2^depth = " + std::to_string(factor));
  }
  std::vector<Var> skips;
  Var x = detail::conv_layer(p, "enc0.conv0", batch, 1, true);
  x = detail::conv_layer(p, "enc0.conv1", x, 1, true);
  for (std::size_t l = 1; l <= cfg.depth; ++l) {
    skips.push_back(x);
    const std::string e = "enc" + std::to_string(l);
    x = detail::conv_layer(p, e + ".down", x, 2, true);
    x = detail::conv_layer(p, e + ".conv0", x, 1, true);
    x = detail::conv_layer(p, e + ".conv1", x, 1, true);
  }
  for (std::size_t l = cfg.depth; l >= 1; --l) {
    const std::string d = "dec" + std::to_string(l);
    x = concat_channels({upsample_nearest2x(x), skips[l - 1]});
    x = detail::conv_layer(p, d + ".conv0", x, 1, true);
    x = detail::conv_layer(p, d + ".conv1", x, 1, true);
  }
  return detail::conv_layer(p, "head", x, 1, false);
}

inline Var forward(const SegNetwork& net, const ParamVars& p, const Var& batch) {
  return forward(net.config, p, batch);
}

/// Inference without gradient tracking.
inline Tensor predict_logits(const SegNetwork& net, const Tensor& batch) {
  return forward(net.config, bind_params(net.params, false), Var::constant(batch)).value();
}

}  // namespace colab
