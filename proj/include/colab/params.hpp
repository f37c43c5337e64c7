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

#include <cmath>
#include <filesystem>
#include <map>
#include <string>

#include "colab/autodiff.hpp"
#include "colab/error.hpp"
#include "colab/rng.hpp"
#include "colab/tensor.hpp"

namespace colab {

/// Named parameter tensors. std::map gives a deterministic iteration order.
using NetworkParams = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;
/// Graph leaves bound to a NetworkParams for one forward pass.
using ParamVars = std::map<std::string, Var>;

inline NetworkParams clone_params(const NetworkParams& p) { return p; }

inline ParamVars bind_params(const NetworkParams& params, bool requires_grad = true) {
  ParamVars vars;
  for (const auto& [name, t] : params) vars.emplace(name, Var::leaf(t, requires_grad));
  return vars;
}

inline GradientMap collect(const Gradients& grads, const ParamVars& vars) {
  GradientMap out;
  for (const auto& [name, v] : vars) out.emplace(name, grads.of(v));
  return out;
}

inline std::size_t count_parameters(const NetworkParams& p) {
  std::size_t n = 0;
  for (const auto& [_, t] : p) n += t.size();
  return n;
}

inline double squared_norm(const GradientMap& g) {
  double s = 0.0;
  for (const auto& [_, t] : g) s += dot(t, t);
  return s;
}

inline double dot(const GradientMap& a, const GradientMap& b) {
  double s = 0.0;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it != b.end()) s += dot(t, it->second);
  }
  return s;
}

/// params + scale * direction, for every key of `direction`.
inline NetworkParams axpy(const NetworkParams& params, double scale, const GradientMap& direction) {
  NetworkParams out = params;
  for (const auto& [name, d] : direction) {
    auto it = out.find(name);
    if (it == out.end()) throw ConfigError("axpy: unknown parameter '" + name + "'");
    it->second.require_same(d, ("axpy(" + name + ")").c_str());
    for (std::size_t i = 0; i < d.size(); ++i) it->second[i] += scale * d[i];
  }
  return out;
}

/// In-place SGD with heavy-ball momentum: v = momentum * v + g; p -= lr * v.
/// Parameters without a gradient entry are left untouched.
inline void sgd_step(NetworkParams& params, const GradientMap& grads, double lr, double momentum,
                     GradientMap& momentum_state) {
  if (!(lr >= 0.0)) throw ConfigError("sgd_step: learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd_step: momentum must lie in [0, 1)");
  for (const auto& [name, g] : grads) {
    if (!params.count(name)) throw ConfigError("sgd_step: gradient for unknown parameter '" + name + "'");
    if (!g.all_finite()) throw NumericError("sgd_step: non-finite gradient for parameter '" + name + "'");
  }
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    p.require_same(g, "sgd_step");
    auto [it, fresh] = momentum_state.try_emplace(name, Tensor(g.shape(), 0.0));
    Tensor& v = it->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  }
}

/// Kaiming-uniform (fan-in, ReLU gain): U(-sqrt(6/fan_in), sqrt(6/fan_in)).
inline Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

inline void save_params(const std::filesystem::path& dir, const NetworkParams& p) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, t] : p) save_ten(dir / (name + ".ten"), t);
}

inline NetworkParams load_params(const std::filesystem::path& dir) {
  NetworkParams p;
  if (!std::filesystem::is_directory(dir)) throw IoError("missing parameter directory " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".ten") p.emplace(entry.path().stem().string(), load_ten(entry.path()));
  }
  return p;
}

}  // namespace colab
