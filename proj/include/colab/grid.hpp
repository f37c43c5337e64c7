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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "colab/error.hpp"

namespace colab {

/// Row-major 2-D field.
template <class T>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), data(h * w, fill) {}

  T& operator()(std::size_t y, std::size_t x) { return data[y * width + x]; }
  const T& operator()(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t size() const { return data.size(); }

  bool same_shape(const auto& o) const { return height == o.height && width == o.width; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Binary mask, 0 or 1 per pixel.
using Mask = Grid<std::uint8_t>;

inline std::size_t count(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

template <class A, class B>
void require_same_grid(const A& a, const B& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": grid mismatch " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                     " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

template <class T>
Grid<T> crop(const Grid<T>& g, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > g.height || x0 + w > g.width) throw ShapeError("crop: window out of range");
  Grid<T> out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out(y, x) = g(y0 + y, x0 + x);
  return out;
}

}  // namespace colab
