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
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colab/error.hpp"

namespace colab {

inline std::uint64_t byteswap64(std::uint64_t v) { return __builtin_bswap64(v); }

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles. Plain value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(numel(shape_), fill) {
    validate();
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate();
    if (data_.size() != numel(shape_)) {
      throw ShapeError("Tensor: shape " + to_string(shape_) + " holds " +
                       std::to_string(numel(shape_)) + " values, got " + std::to_string(data_.size()));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// 4-D accessor for NCHW tensors.
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not a scalar");
    return data_[0];
  }

  Tensor reshaped(Shape s) const {
    if (numel(s) != size()) {
      throw ShapeError("reshape: cannot view " + to_string(shape_) + " as " + to_string(s));
    }
    return Tensor(std::move(s), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  void require_same(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_) {
      throw ShapeError(std::string(op) + ": shape mismatch " + to_string(shape_) + " vs " + to_string(o.shape_));
    }
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void validate() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw ShapeError("Tensor: zero-sized dimension in " + to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
  a.require_same(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Crop a [C,H,W] tensor to [C,h,w] starting at (y0, x0).
inline Tensor crop_chw(const Tensor& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (t.rank() != 3 || y0 + h > t.dim(1) || x0 + w > t.dim(2)) {
    throw ShapeError("crop_chw: window out of range for " + to_string(t.shape()));
  }
  const std::size_t channels = t.dim(0), H = t.dim(1), W = t.dim(2);
  Tensor out(Shape{channels, h, w});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>((c * H + y0 + y) * W + x0), w,
                  out.data().begin() + static_cast<std::ptrdiff_t>((c * h + y) * w));
  return out;
}

/// Stack equally shaped tensors along a new leading axis.
inline Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  Shape s = items[0].shape();
  s.insert(s.begin(), items.size());
  Tensor out(s);
  std::size_t off = 0;
  for (const Tensor& t : items) {
    items[0].require_same(t, "stack");
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += t.size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// .ten files: one JSON header line, '\n', raw little-endian f64 payload.

inline void write_ten(std::ostream& os, const Tensor& t) {
  nlohmann::ordered_json header;
  header["shape"] = t.shape();
  header["dtype"] = "f64";
  header["order"] = "row-major";
  os << header.dump() << '\n';
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    for (double v : t.data()) {
      auto bits = byteswap64(std::bit_cast<std::uint64_t>(v));
      os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
}

inline Tensor read_ten(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError(".ten: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string(".ten: bad header: ") + e.what());
  }
  if (header.value("dtype", "") != "f64" || header.value("order", "") != "row-major" || !header.contains("shape")) {
    throw IoError(".ten: unsupported header " + line);
  }
  Shape shape = header["shape"].get<Shape>();
  std::vector<double> data(numel(shape));
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (static_cast<std::size_t>(is.gcount()) != data.size() * sizeof(double)) throw IoError(".ten: truncated payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (double& v : data) v = std::bit_cast<double>(byteswap64(std::bit_cast<std::uint64_t>(v)));
  }
  return Tensor(std::move(shape), std::move(data));
}

inline void save_ten(const std::filesystem::path& p, const Tensor& t) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  write_ten(os, t);
  if (!os) throw IoError("write failed: " + p.string());
}

inline Tensor load_ten(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  return read_ten(is);
}

}  // namespace colab
