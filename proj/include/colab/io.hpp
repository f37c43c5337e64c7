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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "colab/error.hpp"
#include "colab/grid.hpp"

namespace colab {

/// Binary 8-bit PGM (P5). Values are written verbatim; masks use 0/255.
inline void write_pgm(const std::filesystem::path& p, const Grid<std::uint8_t>& g) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(g.data.data()), static_cast<std::streamsize>(g.data.size()));
  if (!os) throw IoError("write failed: " + p.string());
}

inline Grid<std::uint8_t> read_pgm(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  auto next_token = [&]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(is, rest);
    }
    throw IoError("truncated PGM header: " + p.string());
  };
  if (next_token() != "P5") throw IoError("not a binary PGM: " + p.string());
  const std::size_t w = std::stoul(next_token()), h = std::stoul(next_token());
  if (std::stoul(next_token()) > 255) throw IoError("16-bit PGM unsupported: " + p.string());
  is.get();
  Grid<std::uint8_t> g(h, w);
  is.read(reinterpret_cast<char*>(g.data.data()), static_cast<std::streamsize>(g.data.size()));
  if (static_cast<std::size_t>(is.gcount()) != g.data.size()) throw IoError("truncated PGM payload: " + p.string());
  return g;
}

inline void write_mask_pgm(const std::filesystem::path& p, const Mask& m) {
  Grid<std::uint8_t> g = m;
  for (auto& v : g.data) v = v ? 255 : 0;
  write_pgm(p, g);
}

inline Mask read_mask_pgm(const std::filesystem::path& p) {
  Mask m = read_pgm(p);
  for (auto& v : m.data) v = v ? 1 : 0;
  return m;
}

/// Floats in CSV output: 9 significant digits.
inline std::string fmt_float(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Minimal CSV reader for the files this project writes (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("CSV column not found: " + name);
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read " + p.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty CSV: " + p.string());
  t.header = split_csv_line(line);
  while (std::getline(is, line))
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  return t;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Write via a temporary sibling then rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << content;
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace colab
