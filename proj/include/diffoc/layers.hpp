/*
 Copyright 2026 The diffoc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "diffoc/common.hpp"

namespace diffoc {

/// One affine layer, y = W x + b, W stored (out x in).
struct DenseLayer {
  Matrix weight;
  Vector bias;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// Layers drawn with weights ~ N(0, 1/fan_in) and zero biases.
inline std::vector<DenseLayer> init_layers(const std::vector<Eigen::Index>& dims, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.weight = standard_normal(dims[i + 1], dims[i], rng) / std::sqrt(static_cast<double>(dims[i]));
    l.bias = Vector::Zero(dims[i + 1]);
    layers.push_back(std::move(l));
  }
  return layers;
}

inline bool layers_finite(const std::vector<DenseLayer>& layers) {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

// Flat binary weight file:
//   "DOCW" | u32 version | u32 n_layers | u32 dims[n_layers + 1] |
//   per layer: W row-major (out x in) f64, then b f64. Little-endian.
inline constexpr std::array<char, 4> kWeightMagic{'D', 'O', 'C', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {
template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("truncated weight file");
  return v;
}
}  // namespace detail

inline void write_layers(std::ostream& os, const std::vector<DenseLayer>& layers) {
  if (layers.empty()) throw Error("no layers to write");
  os.write(kWeightMagic.data(), 4);
  detail::put<std::uint32_t>(os, kWeightVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(layers.size()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(layers.front().in()));
  for (const auto& l : layers) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(l.out()));
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.out(); ++r)
      for (Eigen::Index c = 0; c < l.in(); ++c) detail::put<double>(os, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.out(); ++r) detail::put<double>(os, l.bias[r]);
  }
}

inline std::vector<DenseLayer> read_layers(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kWeightMagic) throw Error("not a DOCW weight file");
  if (detail::get<std::uint32_t>(is) != kWeightVersion) throw Error("unsupported DOCW version");
  const auto n = detail::get<std::uint32_t>(is);
  if (n == 0 || n > 64) throw Error("bad layer count in weight file");
  std::vector<Eigen::Index> dims(n + 1);
  for (auto& d : dims) {
    d = detail::get<std::uint32_t>(is);
    if (d == 0 || d > (1u << 20)) throw Error("bad layer dimension in weight file");
  }
  std::vector<DenseLayer> layers(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& l = layers[i];
    l.weight.resize(dims[i + 1], dims[i]);
    l.bias.resize(dims[i + 1]);
    for (Eigen::Index r = 0; r < l.out(); ++r)
      for (Eigen::Index c = 0; c < l.in(); ++c) l.weight(r, c) = detail::get<double>(is);
    for (Eigen::Index r = 0; r < l.out(); ++r) l.bias[r] = detail::get<double>(is);
  }
  return layers;
}

inline void save_layers(const std::string& path, const std::vector<DenseLayer>& layers) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_layers(os, layers);
}

inline std::vector<DenseLayer> load_layers(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_layers(is);
}

/// Flatten parameters layer by layer (W column-major, then b).
inline Vector flatten(const std::vector<DenseLayer>& layers) {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  Vector flat(n);
  Eigen::Index at = 0;
  for (const auto& l : layers) {
    flat.segment(at, l.weight.size()) = Eigen::Map<const Vector>(l.weight.data(), l.weight.size());
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return flat;
}

inline void unflatten(const Vector& flat, std::vector<DenseLayer>& layers) {
  Eigen::Index at = 0;
  for (auto& l : layers) {
    Eigen::Map<Vector>(l.weight.data(), l.weight.size()) = flat.segment(at, l.weight.size());
    at += l.weight.size();
    l.bias = flat.segment(at, l.bias.size());
    at += l.bias.size();
  }
  require_dim(at, flat.size(), "flat parameter vector");
}

}  // namespace diffoc
