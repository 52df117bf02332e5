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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "diffoc/common.hpp"
#include "diffoc/gmm.hpp"
#include "diffoc/operators.hpp"

namespace diffoc::harness {

using Json = nlohmann::ordered_json;

/// %.17g, with "inf", "-inf" and "nan" spelled out.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Non-finite values become strings so the document stays valid JSON.
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline Json json_array(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(json_number(x));
  return a;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

/// Pixel values in [-1, 1] <-> 0..255.
inline unsigned char to_byte(double v) {
  const double c = std::clamp(v, -1.0, 1.0);
  return static_cast<unsigned char>(std::lround((c + 1.0) * 127.5));
}
inline double from_byte(unsigned char b) { return static_cast<double>(b) / 127.5 - 1.0; }

/// Binary PGM (P5), 8 bit, row-major.
inline void write_pgm(const std::filesystem::path& path, const Vector& x, ImageShape shape) {
  require_dim(x.size(), shape.size(), "image");
  std::string out = "P5\n" + std::to_string(shape.width) + " " + std::to_string(shape.height) + "\n255\n";
  for (Eigen::Index i = 0; i < x.size(); ++i) out.push_back(static_cast<char>(to_byte(x[i])));
  write_text(path, out);
}

struct Image {
  ImageShape shape;
  Vector pixels;  // in [-1, 1]
};

inline Image read_pgm(const std::filesystem::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw Error("not a binary PGM: " + path.string());
  Image img;
  try {
    img.shape.width = std::stol(token());
    img.shape.height = std::stol(token());
    const long maxval = std::stol(token());
    if (maxval != 255) throw Error("only 8-bit PGM is supported: " + path.string());
  } catch (const std::logic_error&) {
    throw Error("malformed PGM header: " + path.string());
  }
  ++pos;  // single whitespace before the raster
  const auto n = static_cast<std::size_t>(img.shape.size());
  if (img.shape.width < 1 || img.shape.height < 1 || data.size() < pos + n)
    throw Error("truncated PGM: " + path.string());
  img.pixels.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[static_cast<Eigen::Index>(i)] = from_byte(static_cast<unsigned char>(data[pos + i]));
  return img;
}

/// One value per row under a "value" header.
inline void write_vector_csv(const std::filesystem::path& path, const Vector& v) {
  std::string out = "value\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) out += format_double(v[i]) + "\n";
  write_text(path, out);
}

/// Numbers separated by commas or newlines; a non-numeric first line is a header.
inline Vector read_vector_csv(const std::filesystem::path& path) {
  std::istringstream is(read_text(path));
  std::vector<double> vals;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        vals.push_back(v);
      } catch (const std::logic_error&) {
        if (!first) throw Error("non-numeric entry '" + tok + "' in " + path.string());
        break;
      }
    }
    first = false;
  }
  if (vals.empty()) throw Error("no values in " + path.string());
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline Vector json_vector(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> std_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// {"weights": [...], "means": [[...]], "variances": [[...]]}; a scalar
/// variance entry means an isotropic component.
inline GaussianMixturePrior prior_from_json(const Json& j) {
  GaussianMixturePrior p;
  try {
    p.weights = json_vector(j.at("weights"));
    for (const auto& m : j.at("means")) p.means.push_back(json_vector(m));
    for (std::size_t i = 0; i < j.at("variances").size(); ++i) {
      const Json& v = j.at("variances")[i];
      if (v.is_number()) {
        if (i >= p.means.size()) throw Error("mixture variances outnumber means");
        p.variances.push_back(Vector::Constant(p.means[i].size(), v.get<double>()));
      } else {
        p.variances.push_back(json_vector(v));
      }
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed mixture prior: ") + e.what());
  }
  p.validate();
  return p;
}

inline Json prior_to_json(const GaussianMixturePrior& p) {
  Json j;
  j["weights"] = std_vector(p.weights);
  j["means"] = Json::array();
  j["variances"] = Json::array();
  for (const auto& m : p.means) j["means"].push_back(std_vector(m));
  for (const auto& v : p.variances) j["variances"].push_back(std_vector(v));
  return j;
}

}  // namespace diffoc::harness
