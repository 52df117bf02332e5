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

#include <limits>
#include <string>

#include "diffoc/harness/io.hpp"
#include "diffoc/operators.hpp"

namespace diffoc::harness {

struct MetricsRecord {
  double mse = 0.0;
  double psnr = 0.0;
  double measurement_residual = 0.0;
  double terminal_cost = 0.0;
  long nfe = 0;
  double wall_seconds = 0.0;  // kept out of metrics.csv
};

/// Images live in [-1, 1] and are scored on the 0..255 scale with peak 255;
/// plain vectors use raw units with the data range of x_true as peak (1 when
/// x_true is constant). psnr is +inf when mse is 0.
inline MetricsRecord compute_metrics(const Vector& x_rec, const Vector& x_true, const Measurement& meas, bool image) {
  require_dim(x_rec.size(), x_true.size(), "reconstruction");
  MetricsRecord m;
  const double scale = image ? 127.5 : 1.0;
  m.mse = (scale * (x_rec - x_true)).squaredNorm() / static_cast<double>(x_true.size());
  double peak = 255.0;
  if (!image) {
    peak = x_true.maxCoeff() - x_true.minCoeff();
    if (!(peak > 0.0)) peak = 1.0;
  }
  m.psnr = m.mse > 0.0 ? 10.0 * std::log10(peak * peak / m.mse) : std::numeric_limits<double>::infinity();
  m.measurement_residual = (meas.op_ref().apply(x_rec) - meas.y).norm();
  m.terminal_cost = diffoc::terminal_cost(meas, x_rec);
  return m;
}

inline constexpr const char* kMetricsColumns = "mse,psnr,measurement_residual,terminal_cost,nfe";

inline std::string metrics_fields(const MetricsRecord& m) {
  return format_double(m.mse) + "," + format_double(m.psnr) + "," + format_double(m.measurement_residual) + "," +
         format_double(m.terminal_cost) + "," + std::to_string(m.nfe);
}

/// Empty metric fields for a failed run.
inline std::string empty_metrics_fields() { return ",,,,"; }

}  // namespace diffoc::harness
