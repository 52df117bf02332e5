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

#include "diffoc/common.hpp"

namespace diffoc {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moment state over one flat parameter (or control) vector.
///
/// step(g) advances the moments with g and returns the bias-corrected
/// preconditioned vector lr * m_hat / (sqrt(v_hat) + eps). The caller decides
/// the sign.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, AdamOptions opts)
      : opts_(opts), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  Vector step(const Vector& g) {
    require_dim(g.size(), m_.size(), "adam gradient");
    ++count_;
    m_ = opts_.beta1 * m_ + (1.0 - opts_.beta1) * g;
    v_ = opts_.beta2 * v_ + (1.0 - opts_.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(count_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(count_));
    return (opts_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opts_.eps)).matrix();
  }

  long steps_taken() const { return count_; }
  const AdamOptions& options() const { return opts_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

 private:
  AdamOptions opts_;
  Vector m_;
  Vector v_;
  long count_ = 0;
};

}  // namespace diffoc
