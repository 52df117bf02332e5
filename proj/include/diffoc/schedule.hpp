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

#include <vector>

#include "diffoc/common.hpp"

namespace diffoc {

/// Discretized variance-preserving diffusion clock.
///
/// Integer steps t = T..0 with step length dt = 1/T; continuous quantities are
/// evaluated at tau = t * dt. beta is linear in tau, g(t)^2 = beta(t), the drift
/// is f(x, t) = -beta(t) x / 2 and alpha_bar(t) = exp(-int_0^tau beta).
class VpSchedule {
 public:
  VpSchedule(int steps, double beta_min = 0.1, double beta_max = 20.0)
      : steps_(steps), beta_min_(beta_min), beta_max_(beta_max) {
    if (steps < 1) throw Error("schedule needs T >= 1");
    if (!(beta_min >= 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max))
      throw Error("schedule needs 0 <= beta_min <= beta_max");
    dt_ = 1.0 / steps;
    beta_.resize(steps + 1);
    alpha_bar_.resize(steps + 1);
    for (int t = 0; t <= steps; ++t) {
      const double tau = t * dt_;
      beta_[t] = beta_min + tau * (beta_max - beta_min);
      alpha_bar_[t] = std::exp(-(beta_min * tau + 0.5 * (beta_max - beta_min) * tau * tau));
    }
    alpha_bar_[0] = 1.0;
  }

  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  double time(int t) const { return t * dt_; }
  double beta(int t) const { return beta_.at(check(t)); }
  double g2(int t) const { return beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t)); }

  /// Marginal noise standard deviation at continuous time tau.
  double sigma_at(double tau) const { return std::sqrt(1.0 - alpha_bar_at(tau)); }
  double alpha_bar_at(double tau) const {
    return std::exp(-(beta_min_ * tau + 0.5 * (beta_max_ - beta_min_) * tau * tau));
  }

  bool contains(int t) const { return t >= 0 && t <= steps_; }

 private:
  int check(int t) const {
    if (!contains(t)) throw Error("time out of schedule");
    return t;
  }

  int steps_;
  double beta_min_;
  double beta_max_;
  double dt_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

}  // namespace diffoc
