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

#include <atomic>
#include <functional>
#include <memory>

#include "diffoc/common.hpp"
#include "diffoc/schedule.hpp"

namespace diffoc {

/// Score value at one (x, t) plus the Jacobian actions of the score there.
struct ScoreEval {
  Vector value;
  std::function<Vector(const Vector&)> vjp_fn;
  std::function<Vector(const Vector&)> jvp_fn;

  /// (d score / dx)^T seed
  Vector vjp(const Vector& seed) const { return vjp_fn(seed); }
  /// (d score / dx) v
  Vector jvp(const Vector& v) const { return jvp_fn(v); }
};

/// s(x, t) ~ grad_x log p_t(x). Implementations are immutable once built.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual ScoreEval evaluate(const Vector& x, int t, const VpSchedule& sched) const = 0;
};

/// Counts score forwards and Jacobian actions of a wrapped model; every
/// forward and every vjp/jvp is one function evaluation.
class CountingScore final : public ScoreModel {
 public:
  explicit CountingScore(const ScoreModel& inner)
      : inner_(inner), counter_(std::make_shared<std::atomic<long>>(0)) {}

  Eigen::Index dim() const override { return inner_.dim(); }

  ScoreEval evaluate(const Vector& x, int t, const VpSchedule& sched) const override {
    ++*counter_;
    ScoreEval eval = inner_.evaluate(x, t, sched);
    auto counter = counter_;
    auto vjp = std::move(eval.vjp_fn);
    auto jvp = std::move(eval.jvp_fn);
    eval.vjp_fn = [counter, vjp](const Vector& s) {
      ++*counter;
      return vjp(s);
    };
    eval.jvp_fn = [counter, jvp](const Vector& v) {
      ++*counter;
      return jvp(v);
    };
    return eval;
  }

  long count() const { return counter_->load(); }
  void reset() { counter_->store(0); }

 private:
  const ScoreModel& inner_;
  std::shared_ptr<std::atomic<long>> counter_;
};

}  // namespace diffoc
