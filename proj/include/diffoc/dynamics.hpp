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

#include <cmath>
#include <ostream>
#include <vector>

#include "diffoc/common.hpp"
#include "diffoc/schedule.hpp"
#include "diffoc/score.hpp"

namespace diffoc {

/// Where the control enters the probability-flow step.
enum class ControlMode {
  input,   // x_{t-1} = h(x_t + u_t)
  output,  // x_{t-1} = h(x_t) + u_t
};

inline const char* to_string(ControlMode m) { return m == ControlMode::input ? "input" : "output"; }

/// States bigger than this abort the rollout.
inline constexpr double kDivergenceNorm = 1e6;

namespace detail {
inline void guard(const Vector& x, int t) {
  if (!x.allFinite() || x.norm() > kDivergenceNorm) throw DivergenceError("dynamics diverged", t);
}
inline void check_step(const VpSchedule& sched, int t) {
  if (t < 1 || t > sched.steps()) throw Error("time out of schedule");
}
}  // namespace detail

/// Euler step of the reverse probability-flow ODE:
/// x_{t-1} = x - [f(x, t) - g(t)^2 s(x, t) / 2] dt = x + beta dt (x + s) / 2.
inline Vector euler_pf_step(const Vector& x, int t, const ScoreModel& score, const VpSchedule& sched) {
  detail::check_step(sched, t);
  const double c = 0.5 * sched.beta(t) * sched.dt();
  Vector next = x + c * (x + score.evaluate(x, t, sched).value);
  detail::guard(next, t);
  return next;
}

inline Vector controlled_step(const Vector& x, const Vector& u, int t, const ScoreModel& score,
                              const VpSchedule& sched, ControlMode mode) {
  require_dim(u.size(), x.size(), "control");
  if (mode == ControlMode::input) return euler_pf_step(x + u, t, score, sched);
  Vector next = euler_pf_step(x, t, score, sched) + u;
  detail::guard(next, t);
  return next;
}

/// Linearization of one controlled step at (x, u). h_x and h_u are only
/// available as actions; the score is evaluated once, at the point the
/// diffusion step sees (x + u in input mode, x in output mode).
class StepJacobian {
 public:
  StepJacobian(const Vector& x, const Vector& u, int t, const ScoreModel& score,
               const VpSchedule& sched, ControlMode mode)
      : mode_(mode) {
    detail::check_step(sched, t);
    require_dim(u.size(), x.size(), "control");
    c_ = 0.5 * sched.beta(t) * sched.dt();
    eval_ = score.evaluate(mode == ControlMode::input ? Vector(x + u) : x, t, sched);
  }

  /// h_x^T w
  Vector vjp_x(const Vector& w) const { return (1.0 + c_) * w + c_ * eval_.vjp(w); }
  /// h_x v
  Vector jvp_x(const Vector& v) const { return (1.0 + c_) * v + c_ * eval_.jvp(v); }
  /// h_u^T w; identity in output mode, h_x^T w in input mode
  Vector vjp_u(const Vector& w) const { return mode_ == ControlMode::output ? w : vjp_x(w); }
  /// h_u v
  Vector jvp_u(const Vector& v) const { return mode_ == ControlMode::output ? v : jvp_x(v); }

  ControlMode mode() const { return mode_; }

 private:
  ControlMode mode_;
  double c_ = 0.0;
  ScoreEval eval_;
};

inline Vector step_vjp_x(const Vector& x, const Vector& u, int t, const Vector& seed,
                         const ScoreModel& score, const VpSchedule& sched, ControlMode mode) {
  return StepJacobian(x, u, t, score, sched, mode).vjp_x(seed);
}
inline Vector step_jvp_x(const Vector& x, const Vector& u, int t, const Vector& v,
                         const ScoreModel& score, const VpSchedule& sched, ControlMode mode) {
  return StepJacobian(x, u, t, score, sched, mode).jvp_x(v);
}
inline Vector step_vjp_u(const Vector& x, const Vector& u, int t, const Vector& seed,
                         const ScoreModel& score, const VpSchedule& sched, ControlMode mode) {
  if (mode == ControlMode::output) {
    require_dim(seed.size(), x.size(), "seed");
    return seed;
  }
  return step_vjp_x(x, u, t, seed, score, sched, mode);
}

/// One sampler episode. states[t] is x_t for t = 0..T; control(t) is u_t for
/// t = 1..T.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> controls;
  ControlMode mode = ControlMode::output;

  int steps() const { return static_cast<int>(controls.size()); }
  const Vector& state(int t) const { return states.at(static_cast<std::size_t>(t)); }
  const Vector& control(int t) const { return controls.at(static_cast<std::size_t>(t - 1)); }
  const Vector& x0() const { return states.front(); }
  const Vector& xT() const { return states.back(); }
};

inline std::vector<Vector> zero_controls(int steps, Eigen::Index d) {
  return std::vector<Vector>(static_cast<std::size_t>(steps), Vector::Zero(d));
}

/// Sequential rollout t = T..1; x_0 is exact under the discretized dynamics.
inline Trajectory rollout(const Vector& x_T, std::vector<Vector> controls, const ScoreModel& score,
                          const VpSchedule& sched, ControlMode mode) {
  const int steps = sched.steps();
  if (static_cast<int>(controls.size()) != steps)
    throw Error("rollout needs exactly T controls");
  if (!x_T.allFinite()) throw Error("invalid state");
  Trajectory traj;
  traj.mode = mode;
  traj.states.resize(static_cast<std::size_t>(steps) + 1);
  traj.states[static_cast<std::size_t>(steps)] = x_T;
  traj.controls = std::move(controls);
  for (int t = steps; t >= 1; --t)
    traj.states[static_cast<std::size_t>(t) - 1] =
        controlled_step(traj.state(t), traj.control(t), t, score, sched, mode);
  return traj;
}

/// Euler-Maruyama sampler of the reverse-time SDE; demo only, never
/// controlled. Returns x_T..x_0 in a Trajectory with zero controls.
inline Trajectory sde_sample(const Vector& x_T, const ScoreModel& score, const VpSchedule& sched, Rng& rng) {
  const int steps = sched.steps();
  Trajectory traj;
  traj.mode = ControlMode::output;
  traj.states.resize(static_cast<std::size_t>(steps) + 1);
  traj.controls = zero_controls(steps, x_T.size());
  traj.states[static_cast<std::size_t>(steps)] = x_T;
  for (int t = steps; t >= 1; --t) {
    const Vector& x = traj.state(t);
    const double bdt = sched.beta(t) * sched.dt();
    Vector next = x + bdt * (0.5 * x + score.evaluate(x, t, sched).value);
    if (t > 1) next += std::sqrt(bdt) * standard_normal(x.size(), rng);
    detail::guard(next, t);
    traj.states[static_cast<std::size_t>(t) - 1] = std::move(next);
  }
  return traj;
}

/// One row per timestep: t, then the state components (t = T first).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os.precision(17);
  const auto d = traj.x0().size();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
  os << '\n';
  for (int t = static_cast<int>(traj.states.size()) - 1; t >= 0; --t) {
    os << t;
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << traj.state(t)[i];
    os << '\n';
  }
}

inline void write_controls_csv(std::ostream& os, const Trajectory& traj) {
  os.precision(17);
  const auto d = traj.x0().size();
  os << "t";
  for (Eigen::Index i = 0; i < d; ++i) os << ",u" << i;
  os << '\n';
  for (int t = traj.steps(); t >= 1; --t) {
    os << t;
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << traj.control(t)[i];
    os << '\n';
  }
}

}  // namespace diffoc
