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
#include <vector>

#include "diffoc/dynamics.hpp"
#include "diffoc/ilqr.hpp"
#include "diffoc/operators.hpp"

namespace diffoc {

struct BaselineResult {
  Vector x0;
  Trajectory trajectory;
  std::vector<double> guidance_norms;  // per step, t = T..1
  long nfe = 0;
};

/// Plain probability-flow sampling (zero controls); T score calls.
inline BaselineResult uncontrolled_sample(const Vector& x_T, const ScoreModel& score, const VpSchedule& sched) {
  CountingScore counted(score);
  BaselineResult r;
  r.trajectory = rollout(x_T, zero_controls(sched.steps(), x_T.size()), counted, sched, ControlMode::output);
  r.x0 = r.trajectory.x0();
  r.guidance_norms.assign(static_cast<std::size_t>(sched.steps()), 0.0);
  r.nfe = counted.count();
  return r;
}

/// Posterior-mean estimate x0_hat = (x_t + (1 - ab) s(x_t, t)) / sqrt(ab).
inline Vector tweedie_x0(const Vector& x_t, int t, const ScoreModel& score, const VpSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  if (!(ab > 0.0)) throw Error("alpha_bar must be positive for Tweedie's formula");
  return (x_t + (1.0 - ab) * score.evaluate(x_t, t, sched).value) / std::sqrt(ab);
}

/// Euler sampler of the conditional probability-flow ODE with the
/// conditional score approximated by grad_{x_t} log p(y | x0_hat(x_t)),
/// differentiated through Tweedie's formula. Two NFEs per step.
inline BaselineResult dps_sample(const Vector& x_T, const Measurement& meas, const ScoreModel& score,
                                 const VpSchedule& sched, double guidance_scale) {
  if (!(guidance_scale >= 0.0)) throw Error("guidance scale must be >= 0");
  CountingScore counted(score);
  const int steps = sched.steps();
  BaselineResult r;
  r.trajectory.mode = ControlMode::output;
  r.trajectory.states.resize(static_cast<std::size_t>(steps) + 1);
  r.trajectory.controls = zero_controls(steps, x_T.size());
  r.trajectory.states[static_cast<std::size_t>(steps)] = x_T;
  for (int t = steps; t >= 1; --t) {
    const Vector& x = r.trajectory.state(t);
    const ScoreEval eval = counted.evaluate(x, t, sched);
    const double ab = sched.alpha_bar(t);
    if (!(ab > 0.0)) throw Error("alpha_bar must be positive for Tweedie's formula");
    const double root = std::sqrt(ab);
    const Vector x0_hat = (x + (1.0 - ab) * eval.value) / root;
    // grad_{x_t} log p(y | x0_hat) = -(d x0_hat / d x_t)^T grad l0(x0_hat)
    const Vector g0 = terminal_cost_grad(meas, x0_hat);
    const Vector guidance = -(g0 + (1.0 - ab) * eval.vjp(g0)) / root;
    const double c = 0.5 * sched.beta(t) * sched.dt();
    Vector next = x + c * (x + eval.value + guidance_scale * guidance);
    detail::guard(next, t);
    r.guidance_norms.push_back(guidance_scale * guidance.norm());
    r.trajectory.states[static_cast<std::size_t>(t) - 1] = std::move(next);
  }
  r.x0 = r.trajectory.x0();
  r.nfe = counted.count();
  return r;
}

/// grad_{x_t} log p(y | x0(x_t)) for every t, chained backwards through the
/// step Jacobians of `traj` (entry t, t = 0..T).
inline std::vector<Vector> chained_conditional_score(const Trajectory& traj, const Measurement& meas,
                                                     const ScoreModel& score, const VpSchedule& sched) {
  std::vector<Vector> grads(traj.states.size());
  grads[0] = -terminal_cost_grad(meas, traj.x0());
  for (int t = 1; t <= traj.steps(); ++t)
    grads[static_cast<std::size_t>(t)] =
        step_vjp_x(traj.state(t), traj.control(t), t, grads[static_cast<std::size_t>(t) - 1], score, sched, traj.mode);
  return grads;
}

namespace detail {
inline double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}
}  // namespace detail

/// Output-mode equivalence check. Entries are indexed by t = 1..T (vector
/// slot t - 1).
struct EquivalenceReport {
  std::vector<double> per_t_cosine;
  std::vector<double> per_t_ratio;         // ||u_t|| / ||grad_{x_t} log p(y|x0)||
  std::vector<double> inverse_alpha;       // 1 / alpha_t
  std::vector<double> g2dt;                // candidate g(t)^2 dt
  std::vector<double> half_g2dt;           // candidate g(t)^2 dt / 2
  std::vector<double> k_over_inverse_alpha;  // ratio * alpha_t
};

/// One backward pass of the output-mode solver with l_t = 0 and rank 0 from
/// zero controls, compared step by step with the exact conditional score.
inline EquivalenceReport verify_output_mode_equivalence(const Measurement& meas, const ScoreModel& score,
                                                        const Vector& x_T, const VpSchedule& sched,
                                                        AlphaRule rule, double alpha = 1e-4) {
  SolverConfig cfg;
  cfg.T = sched.steps();
  cfg.mode = ControlMode::output;
  cfg.rank_k = 0;
  cfg.running_weight = 0.0;
  cfg.alpha = alpha;
  cfg.alpha_rule = rule;
  cfg.adam_enabled = false;
  cfg.lambda = 1.0;

  const Trajectory nominal = rollout(x_T, zero_controls(cfg.T, x_T.size()), score, sched, cfg.mode);
  const BackwardResult bw = backward_pass(nominal, meas, score, sched, cfg);
  // the control at step t acts on x_{t-1}: compare with the score at t - 1
  const std::vector<Vector> ref = chained_conditional_score(nominal, meas, score, sched);

  EquivalenceReport rep;
  for (int t = 1; t <= cfg.T; ++t) {
    // rank 0 means K = 0 and lambda = 1, so the new control is k_t itself;
    // no rollout, which would leave the data range for small alpha
    const Vector& u = bw.gains.feedforward(t);
    const Vector& g = ref[static_cast<std::size_t>(t) - 1];
    const double a = cfg.alpha_at(t, sched);
    rep.per_t_cosine.push_back(detail::cosine(u, g));
    const double ratio = g.norm() > 0.0 ? u.norm() / g.norm() : 0.0;
    rep.per_t_ratio.push_back(ratio);
    rep.inverse_alpha.push_back(1.0 / a);
    rep.g2dt.push_back(sched.g2(t) * sched.dt());
    rep.half_g2dt.push_back(0.5 * sched.g2(t) * sched.dt());
    rep.k_over_inverse_alpha.push_back(ratio * a);
  }
  return rep;
}

/// Input-mode predictor-corrector check on x~_t = x_t + u_t.
struct PredictorCorrectorReport {
  std::vector<double> per_t_residual;  // slot t - 1 for t = 1..T
  /// Coefficient on g(t)^2 dt / 2 carried by the conditional score in the
  /// realized update (2 when alpha_t = 1 / (g^2 dt)).
  std::vector<double> conditional_weight;
  Trajectory uncontrolled;
  Trajectory controlled;
  double max_residual = 0.0;
};

/// Runs one input-mode pass with alpha_t = 1 / (g(t)^2 dt), l_t = 0, rank 0,
/// and checks the realized update
///   x~_{t-1} = h(x~_t) + (1 / alpha_{t-1}) grad_{x_{t-1}} log p(y | x0)
/// i.e. an unconditional Euler predictor on x~ followed by a conditional
/// corrector, to be matched step by step.
inline PredictorCorrectorReport verify_input_mode_predictor_corrector(const Measurement& meas,
                                                                      const ScoreModel& score,
                                                                      const Vector& x_T,
                                                                      const VpSchedule& sched) {
  SolverConfig cfg;
  cfg.T = sched.steps();
  cfg.mode = ControlMode::input;
  cfg.rank_k = 0;
  cfg.running_weight = 0.0;
  cfg.alpha_rule = AlphaRule::inverse_g2dt;
  cfg.adam_enabled = false;
  cfg.lambda = 1.0;

  PredictorCorrectorReport rep;
  rep.uncontrolled = rollout(x_T, zero_controls(cfg.T, x_T.size()), score, sched, cfg.mode);
  const BackwardResult bw = backward_pass(rep.uncontrolled, meas, score, sched, cfg);
  rep.controlled = forward_pass(rep.uncontrolled, bw.gains, score, sched, cfg.lambda, nullptr);
  const std::vector<Vector> ref = chained_conditional_score(rep.uncontrolled, meas, score, sched);

  const auto& traj = rep.controlled;
  for (int t = cfg.T; t >= 1; --t) {
    const Vector x_tilde = traj.state(t) + traj.control(t);
    Vector predicted = euler_pf_step(x_tilde, t, score, sched);
    Vector realized = traj.state(t - 1);
    double weight = 0.0;
    if (t - 1 >= 1) {
      const double inv_alpha = 1.0 / cfg.alpha_at(t - 1, sched);
      predicted += inv_alpha * ref[static_cast<std::size_t>(t) - 1];
      realized += traj.control(t - 1);
      weight = inv_alpha / (0.5 * sched.g2(t - 1) * sched.dt());
    }
    rep.per_t_residual.push_back((realized - predicted).norm());
    rep.conditional_weight.push_back(weight);
  }
  std::reverse(rep.per_t_residual.begin(), rep.per_t_residual.end());
  std::reverse(rep.conditional_weight.begin(), rep.conditional_weight.end());
  for (double r : rep.per_t_residual) rep.max_residual = std::max(rep.max_residual, r);
  return rep;
}

}  // namespace diffoc
