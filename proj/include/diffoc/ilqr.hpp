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

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "diffoc/adam.hpp"
#include "diffoc/dynamics.hpp"
#include "diffoc/log.hpp"
#include "diffoc/lowrank.hpp"
#include "diffoc/operators.hpp"

namespace diffoc {

/// How the Tikhonov coefficient varies over steps.
enum class AlphaRule {
  constant,      // alpha_t = alpha
  inverse_g2dt,  // alpha_t = 1 / (g(t)^2 dt)
};

struct SolverConfig {
  int T = 50;
  int num_iters = 50;
  double alpha = 1e-4;
  AlphaRule alpha_rule = AlphaRule::constant;
  double running_weight = 1e-4;  // l_t(u) = running_weight * ||u||^2
  double lambda = 1.0;           // feedforward step scale
  int rank_k = 1;
  ControlMode mode = ControlMode::input;
  bool adam_enabled = true;
  AdamOptions adam{1e-3, 0.9, 0.999, 1e-8};
  double beta_min = 0.1;
  double beta_max = 20.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (T < 1) throw Error("T must be >= 1");
    if (num_iters < 1) throw Error("num_iters must be >= 1");
    if (!(alpha >= 0.0)) throw Error("alpha must be >= 0");
    if (!(running_weight >= 0.0)) throw Error("running_weight must be >= 0");
    if (!(lambda > 0.0) || lambda > 1.0) throw Error("lambda must be in (0, 1]");
    if (rank_k < 0) throw Error("rank_k must be >= 0");
    if (adam_enabled && !(adam.lr > 0.0)) throw Error("adam lr must be positive");
    if (alpha == 0.0 && alpha_rule == AlphaRule::constant)
      log_info("alpha = 0: the regularized inverse may be singular");
  }

  double alpha_at(int t, const VpSchedule& sched) const {
    if (alpha_rule == AlphaRule::inverse_g2dt) return 1.0 / (sched.g2(t) * sched.dt());
    return alpha;
  }

  VpSchedule schedule() const { return VpSchedule(T, beta_min, beta_max); }
};

/// Quadratic model of the value function at one step; Vxx is symmetric,
/// stored as (Q, C Q^T) with a symmetric core C, or the zero marker.
struct ValueExpansion {
  Vector Vx;
  ProjectedMatrix Vxx;
};

/// Feedforward k_t and projected feedback K_t for t = 1..T.
struct GainSchedule {
  std::vector<Vector> k;
  std::vector<ProjectedMatrix> K;

  int steps() const { return static_cast<int>(k.size()); }
  const Vector& feedforward(int t) const { return k.at(static_cast<std::size_t>(t - 1)); }
  const ProjectedMatrix& feedback(int t) const { return K.at(static_cast<std::size_t>(t - 1)); }
};

struct BackwardResult {
  GainSchedule gains;
  std::vector<ValueExpansion> values;  // values[t] for t = 0..T
};

namespace detail {

/// (Q, C Q^T) for a symmetric core C.
inline ProjectedMatrix from_core(Matrix q, const Matrix& core) {
  Matrix sym = 0.5 * (core + core.transpose());
  Matrix b = sym * q.transpose();
  return {std::move(q), std::move(b)};
}

/// Rank-limited symmetric projection of the symmetric operator `a`.
inline ProjectedMatrix symmetric_projection(const LinOp& a, int rank_k, std::uint64_t seed) {
  const auto k = std::min<Eigen::Index>(rank_k, a.rows);
  if (k < 1) return ProjectedMatrix::zero(a.rows, a.cols);
  const Matrix q = randomized_range(a, k, seed);
  const ProjectedMatrix p = project(a, q);
  return from_core(p.Q, p.symmetric_core());
}

/// Factored symmetric operator v -> R^T S R v.
inline LinOp factored_symmetric(const Matrix& r, const Matrix& s) {
  auto rr = std::make_shared<const Matrix>(r);
  auto ss = std::make_shared<const Matrix>(s);
  auto act = [rr, ss](const Vector& v) { return Vector(rr->transpose() * (*ss * (*rr * v))); };
  return {r.cols(), r.cols(), act, act};
}

/// Rows q_i^T J, i.e. (J^T q_i)^T, from one vjp per frame column.
inline Matrix frame_times_jacobian(const Matrix& q, const StepJacobian& jac) {
  Matrix r(q.cols(), q.rows());
  for (Eigen::Index i = 0; i < q.cols(); ++i) r.row(i) = jac.vjp_x(q.col(i)).transpose();
  return r;
}

}  // namespace detail

/// V_x = grad l0(x0); V_xx = rank-k projection of the Gauss-Newton
/// terminal Hessian, or the zero marker when rank_k = 0.
inline ValueExpansion init_value_expansion(const Measurement& meas, const Vector& x0, int rank_k,
                                           std::uint64_t seed) {
  ValueExpansion v;
  v.Vx = terminal_cost_grad(meas, x0);
  const auto d = x0.size();
  if (rank_k == 0) {
    v.Vxx = ProjectedMatrix::zero(d, d);
    return v;
  }
  auto hess = [&meas, x0](const Vector& w) { return terminal_cost_hess_action(meas, x0, w); };
  v.Vxx = detail::symmetric_projection(LinOp{d, d, hess, hess}, rank_k, seed);
  return v;
}

/// Riccati sweep t = 1..T with the mode-specific simplified Q-terms
/// (l_x = 0, l_xx = 0, l_u = 2 w u, l_uu = 2 w I) and Tikhonov-regularized
/// Q_uu = (2 w + alpha_t) I + [second-order term], inverted by Woodbury.
inline BackwardResult backward_pass(const Trajectory& traj, const Measurement& meas, const ScoreModel& score,
                                    const VpSchedule& sched, const SolverConfig& cfg,
                                    std::uint64_t seed = 0) {
  const int steps = sched.steps();
  if (traj.steps() != steps) throw Error("trajectory length does not match the schedule");
  const auto d = traj.x0().size();

  BackwardResult out;
  out.values.resize(static_cast<std::size_t>(steps) + 1);
  out.gains.k.resize(static_cast<std::size_t>(steps));
  out.gains.K.resize(static_cast<std::size_t>(steps));
  out.values[0] = init_value_expansion(meas, traj.x0(), cfg.rank_k, derive_seed(seed, 0));

  for (int t = 1; t <= steps; ++t) {
    const ValueExpansion& next = out.values[static_cast<std::size_t>(t) - 1];
    const Vector& u = traj.control(t);
    const StepJacobian jac(traj.state(t), u, t, score, sched, traj.mode);
    const double diag = 2.0 * cfg.running_weight + cfg.alpha_at(t, sched);
    const Vector l_u = 2.0 * cfg.running_weight * u;

    const Vector q_x = jac.vjp_x(next.Vx);
    const Vector q_u = traj.mode == ControlMode::output ? Vector(l_u + next.Vx) : Vector(l_u + q_x);

    ValueExpansion& cur = out.values[static_cast<std::size_t>(t)];
    Vector& k = out.gains.k[static_cast<std::size_t>(t) - 1];
    ProjectedMatrix& K = out.gains.K[static_cast<std::size_t>(t) - 1];

    if (next.Vxx.is_zero()) {
      // no curvature: Q_uu = diag I, K = 0, V stays first order
      if (!(diag > 0.0) || !std::isfinite(diag)) throw IllConditionedError();
      k = -q_u / diag;
      K = ProjectedMatrix::zero(d, d);
      cur.Vx = q_x;
      cur.Vxx = ProjectedMatrix::zero(d, d);
      continue;
    }

    const Matrix& frame_next = next.Vxx.Q;
    const Matrix core_next = next.Vxx.symmetric_core();
    const Matrix r = detail::frame_times_jacobian(frame_next, jac);  // Q'^T h_x
    const std::uint64_t step_seed = derive_seed(seed, static_cast<std::uint64_t>(t));

    if (traj.mode == ControlMode::output) {
      // Q_uu = diag I + V', Q_ux = V' h_x, Q_xx = h_x^T V' h_x
      const auto kk = core_next.rows();
      const WoodburyInverse quu_inv(diag, d, frame_next, core_next);
      k = -quu_inv.apply(q_u);
      const Matrix shifted = diag * Matrix::Identity(kk, kk) + core_next;
      const Eigen::PartialPivLU<Matrix> lu(shifted);
      if (!(lu.rcond() > 1e-14)) throw IllConditionedError();
      const Matrix gain_core = -lu.solve(core_next);  // -(diag I + S')^{-1} S'
      K = ProjectedMatrix{frame_next, gain_core * r};
      cur.Vx = q_x + K.apply_transpose(q_u);
      Matrix s_new = core_next + core_next * gain_core;  // S' - S'(diag I + S')^{-1} S'
      s_new = 0.5 * (s_new + s_new.transpose());
      cur.Vxx = detail::symmetric_projection(detail::factored_symmetric(r, s_new), cfg.rank_k, step_seed);
    } else {
      // Q_xx = Q_ux = Q_uu - l_uu = h_x^T V' h_x, represented in its own frame P
      const ProjectedMatrix m = detail::symmetric_projection(
          detail::factored_symmetric(r, core_next), cfg.rank_k, step_seed);
      const Matrix& p = m.Q;
      const Matrix c = m.symmetric_core();
      const auto kk = c.rows();
      const WoodburyInverse quu_inv(diag, d, p, c);
      k = -quu_inv.apply(q_u);
      const Eigen::PartialPivLU<Matrix> lu(diag * Matrix::Identity(kk, kk) + c);
      if (!(lu.rcond() > 1e-14)) throw IllConditionedError();
      const Matrix gain_core = -lu.solve(c);  // -(diag I + C)^{-1} C
      K = ProjectedMatrix{p, gain_core * p.transpose()};
      cur.Vx = q_x + K.apply_transpose(q_u);
      cur.Vxx = detail::from_core(p, c + c * gain_core);
    }
    if (!k.allFinite() || !cur.Vx.allFinite()) throw IllConditionedError();
  }
  return out;
}

struct ForwardResult {
  Trajectory trajectory;
};

/// u_t* = u_t + lambda P(k)_t + K_t (x_t - x_t'), rolled out t = T..1 from the
/// nominal x_T. P is the Adam preconditioner over the concatenated
/// feedforward vector (one moment step per call), or the identity when
/// `adam` is null.
inline Trajectory forward_pass(const Trajectory& nominal, const GainSchedule& gains, const ScoreModel& score,
                               const VpSchedule& sched, double lambda, Adam* adam) {
  const int steps = nominal.steps();
  if (gains.steps() != steps) throw Error("gains do not match the trajectory");
  const auto d = nominal.x0().size();

  std::vector<Vector> ff(static_cast<std::size_t>(steps));
  if (adam) {
    Vector flat(static_cast<Eigen::Index>(steps) * d);
    for (int t = 1; t <= steps; ++t) flat.segment(static_cast<Eigen::Index>(t - 1) * d, d) = gains.feedforward(t);
    const Vector pre = adam->step(flat);
    for (int t = 1; t <= steps; ++t) ff[static_cast<std::size_t>(t) - 1] = pre.segment(static_cast<Eigen::Index>(t - 1) * d, d);
  } else {
    for (int t = 1; t <= steps; ++t) ff[static_cast<std::size_t>(t) - 1] = gains.feedforward(t);
  }

  Trajectory next;
  next.mode = nominal.mode;
  next.states.resize(nominal.states.size());
  next.controls.resize(nominal.controls.size());
  next.states[static_cast<std::size_t>(steps)] = nominal.xT();
  for (int t = steps; t >= 1; --t) {
    const auto i = static_cast<std::size_t>(t);
    const Vector dx = next.states[i] - nominal.state(t);
    next.controls[i - 1] = nominal.control(t) + lambda * ff[i - 1] + gains.feedback(t).apply(dx);
    next.states[i - 1] = controlled_step(next.states[i], next.controls[i - 1], t, score, sched, nominal.mode);
  }
  return next;
}

/// Inverse problem handed to the solver.
struct ControlProblem {
  Measurement meas;
  const ScoreModel* score = nullptr;
  std::optional<Vector> x_T;  // drawn from N(0, I) with the config seed when empty
};

struct Solution {
  Trajectory trajectory;
  std::vector<double> cost_history;  // entry 0 is the uncontrolled cost
  SolverConfig config;
  Vector x_T;
  long nfe = 0;
  double wall_seconds = 0.0;
  int accepted = 0;
  int rejected = 0;

  const Vector& x0() const { return trajectory.x0(); }
  double final_cost() const { return cost_history.back(); }
};

inline Vector draw_initial_state(Eigen::Index d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x78545f5f));  // "xT"
  return standard_normal(d, rng);
}

/// Iterated backward/forward passes from zero controls and the uncontrolled
/// nominal trajectory. An iteration that raises the terminal cost or diverges
/// is rolled back (controls and Adam moments) and lambda is halved for the
/// next attempt; lambda returns to its configured value after a success. The
/// returned trajectory is therefore the lowest-cost iterate.
inline Solution solve(const ControlProblem& problem, const SolverConfig& cfg) {
  cfg.validate();
  if (!problem.score) throw Error("control problem has no score model");
  const auto start = std::chrono::steady_clock::now();
  const VpSchedule sched = cfg.schedule();
  const auto d = problem.score->dim();
  CountingScore score(*problem.score);

  Solution sol;
  sol.config = cfg;
  sol.x_T = problem.x_T ? *problem.x_T : draw_initial_state(d, cfg.seed);
  require_dim(sol.x_T.size(), d, "x_T");

  Trajectory current = rollout(sol.x_T, zero_controls(cfg.T, d), score, sched, cfg.mode);
  double cost = terminal_cost(problem.meas, current.x0());
  sol.cost_history.push_back(cost);

  std::optional<Adam> adam;
  if (cfg.adam_enabled) adam.emplace(static_cast<Eigen::Index>(cfg.T) * d, cfg.adam);
  double lambda = cfg.lambda;
  std::optional<GainSchedule> gains;

  for (int iter = 1; iter <= cfg.num_iters; ++iter) {
    if (!gains)
      gains = backward_pass(current, problem.meas, score, sched, cfg, derive_seed(cfg.seed, 0x62, iter)).gains;
    const std::optional<Adam> saved = adam;
    bool accepted = false;
    try {
      Trajectory candidate = forward_pass(current, *gains, score, sched, lambda, adam ? &*adam : nullptr);
      const double c = terminal_cost(problem.meas, candidate.x0());
      if (std::isfinite(c) && c <= cost) {
        current = std::move(candidate);
        cost = c;
        accepted = true;
      }
    } catch (const DivergenceError& e) {
      log_debug("iteration " + std::to_string(iter) + ": " + e.what());
    }
    if (accepted) {
      lambda = cfg.lambda;
      gains.reset();
      ++sol.accepted;
    } else {
      adam = saved;
      lambda *= 0.5;
      ++sol.rejected;
    }
    sol.cost_history.push_back(cost);
    log_debug("iteration " + std::to_string(iter) + " cost " + std::to_string(cost));
  }

  sol.trajectory = std::move(current);
  sol.nfe = score.count();
  sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

}  // namespace diffoc
