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

// Independent reference computations for the test suites. Nothing here
// calls the projected / Woodbury / chained-vjp code paths under test.

#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "diffoc/dynamics.hpp"
#include "diffoc/operators.hpp"

namespace diffoc::oracle {

inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.norm(), 1e-300);
  return (got - want).norm() / scale;
}

/// Central-difference Jacobian of f at x (columns = d f / d x_i).
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Best rank-k approximation via a dense SVD.
inline Matrix svd_truncate(const Matrix& a, Eigen::Index k) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(k, s.size()); ++i)
    out += s[i] * svd.matrixU().col(i) * svd.matrixV().col(i).transpose();
  return out;
}

/// Dense matrix of a linear action v -> f(v) on R^n.
inline Matrix materialize(const std::function<Vector(const Vector&)>& f, Eigen::Index n) {
  Matrix m;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector col = f(Vector::Unit(n, i));
    if (i == 0) m.resize(col.size(), n);
    m.col(i) = col;
  }
  return m;
}

/// Textbook iLQR backward pass on dense matrices:
///   Q_x = l_x + h_x^T V_x',            Q_u = l_u + h_u^T V_x'
///   Q_xx = l_xx + h_x^T V_xx' h_x,     Q_ux = l_ux + h_u^T V_xx' h_x
///   Q_uu = l_uu + h_u^T V_xx' h_u
///   k = -(Q_uu + a I)^{-1} Q_u,        K = -(Q_uu + a I)^{-1} Q_ux
///   V_x = Q_x - K^T (Q_uu + a I) k,    V_xx = Q_xx - K^T (Q_uu + a I) K
/// with l_t = w ||u||^2 and the full Gauss-Newton terminal Hessian.
struct DenseStep {
  Vector k;
  Matrix K;
  Vector Vx;
  Matrix Vxx;
};

struct DenseBackward {
  std::vector<DenseStep> steps;  // slot t for t = 0..T (slot 0 holds V only)
};

inline DenseBackward dense_ilqr_backward(const Trajectory& traj, const Measurement& meas, const ScoreModel& score,
                                         const VpSchedule& sched, double running_weight,
                                         const std::function<double(int)>& alpha_at) {
  const Eigen::Index d = traj.x0().size();
  DenseBackward out;
  out.steps.resize(traj.states.size());
  out.steps[0].Vx = terminal_cost_grad(meas, traj.x0());
  out.steps[0].Vxx = materialize([&](const Vector& v) { return terminal_cost_hess_action(meas, traj.x0(), v); }, d);
  const Matrix eye = Matrix::Identity(d, d);
  for (int t = 1; t <= traj.steps(); ++t) {
    const Vector& x = traj.state(t);
    const Vector& u = traj.control(t);
    // Jacobians by forward-mode action on unit vectors; h_u built separately
    const Matrix hx = materialize([&](const Vector& v) { return step_jvp_x(x, u, t, v, score, sched, traj.mode); }, d);
    const Matrix hu = traj.mode == ControlMode::output ? eye : hx;
    const DenseStep& nxt = out.steps[static_cast<std::size_t>(t) - 1];
    const Vector lu = 2.0 * running_weight * u;
    const Matrix luu = 2.0 * running_weight * eye;
    const Vector qx = hx.transpose() * nxt.Vx;
    const Vector qu = lu + hu.transpose() * nxt.Vx;
    const Matrix qxx = hx.transpose() * nxt.Vxx * hx;
    const Matrix qux = hu.transpose() * nxt.Vxx * hx;
    const Matrix quu = luu + hu.transpose() * nxt.Vxx * hu;
    const Matrix quu_reg = quu + alpha_at(t) * eye;
    const Matrix inv = quu_reg.inverse();
    DenseStep& cur = out.steps[static_cast<std::size_t>(t)];
    cur.k = -inv * qu;
    cur.K = -inv * qux;
    cur.Vx = qx - cur.K.transpose() * quu_reg * cur.k;
    cur.Vxx = qxx - cur.K.transpose() * quu_reg * cur.K;
  }
  return out;
}

}  // namespace diffoc::oracle
