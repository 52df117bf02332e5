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

namespace diffoc {

/// A matrix known only through its actions v -> A v and w -> A^T w.
struct LinOp {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::function<Vector(const Vector&)> forward;
  std::function<Vector(const Vector&)> adjoint;

  static LinOp from_dense(const Matrix& a) {
    auto m = std::make_shared<const Matrix>(a);
    return {a.rows(), a.cols(), [m](const Vector& v) { return Vector(*m * v); },
            [m](const Vector& w) { return Vector(m->transpose() * w); }};
  }
};

/// Wraps a LinOp and counts how often each action is taken.
class CountingLinOp {
 public:
  explicit CountingLinOp(LinOp inner)
      : inner_(std::move(inner)),
        forwards_(std::make_shared<std::atomic<long>>(0)),
        adjoints_(std::make_shared<std::atomic<long>>(0)) {}

  LinOp op() const {
    auto f = forwards_;
    auto a = adjoints_;
    auto fwd = inner_.forward;
    auto adj = inner_.adjoint;
    return {inner_.rows, inner_.cols,
            [f, fwd](const Vector& v) {
              ++*f;
              return fwd(v);
            },
            [a, adj](const Vector& w) {
              ++*a;
              return adj(w);
            }};
  }

  long forward_calls() const { return forwards_->load(); }
  long adjoint_calls() const { return adjoints_->load(); }

 private:
  LinOp inner_;
  std::shared_ptr<std::atomic<long>> forwards_;
  std::shared_ptr<std::atomic<long>> adjoints_;
};

/// A (m x n) stored as a column-orthonormal frame Q (m x k) and B = Q^T A
/// (k x n), so that A ~ Q B. k = 0 is the exact zero matrix.
struct ProjectedMatrix {
  Matrix Q;
  Matrix B;

  static ProjectedMatrix zero(Eigen::Index rows, Eigen::Index cols) {
    return {Matrix(rows, 0), Matrix(0, cols)};
  }

  Eigen::Index rows() const { return Q.rows(); }
  Eigen::Index cols() const { return B.cols(); }
  Eigen::Index rank() const { return Q.cols(); }
  bool is_zero() const { return Q.cols() == 0; }

  Matrix reconstruct() const {
    if (is_zero()) return Matrix::Zero(rows(), cols());
    return Q * B;
  }
  /// (Q B) v
  Vector apply(const Vector& v) const {
    if (is_zero()) return Vector::Zero(rows());
    return Q * (B * v);
  }
  /// (Q B)^T w
  Vector apply_transpose(const Vector& w) const {
    if (is_zero()) return Vector::Zero(cols());
    return B.transpose() * (Q.transpose() * w);
  }
  /// k x k core B Q of a square matrix whose row and column spaces lie in
  /// span(Q); symmetrized.
  Matrix symmetric_core() const {
    Matrix c = B * Q;
    return 0.5 * (c + c.transpose());
  }
};

/// Single-pass Gaussian range finder: Y = A Omega with k forward actions,
/// Q from the QR factorization of Y.
inline Matrix randomized_range(const LinOp& a, Eigen::Index k, Rng& rng) {
  if (k < 1 || k > std::min(a.rows, a.cols)) throw Error("rank k out of range");
  const Matrix omega = standard_normal(a.cols, k, rng);
  Matrix y(a.rows, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    y.col(j) = a.forward(omega.col(j));
    require_dim(y.col(j).size(), a.rows, "linear operator output");
  }
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(a.rows, k);
}

inline Matrix randomized_range(const LinOp& a, Eigen::Index k, std::uint64_t seed) {
  Rng rng(seed);
  return randomized_range(a, k, rng);
}

/// B = Q^T A from k adjoint actions; A is never materialized.
inline ProjectedMatrix project(const LinOp& a, const Matrix& q) {
  require_dim(q.rows(), a.rows, "frame rows");
  Matrix b(q.cols(), a.cols);
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    Vector row = a.adjoint(q.col(i));
    require_dim(row.size(), a.cols, "linear operator adjoint output");
    b.row(i) = row.transpose();
  }
  return {q, std::move(b)};
}

/// A_i A_j ~ Q_i B_i Q_j B_j; the leading frame Q_i is kept and the rest
/// is folded into the new B.
inline ProjectedMatrix proj_multiply(const ProjectedMatrix& pi, const ProjectedMatrix& pj) {
  require_dim(pj.rows(), pi.cols(), "projected product inner dimension");
  if (pi.is_zero()) return {pi.Q, Matrix(0, pj.cols())};
  if (pj.is_zero()) return {pi.Q, Matrix::Zero(pi.rank(), pj.cols())};
  return {pi.Q, (pi.B * pj.Q) * pj.B};
}

/// (D + Q C Q^T)^{-1} for positive diagonal D and a symmetric k x k core C,
/// factored once: cost O(k^3 + k d) per application.
class WoodburyInverse {
 public:
  WoodburyInverse(Vector diag, Matrix q, Matrix core)
      : inv_diag_(std::move(diag)), q_(std::move(q)), core_(std::move(core)) {
    if (!inv_diag_.allFinite() || (inv_diag_.array() <= 0.0).any()) throw IllConditionedError();
    inv_diag_ = inv_diag_.cwiseInverse();
    require_dim(q_.rows(), inv_diag_.size(), "woodbury frame rows");
    require_dim(core_.rows(), q_.cols(), "woodbury core");
    if (q_.cols() == 0) return;
    const Matrix m = q_.transpose() * inv_diag_.asDiagonal() * q_;
    const Matrix s = Matrix::Identity(q_.cols(), q_.cols()) + m * core_;
    lu_.compute(s);
    if (!(lu_.rcond() > 1e-14) || !core_.allFinite()) throw IllConditionedError();
  }

  /// Uniform diagonal d * I.
  WoodburyInverse(double diag, Eigen::Index n, Matrix q, Matrix core)
      : WoodburyInverse(Vector::Constant(n, diag), std::move(q), std::move(core)) {}

  Vector apply(const Vector& v) const {
    require_dim(v.size(), inv_diag_.size(), "woodbury rhs");
    Vector dv = inv_diag_.cwiseProduct(v);
    if (q_.cols() == 0) return dv;
    const Vector inner = core_ * lu_.solve(q_.transpose() * dv);
    return dv - inv_diag_.cwiseProduct(q_ * inner);
  }

 private:
  Vector inv_diag_;
  Matrix q_;
  Matrix core_;
  Eigen::PartialPivLU<Matrix> lu_;
};

/// (diag + C)^{-1} v with C a symmetric PSD projected matrix.
inline Vector woodbury_inverse_action(const Vector& diag, const ProjectedMatrix& c, const Vector& v) {
  if (c.is_zero()) return WoodburyInverse(diag, Matrix(diag.size(), 0), Matrix(0, 0)).apply(v);
  require_dim(c.rows(), c.cols(), "woodbury matrix");
  return WoodburyInverse(diag, c.Q, c.symmetric_core()).apply(v);
}

}  // namespace diffoc
