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

#include <gtest/gtest.h>

#include "diffoc/lowrank.hpp"
#include "oracles.hpp"

namespace diffoc {
namespace {

Matrix random_rank(Eigen::Index m, Eigen::Index n, Eigen::Index r, Rng& rng) {
  return standard_normal(m, r, rng) * standard_normal(r, n, rng);
}

Matrix random_psd(Eigen::Index d, Eigen::Index r, Rng& rng) {
  const Matrix f = standard_normal(d, r, rng);
  return f * f.transpose();
}

double orthonormality_error(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

TEST(RandomizedRange, RankOneExact) {
  Rng rng(1);
  const Vector u = standard_normal(7, rng), v = standard_normal(5, rng);
  const Matrix a = u * v.transpose();
  const Matrix q = randomized_range(LinOp::from_dense(a), 1, 3);
  EXPECT_LE((a - q * q.transpose() * a).norm(), 1e-10 * a.norm());
  EXPECT_LE(orthonormality_error(q), 1e-10);
}

TEST(RandomizedRange, ZeroMatrix) {
  const Matrix a = Matrix::Zero(6, 6);
  const Matrix q = randomized_range(LinOp::from_dense(a), 2, 0);
  EXPECT_LE(orthonormality_error(q), 1e-10);
  EXPECT_EQ(project(LinOp::from_dense(a), q).reconstruct(), a);
}

TEST(RandomizedRange, MatchesSvdTruncationAtTrueRank) {
  Rng rng(2);
  const Matrix a = random_rank(10, 10, 3, rng);
  const ProjectedMatrix p = project(LinOp::from_dense(a), randomized_range(LinOp::from_dense(a), 3, 5));
  EXPECT_LE((p.reconstruct() - oracle::svd_truncate(a, 3)).norm(), 1e-9 * a.norm());
}

TEST(RandomizedRange, FullRankReconstructs) {
  Rng rng(3);
  for (Eigen::Index d : {2, 5, 9, 16}) {
    const Matrix a = standard_normal(d, d, rng);
    const LinOp op = LinOp::from_dense(a);
    const ProjectedMatrix p = project(op, randomized_range(op, d, rng));
    EXPECT_LE(oracle::rel_err(p.reconstruct(), a), 1e-9);
  }
  const Matrix tall = standard_normal(12, 4, rng);
  const LinOp op = LinOp::from_dense(tall);
  EXPECT_LE(oracle::rel_err(project(op, randomized_range(op, 4, rng)).reconstruct(), tall), 1e-9);
}

TEST(RandomizedRange, RankOutOfRange) {
  const LinOp op = LinOp::from_dense(Matrix::Identity(4, 3));
  EXPECT_THROW(randomized_range(op, 0, 1), Error);
  EXPECT_THROW(randomized_range(op, 4, 1), Error);
}

TEST(RandomizedRange, SeedDeterminism) {
  Rng rng(4);
  const Matrix a = standard_normal(6, 6, rng);
  EXPECT_EQ(randomized_range(LinOp::from_dense(a), 2, 9), randomized_range(LinOp::from_dense(a), 2, 9));
}

TEST(Project, IdentityGivesQTranspose) {
  Rng rng(5);
  Eigen::HouseholderQR<Matrix> qr(standard_normal(6, 2, rng));
  const Matrix q = qr.householderQ() * Matrix::Identity(6, 2);
  const ProjectedMatrix p = project(LinOp::from_dense(Matrix::Identity(6, 6)), q);
  EXPECT_LT((p.B - q.transpose()).norm(), 1e-14);
}

TEST(Project, UsesOnlyDeclaredActions) {
  Rng rng(6);
  const Matrix a = random_rank(9, 7, 2, rng);
  CountingLinOp counted(LinOp::from_dense(a));
  const LinOp op = counted.op();
  const Matrix q = randomized_range(op, 2, 1);
  EXPECT_EQ(counted.forward_calls(), 2);
  EXPECT_EQ(counted.adjoint_calls(), 0);
  const ProjectedMatrix p = project(op, q);
  EXPECT_EQ(counted.forward_calls(), 2);
  EXPECT_EQ(counted.adjoint_calls(), 2);
  EXPECT_LE(oracle::rel_err(p.reconstruct(), a), 1e-10);
  EXPECT_THROW(project(op, Matrix::Identity(7, 2)), Error);
}

TEST(ProjMultiply, IdentityRight) {
  Rng rng(7);
  const Matrix a = random_rank(5, 5, 2, rng);
  const LinOp op = LinOp::from_dense(a);
  const ProjectedMatrix pi = project(op, randomized_range(op, 2, 1));
  const LinOp id = LinOp::from_dense(Matrix::Identity(5, 5));
  const ProjectedMatrix pj = project(id, randomized_range(id, 5, 1));
  const ProjectedMatrix prod = proj_multiply(pi, pj);
  EXPECT_EQ(prod.Q, pi.Q);
  EXPECT_LT((prod.reconstruct() - pi.reconstruct()).norm(), 1e-12);
}

TEST(ProjMultiply, OrthogonalRanges) {
  const Matrix a = Vector::Unit(4, 0) * Vector::Unit(4, 1).transpose();
  const Matrix b = Vector::Unit(4, 2) * Vector::Unit(4, 3).transpose();
  const ProjectedMatrix pa = project(LinOp::from_dense(a), randomized_range(LinOp::from_dense(a), 1, 1));
  const ProjectedMatrix pb = project(LinOp::from_dense(b), randomized_range(LinOp::from_dense(b), 1, 2));
  EXPECT_LE(proj_multiply(pa, pb).reconstruct().norm(), 1e-10);
}

TEST(ProjMultiply, MatchesDenseProduct) {
  Rng rng(8);
  const Matrix a = random_rank(6, 5, 2, rng), b = random_rank(5, 7, 2, rng);
  const ProjectedMatrix pa = project(LinOp::from_dense(a), randomized_range(LinOp::from_dense(a), 2, 1));
  const ProjectedMatrix pb = project(LinOp::from_dense(b), randomized_range(LinOp::from_dense(b), 2, 2));
  EXPECT_LE(oracle::rel_err(proj_multiply(pa, pb).reconstruct(), pa.reconstruct() * pb.reconstruct()), 1e-9);
  EXPECT_THROW(proj_multiply(pb, pb), Error);
}

TEST(Woodbury, ZeroCore) {
  const Vector diag = (Vector(3) << 2.0, 4.0, 0.5).finished();
  const Vector v = (Vector(3) << 1.0, 1.0, 1.0).finished();
  EXPECT_EQ(woodbury_inverse_action(diag, ProjectedMatrix::zero(3, 3), v), v.cwiseQuotient(diag));
}

TEST(Woodbury, HandInverse) {
  const Matrix c = Vector::Unit(3, 0) * Vector::Unit(3, 0).transpose();
  const ProjectedMatrix pc = project(LinOp::from_dense(c), randomized_range(LinOp::from_dense(c), 1, 4));
  const Vector v = (Vector(3) << 3.0, -1.0, 2.0).finished();
  Vector want = v;
  want[0] -= 0.5 * v[0];
  EXPECT_LT((woodbury_inverse_action(Vector::Ones(3), pc, v) - want).norm(), 1e-14);
}

TEST(Woodbury, MatchesDenseInverse) {
  Rng rng(9);
  std::uniform_real_distribution<double> pos(0.1, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 6, k = 2;
    const Matrix c = random_psd(d, k, rng);
    Vector diag(d);
    for (Eigen::Index i = 0; i < d; ++i) diag[i] = pos(rng);
    const LinOp op = LinOp::from_dense(c);
    const ProjectedMatrix pc = project(op, randomized_range(op, k, rng));
    const Vector v = standard_normal(d, rng);
    const Matrix dense = Matrix(diag.asDiagonal()) + c;
    const Vector want = dense.ldlt().solve(v);
    const Vector got = woodbury_inverse_action(diag, pc, v);
    EXPECT_LE((got - want).norm(), 1e-8 * want.norm());
    EXPECT_LE((dense * got - v).norm(), 1e-8 * v.norm());
  }
}

TEST(Woodbury, IllConditioned) {
  // D = 0 is rejected outright
  EXPECT_THROW(WoodburyInverse(0.0, 2, Matrix::Identity(2, 1), Matrix::Identity(1, 1)), IllConditionedError);
  // tiny D against C = -D along the frame makes the core singular
  const Matrix q = Vector::Unit(2, 0);
  try {
    WoodburyInverse(1e-3, 2, q, Matrix::Constant(1, 1, -1e-3));
    FAIL();
  } catch (const IllConditionedError& e) {
    EXPECT_STREQ(e.what(), "ill-conditioned Q_uu");
  }
}

}  // namespace
}  // namespace diffoc
