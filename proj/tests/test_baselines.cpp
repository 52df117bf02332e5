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

#include "diffoc/baselines.hpp"
#include "diffoc/gmm.hpp"
#include "diffoc/mlp.hpp"
#include "oracles.hpp"

namespace diffoc {
namespace {

GaussianMixturePrior two_bumps() {
  GaussianMixturePrior p;
  p.weights = (Vector(2) << 0.4, 0.6).finished();
  p.means = {(Vector(2) << 1.0, 0.5).finished(), (Vector(2) << -1.0, -0.5).finished()};
  p.variances = {Vector::Constant(2, 0.15), Vector::Constant(2, 0.25)};
  return p;
}

Measurement identity_measurement(const Vector& y, double sigma) {
  return {std::make_shared<const ForwardOperator>(ForwardOperator::identity(y.size())), y, sigma};
}

TEST(Uncontrolled, FixedPointAndSingleStep) {
  const GmmScore normal(GaussianMixturePrior::standard_normal(3));
  const VpSchedule s(15);
  const Vector xT = Vector::LinSpaced(3, -2.0, 2.0);
  const BaselineResult r = uncontrolled_sample(xT, normal, s);
  EXPECT_LT((r.x0 - xT).norm(), 1e-12);
  EXPECT_EQ(r.nfe, 15);

  const GmmScore gmm(two_bumps());
  const VpSchedule one(1);
  EXPECT_EQ(uncontrolled_sample(xT.head(2), gmm, one).x0, euler_pf_step(xT.head(2), 1, gmm, one));
  EXPECT_EQ(uncontrolled_sample(xT.head(2), gmm, s).x0, uncontrolled_sample(xT.head(2), gmm, s).x0);
}

TEST(Tweedie, Cases) {
  const GmmScore normal(GaussianMixturePrior::standard_normal(2));
  const VpSchedule s(20);
  const Vector x = (Vector(2) << 0.7, -1.2).finished();
  EXPECT_LT((tweedie_x0(x, 0, normal, s) - x).norm(), 1e-15);
  for (int t : {3, 10, 20}) EXPECT_LT((tweedie_x0(x, t, normal, s) - std::sqrt(s.alpha_bar(t)) * x).norm(), 1e-14);

  // near-degenerate prior N(mu, tiny) with alpha_bar ~ 1e-3: x0_hat ~ mu
  GaussianMixturePrior point;
  point.weights = Vector::Ones(1);
  point.means = {Vector::Constant(2, 2.0)};
  point.variances = {Vector::Constant(2, 1e-10)};
  const GmmScore score(point);
  int t = 20;
  while (t > 1 && s.alpha_bar(t - 1) < 1e-3) --t;
  ASSERT_LT(std::abs(std::log10(s.alpha_bar(t)) + 3.0), 1.0);
  const Vector xt = std::sqrt(s.alpha_bar(t)) * point.means[0] + Vector::Constant(2, 0.8);
  EXPECT_LT((tweedie_x0(xt, t, score, s) - point.means[0]).norm(), 1e-2);
}

TEST(Dps, ZeroGuidanceIsUncontrolled) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(25);
  const Vector xT = (Vector(2) << 0.3, 1.1).finished();
  const Measurement m = identity_measurement(Vector::Constant(2, 0.5), 0.1);
  const BaselineResult dps = dps_sample(xT, m, gmm, s, 0.0);
  EXPECT_EQ(dps.x0, uncontrolled_sample(xT, gmm, s).x0);
  EXPECT_EQ(dps.nfe, 50);
  EXPECT_THROW(dps_sample(xT, m, gmm, s, -1.0), Error);
}

TEST(Dps, ConjugateGaussianPosteriorMean) {
  const GmmScore normal(GaussianMixturePrior::standard_normal(1));
  const VpSchedule s(1000);
  const Measurement m = identity_measurement(Vector::Constant(1, 0.5), 0.1);
  const BaselineResult r = dps_sample(Vector::Constant(1, 0.3), m, normal, s, 1.0);
  EXPECT_NEAR(r.x0[0], 0.5 / 1.01, 0.1);
}

TEST(Dps, MovesTowardMeasurement) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(200);
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector xT = standard_normal(2, rng);
    const Measurement m = identity_measurement(standard_normal(2, rng), 0.5);
    const double base = (uncontrolled_sample(xT, gmm, s).x0 - m.y).norm();
    for (double scale : {0.5, 1.0}) EXPECT_LT((dps_sample(xT, m, gmm, s, scale).x0 - m.y).norm(), base);
  }
}

TEST(ChainedScore, MatchesFiniteDifferences) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(6);
  const Measurement m = identity_measurement((Vector(2) << 0.2, -0.4).finished(), 0.3);
  const Vector xT = (Vector(2) << 0.9, 0.1).finished();
  const Trajectory traj = rollout(xT, zero_controls(6, 2), gmm, s, ControlMode::output);
  const auto grads = chained_conditional_score(traj, m, gmm, s);
  const Vector fd = oracle::fd_gradient(
      [&](const Vector& z) { return -terminal_cost(m, rollout(z, zero_controls(6, 2), gmm, s, ControlMode::output).x0()); },
      xT);
  EXPECT_LT(oracle::rel_err(grads.back(), fd), 1e-6);
}

TEST(OutputEquivalence, CosineAndInverseAlpha) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(20);
  const Measurement m = identity_measurement((Vector(2) << 0.8, -0.3).finished(), 0.2);
  const EquivalenceReport rep =
      verify_output_mode_equivalence(m, gmm, (Vector(2) << -0.5, 1.2).finished(), s, AlphaRule::constant, 1e-3);
  ASSERT_EQ(rep.per_t_cosine.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_GE(rep.per_t_cosine[i], 1.0 - 1e-9);
    EXPECT_NEAR(rep.per_t_ratio[i] / rep.inverse_alpha[i], 1.0, 1e-8);
  }
}

TEST(OutputEquivalence, InverseG2dtRatioConstantForConstantBeta) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(20, 2.0, 2.0);
  const Measurement m = identity_measurement((Vector(2) << 0.8, -0.3).finished(), 0.2);
  const EquivalenceReport rep =
      verify_output_mode_equivalence(m, gmm, (Vector(2) << -0.5, 1.2).finished(), s, AlphaRule::inverse_g2dt);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_GE(rep.per_t_cosine[i], 1.0 - 1e-9);
    EXPECT_NEAR(rep.per_t_ratio[i] / rep.per_t_ratio[0], 1.0, 1e-6);
    EXPECT_NEAR(rep.per_t_ratio[i] / rep.g2dt[i], 1.0, 1e-8);
  }
}

TEST(OutputEquivalence, NetworkScoreAndClassifier) {
  const MlpScore net(MlpScoreNet::random_init(3, 5));
  const VpSchedule s(10);
  const Measurement m = identity_measurement(Vector::LinSpaced(3, 0.1, 0.3), 0.5);
  const EquivalenceReport rep = verify_output_mode_equivalence(m, net, Vector::Ones(3), s, AlphaRule::constant, 1.0);
  for (double c : rep.per_t_cosine) EXPECT_GE(c, 1.0 - 1e-9);

  Rng rng(3);
  auto cls = std::make_shared<const ForwardOperator>(ForwardOperator::classifier(Classifier(init_layers({3, 6, 2}, rng))));
  const EquivalenceReport rc = verify_output_mode_equivalence(class_target(cls, 1), net, Vector::Ones(3), s,
                                                              AlphaRule::constant, 1.0);
  for (double c : rc.per_t_cosine) EXPECT_GE(c, 1.0 - 1e-9);
}

TEST(PredictorCorrector, ResidualAndWeights) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(20);
  const Measurement m = identity_measurement((Vector(2) << 0.6, 0.1).finished(), 0.3);
  const PredictorCorrectorReport rep =
      verify_input_mode_predictor_corrector(m, gmm, (Vector(2) << 1.0, -1.0).finished(), s);
  ASSERT_EQ(rep.per_t_residual.size(), 20u);
  EXPECT_LE(rep.max_residual, 1e-8);
  for (std::size_t i = 1; i < 20; ++i) EXPECT_NEAR(rep.conditional_weight[i], 2.0, 1e-12);
  // before the pass the controlled state equals the uncontrolled one
  for (int t = 0; t <= 20; ++t) EXPECT_EQ(rep.uncontrolled.state(t), rollout(rep.uncontrolled.xT(), zero_controls(20, 2), gmm, s, ControlMode::input).state(t));
}

TEST(PredictorCorrector, SatisfiedMeasurementGivesUnconditionalStep) {
  const GmmScore gmm(two_bumps());
  const VpSchedule s(12);
  const Vector xT = (Vector(2) << 1.0, -1.0).finished();
  const Trajectory free = rollout(xT, zero_controls(12, 2), gmm, s, ControlMode::input);
  const PredictorCorrectorReport rep =
      verify_input_mode_predictor_corrector(identity_measurement(free.x0(), 0.3), gmm, xT, s);
  for (int t = 0; t <= 12; ++t) EXPECT_EQ(rep.controlled.state(t), free.state(t));
  EXPECT_EQ(rep.max_residual, 0.0);
}

}  // namespace
}  // namespace diffoc
