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

#include <limits>
#include <vector>

#include "diffoc/common.hpp"
#include "diffoc/score.hpp"

namespace diffoc {

/// Mixture of axis-aligned Gaussians; the clean-data prior p_0.
struct GaussianMixturePrior {
  Vector weights;              // M
  std::vector<Vector> means;   // M x d
  std::vector<Vector> variances;  // M x d, diagonal

  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  Eigen::Index components() const { return weights.size(); }

  void validate() const {
    const auto m = weights.size();
    if (m == 0) throw Error("mixture needs at least one component");
    if (static_cast<Eigen::Index>(means.size()) != m ||
        static_cast<Eigen::Index>(variances.size()) != m)
      throw Error("mixture weights, means and variances disagree in count");
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
      throw Error("mixture weights must be nonnegative and sum to 1");
    const auto d = dim();
    if (d == 0) throw Error("mixture dimension must be positive");
    for (Eigen::Index i = 0; i < m; ++i) {
      require_dim(means[i].size(), d, "mixture mean");
      require_dim(variances[i].size(), d, "mixture variance");
      if (!means[i].allFinite()) throw Error("mixture means must be finite");
      if (!variances[i].allFinite() || (variances[i].array() <= 0.0).any())
        throw Error("mixture variances must be strictly positive");
    }
  }

  /// Standard normal N(0, I_d).
  static GaussianMixturePrior standard_normal(Eigen::Index d) {
    GaussianMixturePrior p;
    p.weights = Vector::Ones(1);
    p.means = {Vector::Zero(d)};
    p.variances = {Vector::Ones(d)};
    return p;
  }

  /// One draw; the component index goes to `component` when given.
  Vector sample(Rng& rng, int* component = nullptr) const {
    std::discrete_distribution<int> pick(weights.data(), weights.data() + weights.size());
    const int c = pick(rng);
    if (component) *component = c;
    Vector z = diffoc::standard_normal(dim(), rng);
    return means[c] + (variances[c].array().sqrt() * z.array()).matrix();
  }

  /// log p_0(x), log-sum-exp stabilized.
  double log_density(const Vector& x) const {
    std::vector<double> terms(static_cast<std::size_t>(components()));
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < components(); ++m) {
      const Vector& v = variances[m];
      const double quad = ((x - means[m]).array().square() / v.array()).sum();
      const double logdet = v.array().log().sum();
      terms[m] = std::log(weights[m]) - 0.5 * (quad + logdet + dim() * std::log(2.0 * M_PI));
      top = std::max(top, terms[m]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - top);
    return top + std::log(acc);
  }
};

/// Exact score of the mixture pushed through the VP perturbation kernel:
/// component m becomes N(sqrt(ab) mu_m, ab Sigma_m + (1 - ab) I).
inline ScoreEval gmm_score(const GaussianMixturePrior& prior, const VpSchedule& sched,
                           const Vector& x, int t) {
  if (!x.allFinite()) throw Error("invalid state");
  if (!sched.contains(t)) throw Error("time out of schedule");
  require_dim(x.size(), prior.dim(), "state");

  const double ab = sched.alpha_bar(t);
  const double root_ab = std::sqrt(ab);
  const Eigen::Index count = prior.components();

  // per component: precision (diag), g_m = -(x - c_m) / v_m, log weight
  std::vector<Vector> precision(count), grads(count);
  Vector logw(count);
  for (Eigen::Index m = 0; m < count; ++m) {
    Vector var = (ab * prior.variances[m].array() + (1.0 - ab)).matrix();
    precision[m] = var.cwiseInverse();
    Vector diff = x - root_ab * prior.means[m];
    grads[m] = -(diff.array() * precision[m].array()).matrix();
    logw[m] = std::log(prior.weights[m]) -
              0.5 * ((diff.array().square() * precision[m].array()).sum() + var.array().log().sum());
  }
  const double top = logw.maxCoeff();
  Vector resp = (logw.array() - top).exp().matrix();
  resp /= resp.sum();

  Vector value = Vector::Zero(x.size());
  for (Eigen::Index m = 0; m < count; ++m) value += resp[m] * grads[m];

  // J = sum_m r_m (-diag(prec_m) + g_m g_m^T) - s s^T is symmetric, so vjp == jvp.
  auto action = [resp, precision = std::move(precision), grads = std::move(grads),
                 value](const Vector& v) {
    Vector out = -(value * value.dot(v));
    for (Eigen::Index m = 0; m < resp.size(); ++m)
      out += resp[m] * (grads[m] * grads[m].dot(v) - (precision[m].array() * v.array()).matrix());
    return out;
  };
  return ScoreEval{std::move(value), action, action};
}

class GmmScore final : public ScoreModel {
 public:
  explicit GmmScore(GaussianMixturePrior prior) : prior_(std::move(prior)) { prior_.validate(); }

  Eigen::Index dim() const override { return prior_.dim(); }
  ScoreEval evaluate(const Vector& x, int t, const VpSchedule& sched) const override {
    return gmm_score(prior_, sched, x, t);
  }
  const GaussianMixturePrior& prior() const { return prior_; }

 private:
  GaussianMixturePrior prior_;
};

}  // namespace diffoc
