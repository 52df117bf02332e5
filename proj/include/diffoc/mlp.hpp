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
#include <memory>
#include <numeric>
#include <vector>

#include "diffoc/adam.hpp"
#include "diffoc/layers.hpp"
#include "diffoc/log.hpp"
#include "diffoc/score.hpp"

namespace diffoc {

/// Score network: [x, emb(tau)] -> hidden -> hidden -> d with softplus
/// activations and a sinusoidal time embedding. Predicts the score directly.
class MlpScoreNet {
 public:
  static constexpr Eigen::Index kHidden = 128;
  static constexpr Eigen::Index kEmbed = 16;

  explicit MlpScoreNet(std::vector<DenseLayer> layers)
      : layers_(std::make_shared<std::vector<DenseLayer>>(std::move(layers))) {
    const auto& ls = *layers_;
    if (ls.empty()) throw Error("score network needs at least one layer");
    for (std::size_t i = 1; i < ls.size(); ++i)
      require_dim(ls[i].in(), ls[i - 1].out(), "layer input");
    for (const auto& l : ls) require_dim(l.bias.size(), l.out(), "layer bias");
    require_dim(ls.front().in(), ls.back().out() + kEmbed, "network input");
    if (!layers_finite(ls)) throw Error("score network parameters must be finite");
  }

  /// Untrained network, weights ~ N(0, 1/fan_in), biases 0.
  static MlpScoreNet random_init(Eigen::Index d, std::uint64_t seed) {
    if (d < 1) throw Error("network dimension must be >= 1");
    Rng rng(seed);
    return MlpScoreNet(init_layers({d + kEmbed, kHidden, kHidden, d}, rng));
  }

  static MlpScoreNet zeros(Eigen::Index d) {
    std::vector<DenseLayer> layers;
    const std::vector<Eigen::Index> dims{d + kEmbed, kHidden, kHidden, d};
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      layers.push_back({Matrix::Zero(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1])});
    return MlpScoreNet(std::move(layers));
  }

  Eigen::Index dim() const { return layers_->back().out(); }
  const std::vector<DenseLayer>& layers() const { return *layers_; }
  /// Copy-on-write access; evaluations already handed out keep the old weights.
  std::vector<DenseLayer>& mutable_layers() {
    if (layers_.use_count() > 1) layers_ = std::make_shared<std::vector<DenseLayer>>(*layers_);
    return *layers_;
  }

  static Vector embed(double tau) {
    Vector e(kEmbed);
    const Eigen::Index half = kEmbed / 2;
    for (Eigen::Index i = 0; i < half; ++i) {
      const double freq = std::pow(200.0, static_cast<double>(i) / static_cast<double>(half - 1));
      e[2 * i] = std::sin(freq * tau);
      e[2 * i + 1] = std::cos(freq * tau);
    }
    return e;
  }

  /// Forward pass at continuous time tau, with exact reverse- and
  /// forward-mode Jacobian actions with respect to x.
  ScoreEval evaluate(const Vector& x, double tau) const {
    require_dim(x.size(), dim(), "state");
    Vector input(x.size() + kEmbed);
    input << x, embed(tau);

    // pre-activations of every hidden layer
    const std::shared_ptr<const std::vector<DenseLayer>> layers = layers_;
    auto pre = std::make_shared<std::vector<Vector>>();
    Vector h = input;
    for (std::size_t i = 0; i + 1 < layers->size(); ++i) {
      Vector z = (*layers)[i].weight * h + (*layers)[i].bias;
      h = z.unaryExpr([](double v) { return softplus(v); });
      pre->push_back(std::move(z));
    }
    Vector out = layers->back().weight * h + layers->back().bias;

    const Eigen::Index d = dim();
    auto vjp = [layers, pre, d](const Vector& seed) {
      Vector g = seed;
      for (std::size_t i = layers->size(); i-- > 0;) {
        g = (*layers)[i].weight.transpose() * g;
        if (i > 0) g.array() *= (*pre)[i - 1].unaryExpr([](double z) { return sigmoid(z); }).array();
      }
      return Vector(g.head(d));
    };
    auto jvp = [layers, pre, d](const Vector& v) {
      Vector t = (*layers)[0].weight.leftCols(d) * v;
      for (std::size_t i = 1; i < layers->size(); ++i) {
        t.array() *= (*pre)[i - 1].unaryExpr([](double z) { return sigmoid(z); }).array();
        t = (*layers)[i].weight * t;
      }
      return t;
    };
    return ScoreEval{std::move(out), vjp, jvp};
  }

  /// Batched forward + parameter gradient of sum_j <grad_out_j, out_j>.
  /// Returns outputs (d x B); fills `grad` with the flat parameter gradient
  /// for the upstream derivative produced by `upstream(out)`.
  template <typename Upstream>
  Matrix forward_backward(const Matrix& inputs, Upstream&& upstream, Vector& grad) const {
    const auto& layers = *layers_;
    const std::size_t n = layers.size();
    std::vector<Matrix> acts{inputs};
    std::vector<Matrix> pres;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      Matrix z = (layers[i].weight * acts.back()).colwise() + layers[i].bias;
      acts.push_back(z.unaryExpr([](double v) { return softplus(v); }));
      pres.push_back(std::move(z));
    }
    Matrix out = (layers.back().weight * acts.back()).colwise() + layers.back().bias;
    Matrix g = upstream(out);

    std::vector<DenseLayer> grads(n);
    for (std::size_t i = n; i-- > 0;) {
      grads[i].weight = g * acts[i].transpose();
      grads[i].bias = g.rowwise().sum();
      if (i > 0) {
        g = layers[i].weight.transpose() * g;
        g.array() *= pres[i - 1].unaryExpr([](double z) { return sigmoid(z); }).array();
      }
    }
    grad = flatten(grads);
    return out;
  }

 private:
  std::shared_ptr<std::vector<DenseLayer>> layers_;
};

/// mlp_score at continuous time tau in [0, 1].
inline ScoreEval mlp_score(const MlpScoreNet& net, const Vector& x, double tau) {
  if (!x.allFinite()) throw Error("invalid state");
  return net.evaluate(x, tau);
}

inline MlpScoreNet random_init_score(Eigen::Index d, std::uint64_t seed) {
  return MlpScoreNet::random_init(d, seed);
}

/// ScoreModel adapter; step t is evaluated at tau = t * dt.
class MlpScore final : public ScoreModel {
 public:
  explicit MlpScore(MlpScoreNet net) : net_(std::move(net)) {}
  Eigen::Index dim() const override { return net_.dim(); }
  ScoreEval evaluate(const Vector& x, int t, const VpSchedule& sched) const override {
    if (!sched.contains(t)) throw Error("time out of schedule");
    return mlp_score(net_, x, sched.time(t));
  }
  const MlpScoreNet& net() const { return net_; }

 private:
  MlpScoreNet net_;
};

struct TrainOptions {
  int epochs = 0;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Eigen::Index batch = 64;
  double tau_min = 1e-3;
};

/// Denoising score matching with VP noising. Minimizes the sigma^2-weighted
/// loss E || sigma_tau s(x_tau, tau) + eps ||^2, whose minimizer is the same
/// score as E || s + eps / sigma_tau ||^2. One epoch is one shuffled pass over
/// the samples in minibatches; the final epoch's mean loss is logged.
inline MlpScoreNet train_dsm(MlpScoreNet net, const std::vector<Vector>& samples,
                             const VpSchedule& sched, const TrainOptions& opts,
                             double* final_loss = nullptr) {
  if (samples.empty()) throw Error("empty sample set");
  if (samples.size() < 2) throw Error("training needs at least 2 samples");
  if (!(opts.lr > 0.0)) throw Error("learning rate must be positive");
  const Eigen::Index d = net.dim();
  for (const auto& s : samples) require_dim(s.size(), d, "training sample");
  if (opts.epochs <= 0) return net;

  Rng rng(opts.seed);
  std::uniform_real_distribution<double> unit(opts.tau_min, 1.0);
  Adam adam(flatten(net.layers()).size(), AdamOptions{opts.lr, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index batch = std::min<Eigen::Index>(opts.batch, static_cast<Eigen::Index>(samples.size()));

  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    long seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
      const auto b = static_cast<Eigen::Index>(std::min<std::size_t>(batch, order.size() - start));
      Matrix inputs(d + MlpScoreNet::kEmbed, b);
      Matrix noise = standard_normal(d, b, rng);
      Vector sig(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const double tau = unit(rng);
        const double ab = sched.alpha_bar_at(tau);
        sig[j] = std::sqrt(1.0 - ab);
        inputs.col(j).head(d) = std::sqrt(ab) * samples[order[start + j]] + sig[j] * noise.col(j);
        inputs.col(j).tail(MlpScoreNet::kEmbed) = MlpScoreNet::embed(tau);
      }
      double loss = 0.0;
      Vector grad;
      net.forward_backward(
          inputs,
          [&](const Matrix& out) {
            Matrix resid = out * sig.asDiagonal();
            resid += noise;
            loss = resid.squaredNorm() / static_cast<double>(b);
            return Matrix(2.0 / static_cast<double>(b) * resid * sig.asDiagonal());
          },
          grad);
      Vector params = flatten(net.layers());
      params -= adam.step(grad);
      unflatten(params, net.mutable_layers());
      epoch_loss += loss * static_cast<double>(b);
      seen += b;
    }
    epoch_loss /= static_cast<double>(seen);
  }
  log_info("train_dsm: final epoch loss " + std::to_string(epoch_loss));
  if (final_loss) *final_loss = epoch_loss;
  return net;
}

}  // namespace diffoc
