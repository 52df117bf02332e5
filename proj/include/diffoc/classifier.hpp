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

#include <vector>

#include "diffoc/adam.hpp"
#include "diffoc/layers.hpp"

namespace diffoc {

/// Small softplus MLP classifier producing class logits; used as the
/// nonlinear forward model of class-guided generation.
class Classifier {
 public:
  explicit Classifier(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw Error("classifier needs at least one layer");
    for (std::size_t i = 1; i < layers_.size(); ++i)
      require_dim(layers_[i].in(), layers_[i - 1].out(), "classifier layer input");
    if (!layers_finite(layers_)) throw Error("classifier parameters must be finite");
  }

  Eigen::Index input_dim() const { return layers_.front().in(); }
  Eigen::Index classes() const { return layers_.back().out(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Logits plus the hidden pre-activations needed for Jacobian actions.
  struct Pass {
    Vector logits;
    std::vector<Vector> pre;
  };

  Pass forward(const Vector& x) const {
    require_dim(x.size(), input_dim(), "classifier input");
    Pass p;
    Vector h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      Vector z = layers_[i].weight * h + layers_[i].bias;
      h = z.unaryExpr([](double v) { return softplus(v); });
      p.pre.push_back(std::move(z));
    }
    p.logits = layers_.back().weight * h + layers_.back().bias;
    return p;
  }

  /// (d logits / dx) v
  Vector jvp(const Pass& p, const Vector& v) const {
    Vector t = layers_[0].weight * v;
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      t.array() *= p.pre[i - 1].unaryExpr([](double z) { return sigmoid(z); }).array();
      t = layers_[i].weight * t;
    }
    return t;
  }

  /// (d logits / dx)^T seed
  Vector vjp(const Pass& p, const Vector& seed) const {
    Vector g = seed;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i].weight.transpose() * g;
      if (i > 0) g.array() *= p.pre[i - 1].unaryExpr([](double z) { return sigmoid(z); }).array();
    }
    return g;
  }

 private:
  std::vector<DenseLayer> layers_;
};

inline Vector log_softmax(const Vector& z) {
  const double top = z.maxCoeff();
  const double lse = top + std::log((z.array() - top).exp().sum());
  return (z.array() - lse).matrix();
}

/// Full-batch Adam on mean cross-entropy.
inline Classifier train_classifier(const std::vector<Vector>& samples, const std::vector<int>& labels,
                                   Eigen::Index classes, Eigen::Index hidden, int epochs, double lr,
                                   std::uint64_t seed) {
  if (samples.empty() || samples.size() != labels.size())
    throw Error("classifier training needs matching samples and labels");
  const Eigen::Index d = samples.front().size();
  Rng rng(seed);
  std::vector<DenseLayer> layers = init_layers({d, hidden, classes}, rng);
  Adam adam(flatten(layers).size(), AdamOptions{lr, 0.9, 0.999, 1e-8});
  const auto n = static_cast<Eigen::Index>(samples.size());
  Matrix x(d, n);
  for (Eigen::Index j = 0; j < n; ++j) x.col(j) = samples[static_cast<std::size_t>(j)];

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix z1 = (layers[0].weight * x).colwise() + layers[0].bias;
    Matrix h1 = z1.unaryExpr([](double v) { return softplus(v); });
    Matrix logits = (layers[1].weight * h1).colwise() + layers[1].bias;
    Matrix g(classes, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector p = log_softmax(logits.col(j)).array().exp().matrix();
      p[labels[static_cast<std::size_t>(j)]] -= 1.0;
      g.col(j) = p / static_cast<double>(n);
    }
    std::vector<DenseLayer> grads(2);
    grads[1].weight = g * h1.transpose();
    grads[1].bias = g.rowwise().sum();
    Matrix g1 = (layers[1].weight.transpose() * g).array() *
                z1.unaryExpr([](double v) { return sigmoid(v); }).array();
    grads[0].weight = g1 * x.transpose();
    grads[0].bias = g1.rowwise().sum();
    Vector params = flatten(layers);
    params -= adam.step(flatten(grads));
    unflatten(params, layers);
  }
  return Classifier(std::move(layers));
}

}  // namespace diffoc
