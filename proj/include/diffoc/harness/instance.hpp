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

#include <memory>
#include <numbers>

#include "diffoc/classifier.hpp"
#include "diffoc/gmm.hpp"
#include "diffoc/harness/config.hpp"
#include "diffoc/mlp.hpp"

namespace diffoc::harness {

/// Seed streams derived from the run seed.
enum SeedStream : std::uint64_t {
  kPriorSeed = 1,
  kTruthSeed = 2,
  kOperatorSeed = 3,
  kNoiseSeed = 4,
  kScoreSeed = 5,
  kTrainSeed = 6,
};

/// Mixture of smooth h x w cosine patterns
///   mu(r, c) = amplitude * cos(a r + b c + phi),  a, b ~ U(0, pi / 2), phi ~ U(0, 2 pi)
/// with isotropic variance and equal weights.
inline GaussianMixturePrior template_prior(ImageShape shape, int components, double variance, double amplitude,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GaussianMixturePrior p;
  p.weights = Vector::Constant(components, 1.0 / components);
  for (int i = 0; i < components; ++i) {
    const double a = 0.5 * std::numbers::pi * unit(rng);
    const double b = 0.5 * std::numbers::pi * unit(rng);
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    Vector mu(shape.size());
    for (Eigen::Index r = 0; r < shape.height; ++r)
      for (Eigen::Index c = 0; c < shape.width; ++c)
        mu[r * shape.width + c] = amplitude * std::cos(a * static_cast<double>(r) + b * static_cast<double>(c) + phi);
    p.means.push_back(std::move(mu));
    p.variances.push_back(Vector::Constant(shape.size(), variance));
  }
  p.validate();
  return p;
}

inline GaussianMixturePrior build_prior(const ProblemSpec& spec, std::uint64_t seed) {
  if (!spec.prior) throw ConfigError("missing config key: problem.prior");
  const PriorSpec& p = *spec.prior;
  GaussianMixturePrior prior;
  if (p.kind == "standard_normal") {
    prior = GaussianMixturePrior::standard_normal(spec.dim);
  } else if (p.kind == "templates") {
    prior = template_prior(*spec.image, p.components, p.variance, p.amplitude, derive_seed(seed, kPriorSeed));
  } else {
    Json j;
    if (p.kind == "gmm") {
      j = p.inline_prior;
    } else {
      try {
        j = Json::parse(read_text(p.path));
      } catch (const Json::parse_error& e) {
        throw ConfigError("prior file parse error: " + std::string(e.what()));
      }
    }
    try {
      prior = prior_from_json(j);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("problem.prior: ") + e.what());
    }
  }
  if (prior.dim() != spec.dim) throw ConfigError("problem.prior dimension does not match problem.dim");
  return prior;
}

/// Everything a run needs, built deterministically from (config, seed).
struct Instance {
  Eigen::Index dim = 0;
  std::optional<ImageShape> image;
  std::optional<GaussianMixturePrior> prior;
  std::shared_ptr<const ScoreModel> score;
  std::shared_ptr<const ForwardOperator> op;
  Measurement meas;
  Vector x_true;
};

inline std::shared_ptr<const ScoreModel> build_score(const ProblemSpec& spec, const std::optional<GaussianMixturePrior>& prior,
                                                     std::uint64_t seed) {
  if (spec.score.kind == "analytic") {
    if (!prior) throw ConfigError("missing config key: problem.prior (needed by the analytic score)");
    return std::make_shared<GmmScore>(*prior);
  }
  if (spec.score.kind == "random_init")
    return std::make_shared<MlpScore>(MlpScoreNet::random_init(spec.dim, derive_seed(seed, kScoreSeed)));
  MlpScoreNet net = [&] {
    try {
      return MlpScoreNet(load_layers(spec.score.weights.string()));
    } catch (const Error& e) {
      throw ConfigError("problem.score.weights: " + std::string(e.what()));
    }
  }();
  if (net.dim() != spec.dim) throw ConfigError("problem.score.weights dimension does not match problem.dim");
  return std::make_shared<MlpScore>(std::move(net));
}

/// Two-layer classifier either loaded or fitted to prior draws labelled by
/// mixture component.
inline Classifier build_classifier(const ProblemSpec& spec, const std::optional<GaussianMixturePrior>& prior,
                                   std::uint64_t seed) {
  const OperatorSpec& o = spec.op;
  if (!o.weights.empty()) {
    try {
      Classifier c(load_layers(o.weights.string()));
      if (c.input_dim() != spec.dim) throw Error("classifier input does not match problem.dim");
      return c;
    } catch (const Error& e) {
      throw ConfigError("problem.operator.weights: " + std::string(e.what()));
    }
  }
  if (!prior) throw ConfigError("missing config key: problem.operator.weights (or problem.prior to fit one)");
  Rng rng(derive_seed(seed, kTrainSeed, 1));
  std::vector<Vector> xs;
  std::vector<int> labels;
  for (int i = 0; i < o.samples; ++i) {
    int c = 0;
    xs.push_back(prior->sample(rng, &c));
    labels.push_back(c);
  }
  return train_classifier(xs, labels, prior->components(), o.hidden, o.epochs, o.lr, derive_seed(seed, kTrainSeed, 2));
}

inline std::shared_ptr<const ForwardOperator> build_operator(const ProblemSpec& spec,
                                                             const std::optional<GaussianMixturePrior>& prior,
                                                             std::uint64_t seed) {
  const OperatorSpec& o = spec.op;
  try {
    switch (o.kind) {
      case OperatorKind::identity:
        return std::make_shared<const ForwardOperator>(ForwardOperator::identity(spec.dim));
      case OperatorKind::mask:
        return std::make_shared<const ForwardOperator>(
            ForwardOperator::random_mask(spec.dim, o.keep_fraction, derive_seed(seed, kOperatorSeed)));
      case OperatorKind::downsample:
        return std::make_shared<const ForwardOperator>(ForwardOperator::downsample(*spec.image, o.factor));
      case OperatorKind::gaussian_blur:
        return std::make_shared<const ForwardOperator>(ForwardOperator::gaussian_blur(*spec.image, o.size, o.stddev));
      case OperatorKind::motion_blur:
        return std::make_shared<const ForwardOperator>(ForwardOperator::motion_blur(*spec.image, o.length, o.angle));
      case OperatorKind::classifier:
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("problem.operator: " + std::string(e.what()));
  }
  return std::make_shared<const ForwardOperator>(ForwardOperator::classifier(build_classifier(spec, prior, seed)));
}

inline Vector load_truth(const ProblemSpec& spec, const std::optional<GaussianMixturePrior>& prior, std::uint64_t seed) {
  Vector x;
  if (spec.data.source == "prior_sample") {
    if (!prior) throw ConfigError("missing config key: problem.prior (needed by data.source prior_sample)");
    Rng rng(derive_seed(seed, kTruthSeed));
    x = prior->sample(rng);
  } else if (spec.data.source == "csv") {
    x = read_vector_csv(spec.data.path);
  } else {
    const Image img = read_pgm(spec.data.path);
    if (spec.image && (img.shape.height != spec.image->height || img.shape.width != spec.image->width))
      throw ConfigError("problem.data.path: image size does not match problem.image");
    x = img.pixels;
  }
  if (x.size() != spec.dim) throw ConfigError("problem.data: signal length does not match problem.dim");
  return x;
}

inline Instance build_instance(const RunConfig& cfg) {
  const ProblemSpec& spec = cfg.problem;
  Instance inst;
  inst.dim = spec.dim;
  inst.image = spec.image;
  if (spec.prior) inst.prior = build_prior(spec, cfg.seed);
  inst.score = build_score(spec, inst.prior, cfg.seed);
  inst.op = build_operator(spec, inst.prior, cfg.seed);
  inst.x_true = load_truth(spec, inst.prior, cfg.seed);
  if (spec.op.kind == OperatorKind::classifier) {
    try {
      inst.meas = class_target(inst.op, spec.op.target);
    } catch (const Error& e) {
      throw ConfigError("problem.operator.target: " + std::string(e.what()));
    }
  } else {
    inst.meas = generate_measurement(inst.op, inst.x_true, spec.sigma, derive_seed(cfg.seed, kNoiseSeed));
    inst.meas.sigma = spec.likelihood_sigma;
  }
  return inst;
}

}  // namespace diffoc::harness
