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
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "diffoc/classifier.hpp"
#include "diffoc/common.hpp"

namespace diffoc {

enum class OperatorKind { identity, mask, downsample, gaussian_blur, motion_blur, classifier };

inline const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::identity: return "identity";
    case OperatorKind::mask: return "mask";
    case OperatorKind::downsample: return "downsample";
    case OperatorKind::gaussian_blur: return "gaussian_blur";
    case OperatorKind::motion_blur: return "motion_blur";
    case OperatorKind::classifier: return "classifier";
  }
  return "?";
}

/// Row-major image geometry; pixel (r, c) lives at r * width + c.
struct ImageShape {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Eigen::Index size() const { return height * width; }
};

/// One tap of a convolution kernel: out(r, c) += w * in(r + dy, c + dx).
struct KernelTap {
  int dy = 0;
  int dx = 0;
  double weight = 0.0;
};

inline std::vector<KernelTap> gaussian_kernel(int size, double stddev) {
  if (size < 1 || size % 2 == 0) throw Error("blur kernel size must be odd and positive");
  if (!(stddev > 0.0)) throw Error("blur stddev must be positive");
  const int r = size / 2;
  std::vector<KernelTap> taps;
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * stddev * stddev));
      taps.push_back({dy, dx, w});
      total += w;
    }
  for (auto& t : taps) t.weight /= total;
  return taps;
}

/// Directional box kernel: `length` samples along a line at angle_deg
/// (0 = horizontal), rasterized to the nearest pixel.
inline std::vector<KernelTap> motion_kernel(int length, double angle_deg) {
  if (length < 1 || length % 2 == 0) throw Error("motion kernel length must be odd and positive");
  const double a = angle_deg * M_PI / 180.0;
  std::map<std::pair<int, int>, double> acc;
  const int r = length / 2;
  for (int j = -r; j <= r; ++j) {
    const int dy = static_cast<int>(std::lround(-j * std::sin(a)));
    const int dx = static_cast<int>(std::lround(j * std::cos(a)));
    acc[{dy, dx}] += 1.0 / length;
  }
  std::vector<KernelTap> taps;
  for (const auto& [off, w] : acc) taps.push_back({off.first, off.second, w});
  return taps;
}

/// Forward measurement model A. Linear kinds expose an exact adjoint; the
/// classifier kind returns class log-probabilities.
class ForwardOperator {
 public:
  static ForwardOperator identity(Eigen::Index d) {
    ForwardOperator op(OperatorKind::identity, d, d);
    return op;
  }

  /// Keeps the given pixel indices (sorted, unique on construction).
  static ForwardOperator mask(Eigen::Index d, std::vector<Eigen::Index> keep) {
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    if (keep.empty()) throw Error("mask keeps no entries");
    if (keep.front() < 0 || keep.back() >= d) throw Error("mask index out of range");
    ForwardOperator op(OperatorKind::mask, d, static_cast<Eigen::Index>(keep.size()));
    op.keep_ = std::move(keep);
    return op;
  }

  /// Uniformly random mask retaining round(keep_fraction * d) entries (>= 1).
  static ForwardOperator random_mask(Eigen::Index d, double keep_fraction, std::uint64_t seed) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0) throw Error("keep fraction must be in (0, 1]");
    const auto count = std::max<Eigen::Index>(1, std::llround(keep_fraction * static_cast<double>(d)));
    std::vector<Eigen::Index> all(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), 0);
    Rng rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(count));
    return mask(d, std::move(all));
  }

  /// Average pooling over factor x factor blocks.
  static ForwardOperator downsample(ImageShape shape, int factor) {
    if (factor < 1 || shape.height % factor != 0 || shape.width % factor != 0)
      throw Error("pooling factor must divide the image size");
    ForwardOperator op(OperatorKind::downsample, shape.size(),
                       (shape.height / factor) * (shape.width / factor));
    op.shape_ = shape;
    op.factor_ = factor;
    return op;
  }

  static ForwardOperator gaussian_blur(ImageShape shape, int size, double stddev) {
    return convolution(OperatorKind::gaussian_blur, shape, gaussian_kernel(size, stddev));
  }

  static ForwardOperator motion_blur(ImageShape shape, int length, double angle_deg) {
    return convolution(OperatorKind::motion_blur, shape, motion_kernel(length, angle_deg));
  }

  static ForwardOperator classifier(Classifier net) {
    ForwardOperator op(OperatorKind::classifier, net.input_dim(), net.classes());
    op.net_ = std::make_shared<const Classifier>(std::move(net));
    return op;
  }

  OperatorKind kind() const { return kind_; }
  Eigen::Index input_dim() const { return in_; }
  Eigen::Index output_dim() const { return out_; }
  bool is_linear() const { return kind_ != OperatorKind::classifier; }
  const std::vector<Eigen::Index>& kept_indices() const { return keep_; }
  const std::vector<KernelTap>& taps() const { return taps_; }
  const Classifier& network() const {
    if (!net_) throw Error("operator has no classifier");
    return *net_;
  }

  Vector apply(const Vector& x) const {
    require_dim(x.size(), in_, "operator input");
    if (kind_ == OperatorKind::classifier) return log_softmax(net_->forward(x).logits);
    return linear(x);
  }

  /// (dA/dx) v at x.
  Vector jvp(const Vector& x, const Vector& v) const {
    require_dim(x.size(), in_, "operator input");
    require_dim(v.size(), in_, "tangent");
    if (kind_ != OperatorKind::classifier) return linear(v);
    const auto pass = net_->forward(x);
    const Vector p = log_softmax(pass.logits).array().exp().matrix();
    const Vector dz = net_->jvp(pass, v);
    return (dz.array() - p.dot(dz)).matrix();
  }

  /// (dA/dx)^T seed at x.
  Vector vjp(const Vector& x, const Vector& seed) const {
    require_dim(x.size(), in_, "operator input");
    require_dim(seed.size(), out_, "seed");
    if (kind_ != OperatorKind::classifier) return adjoint(seed);
    const auto pass = net_->forward(x);
    const Vector p = log_softmax(pass.logits).array().exp().matrix();
    return net_->vjp(pass, (seed - p * seed.sum()).eval());
  }

  /// A v for linear kinds.
  Vector linear(const Vector& x) const {
    switch (kind_) {
      case OperatorKind::identity: return x;
      case OperatorKind::mask: {
        Vector y(out_);
        for (std::size_t i = 0; i < keep_.size(); ++i) y[static_cast<Eigen::Index>(i)] = x[keep_[i]];
        return y;
      }
      case OperatorKind::downsample: {
        const Eigen::Index ow = shape_.width / factor_;
        Vector y = Vector::Zero(out_);
        const double scale = 1.0 / (factor_ * factor_);
        for (Eigen::Index r = 0; r < shape_.height; ++r)
          for (Eigen::Index c = 0; c < shape_.width; ++c)
            y[(r / factor_) * ow + c / factor_] += scale * x[r * shape_.width + c];
        return y;
      }
      case OperatorKind::gaussian_blur:
      case OperatorKind::motion_blur: {
        Vector y = Vector::Zero(out_);
        for (Eigen::Index r = 0; r < shape_.height; ++r)
          for (Eigen::Index c = 0; c < shape_.width; ++c) {
            double acc = 0.0;
            for (const auto& t : taps_) acc += t.weight * x[source(r, c, t)];
            y[r * shape_.width + c] = acc;
          }
        return y;
      }
      case OperatorKind::classifier: break;
    }
    throw Error("operator is not linear");
  }

  /// A^T w for linear kinds.
  Vector adjoint(const Vector& w) const {
    switch (kind_) {
      case OperatorKind::identity: return w;
      case OperatorKind::mask: {
        Vector x = Vector::Zero(in_);
        for (std::size_t i = 0; i < keep_.size(); ++i) x[keep_[i]] = w[static_cast<Eigen::Index>(i)];
        return x;
      }
      case OperatorKind::downsample: {
        const Eigen::Index ow = shape_.width / factor_;
        const double scale = 1.0 / (factor_ * factor_);
        Vector x(in_);
        for (Eigen::Index r = 0; r < shape_.height; ++r)
          for (Eigen::Index c = 0; c < shape_.width; ++c)
            x[r * shape_.width + c] = scale * w[(r / factor_) * ow + c / factor_];
        return x;
      }
      case OperatorKind::gaussian_blur:
      case OperatorKind::motion_blur: {
        Vector x = Vector::Zero(in_);
        for (Eigen::Index r = 0; r < shape_.height; ++r)
          for (Eigen::Index c = 0; c < shape_.width; ++c)
            for (const auto& t : taps_) x[source(r, c, t)] += t.weight * w[r * shape_.width + c];
        return x;
      }
      case OperatorKind::classifier: break;
    }
    throw Error("operator is not linear");
  }

 private:
  ForwardOperator(OperatorKind kind, Eigen::Index in, Eigen::Index out) : kind_(kind), in_(in), out_(out) {
    if (in < 1 || out < 1) throw Error("operator dimensions must be positive");
  }

  static ForwardOperator convolution(OperatorKind kind, ImageShape shape, std::vector<KernelTap> taps) {
    if (shape.height < 1 || shape.width < 1) throw Error("image shape must be positive");
    for (const auto& t : taps)
      if (std::abs(t.dy) >= shape.height || std::abs(t.dx) >= shape.width)
        throw Error("blur kernel larger than the image");
    ForwardOperator op(kind, shape.size(), shape.size());
    op.shape_ = shape;
    op.taps_ = std::move(taps);
    return op;
  }

  // mirror padding without repeating the edge pixel
  static Eigen::Index reflect(Eigen::Index i, Eigen::Index n) {
    if (n == 1) return 0;
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  }

  Eigen::Index source(Eigen::Index r, Eigen::Index c, const KernelTap& t) const {
    return reflect(r + t.dy, shape_.height) * shape_.width + reflect(c + t.dx, shape_.width);
  }

  OperatorKind kind_;
  Eigen::Index in_;
  Eigen::Index out_;
  std::vector<Eigen::Index> keep_;
  ImageShape shape_;
  int factor_ = 1;
  std::vector<KernelTap> taps_;
  std::shared_ptr<const Classifier> net_;
};

/// y = A(x_true) + noise, with the likelihood's noise level. For the
/// classifier kind y is a target class distribution (usually one-hot).
struct Measurement {
  std::shared_ptr<const ForwardOperator> op;
  Vector y;
  double sigma = 0.0;

  const ForwardOperator& op_ref() const {
    if (!op) throw Error("measurement has no operator");
    return *op;
  }
};

inline Measurement generate_measurement(std::shared_ptr<const ForwardOperator> op, const Vector& x_true,
                                        double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error("noise sigma must be >= 0");
  Measurement m;
  m.y = op->apply(x_true);
  if (sigma > 0.0) {
    Rng rng(seed);
    m.y += sigma * standard_normal(m.y.size(), rng);
  }
  m.sigma = sigma;
  m.op = std::move(op);
  return m;
}

/// Class-target measurement for the classifier kind.
inline Measurement class_target(std::shared_ptr<const ForwardOperator> op, int target) {
  if (op->kind() != OperatorKind::classifier) throw Error("class target needs a classifier operator");
  if (target < 0 || target >= op->output_dim()) throw Error("target class out of range");
  Measurement m;
  m.y = Vector::Zero(op->output_dim());
  m.y[target] = 1.0;
  m.sigma = 1.0;
  m.op = std::move(op);
  return m;
}

namespace detail {
inline double likelihood_scale(const Measurement& m) {
  if (!(m.sigma > 0.0)) throw Error("degenerate likelihood");
  return 1.0 / (m.sigma * m.sigma);
}
}  // namespace detail

/// l0(x0) = -log p(y | x0): ||A x0 - y||^2 / (2 sigma^2) for measurement
/// kinds, cross-entropy against y for the classifier.
inline double terminal_cost(const Measurement& m, const Vector& x0) {
  const auto& op = m.op_ref();
  if (op.kind() == OperatorKind::classifier) return -m.y.dot(op.apply(x0));
  const double s = detail::likelihood_scale(m);
  return 0.5 * s * (op.apply(x0) - m.y).squaredNorm();
}

inline Vector terminal_cost_grad(const Measurement& m, const Vector& x0) {
  const auto& op = m.op_ref();
  if (op.kind() == OperatorKind::classifier) return op.vjp(x0, -m.y);
  const double s = detail::likelihood_scale(m);
  return s * op.vjp(x0, op.apply(x0) - m.y);
}

/// Gauss-Newton Hessian action (positive semidefinite by construction).
inline Vector terminal_cost_hess_action(const Measurement& m, const Vector& x0, const Vector& v) {
  const auto& op = m.op_ref();
  if (op.kind() == OperatorKind::classifier) {
    const auto& net = op.network();
    const auto pass = net.forward(x0);
    const Vector p = log_softmax(pass.logits).array().exp().matrix();
    const Vector dz = net.jvp(pass, v);
    // softmax cross-entropy curvature in logit space: (sum y)(diag p - p p^T)
    const Vector w = m.y.sum() * (p.cwiseProduct(dz) - p * p.dot(dz));
    return net.vjp(pass, w);
  }
  const double s = detail::likelihood_scale(m);
  return s * op.vjp(x0, op.jvp(x0, v));
}

}  // namespace diffoc
