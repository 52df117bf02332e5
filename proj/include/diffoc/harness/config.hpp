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

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diffoc/harness/io.hpp"
#include "diffoc/ilqr.hpp"

namespace diffoc::harness {

/// Malformed or incomplete configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A JSON object read key by key; leftover keys are rejected by finish().
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section " + label() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T req(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing config key: " + name(key));
    return get<T>(key);
  }

  template <typename T>
  T opt(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return get<T>(key);
  }

  Section sub(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing config key: " + name(key));
    seen_.insert(key);
    return Section(j_.at(key), name(key));
  }

  const Json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing config key: " + name(key));
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key: " + name(key));
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  T get(const std::string& key) {
    seen_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("wrong type for config key: " + name(key));
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

struct PriorSpec {
  std::string kind;  // gmm | gmm_file | templates | standard_normal
  Json inline_prior;
  std::filesystem::path path;
  int components = 4;
  double variance = 0.05;
  double amplitude = 0.8;
};

struct ScoreSpec {
  std::string kind = "analytic";  // analytic | mlp | random_init
  std::filesystem::path weights;
};

struct OperatorSpec {
  OperatorKind kind = OperatorKind::identity;
  double keep_fraction = 0.08;
  int factor = 2;
  int size = 3;
  double stddev = 1.0;
  int length = 5;
  double angle = 0.0;
  // classifier
  std::filesystem::path weights;
  int target = 0;
  int hidden = 32;
  int epochs = 300;
  double lr = 1e-2;
  int samples = 512;
};

struct DataSpec {
  std::string source = "prior_sample";  // prior_sample | csv | pgm
  std::filesystem::path path;
};

struct ProblemSpec {
  Eigen::Index dim = 0;
  std::optional<ImageShape> image;
  std::optional<PriorSpec> prior;
  ScoreSpec score;
  OperatorSpec op;
  double sigma = 0.0;             // synthesis noise
  double likelihood_sigma = 0.0;  // noise level assumed by l0; defaults to sigma
  DataSpec data;
};

struct AblateSpec {
  std::string dimension;  // rank | alpha | T
  std::vector<double> grid;
};

struct CompareSpec {
  std::vector<int> T_grid;  // empty: the solver's T
  double dps_scale = 1.0;
};

struct TrainSpec {
  int samples = 2048;
  int epochs = 64;
  double lr = 2e-3;
  int batch = 64;
  std::string file = "score.docw";
};

struct RunConfig {
  std::uint64_t seed = 0;
  ProblemSpec problem;
  SolverConfig solver;
  std::filesystem::path out_dir;
  bool timing = false;
  std::optional<AblateSpec> ablate;
  CompareSpec compare;
  TrainSpec train;
  Json source;  // the document as read, echoed into manifests
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
};

namespace detail {

inline OperatorKind parse_operator_kind(const std::string& s, const std::string& key) {
  for (auto k : {OperatorKind::identity, OperatorKind::mask, OperatorKind::downsample, OperatorKind::gaussian_blur,
                 OperatorKind::motion_blur, OperatorKind::classifier})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown value '" + s + "' for config key: " + key);
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p, const std::string& key) {
  std::filesystem::path full = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
  if (!std::filesystem::exists(full)) throw ConfigError("file not found for config key " + key + ": " + full.string());
  return full;
}

inline PriorSpec parse_prior(Section s, const std::filesystem::path& base) {
  PriorSpec p;
  p.kind = s.req<std::string>("kind");
  if (p.kind == "gmm") {
    Json j;
    j["weights"] = s.raw("weights");
    j["means"] = s.raw("means");
    j["variances"] = s.raw("variances");
    p.inline_prior = j;
  } else if (p.kind == "gmm_file") {
    p.path = resolve(base, s.req<std::string>("path"), s.name("path"));
  } else if (p.kind == "templates") {
    p.components = s.opt("components", p.components);
    p.variance = s.opt("variance", p.variance);
    p.amplitude = s.opt("amplitude", p.amplitude);
    if (p.components < 1 || !(p.variance > 0.0)) throw ConfigError("invalid template prior in " + s.name("kind"));
  } else if (p.kind != "standard_normal") {
    throw ConfigError("unknown value '" + p.kind + "' for config key: " + s.name("kind"));
  }
  s.finish();
  return p;
}

inline OperatorSpec parse_operator(Section s, const std::filesystem::path& base) {
  OperatorSpec o;
  o.kind = parse_operator_kind(s.req<std::string>("kind"), s.name("kind"));
  switch (o.kind) {
    case OperatorKind::identity:
      break;
    case OperatorKind::mask:
      o.keep_fraction = s.req<double>("keep_fraction");
      break;
    case OperatorKind::downsample:
      o.factor = s.req<int>("factor");
      break;
    case OperatorKind::gaussian_blur:
      o.size = s.req<int>("size");
      o.stddev = s.req<double>("stddev");
      break;
    case OperatorKind::motion_blur:
      o.length = s.opt("length", o.length);
      o.angle = s.opt("angle", o.angle);
      break;
    case OperatorKind::classifier:
      o.target = s.req<int>("target");
      if (s.has("weights")) o.weights = resolve(base, s.req<std::string>("weights"), s.name("weights"));
      o.hidden = s.opt("hidden", o.hidden);
      o.epochs = s.opt("epochs", o.epochs);
      o.lr = s.opt("lr", o.lr);
      o.samples = s.opt("samples", o.samples);
      break;
  }
  s.finish();
  return o;
}

inline ProblemSpec parse_problem(Section s, const std::filesystem::path& base) {
  ProblemSpec p;
  if (s.has("image")) {
    Section img = s.sub("image");
    p.image = ImageShape{img.req<Eigen::Index>("height"), img.req<Eigen::Index>("width")};
    img.finish();
    if (p.image->height < 1 || p.image->width < 1) throw ConfigError("image dimensions must be >= 1");
    p.dim = p.image->size();
    if (s.has("dim") && s.req<Eigen::Index>("dim") != p.dim)
      throw ConfigError("problem.dim disagrees with problem.image");
  } else {
    p.dim = s.req<Eigen::Index>("dim");
  }
  if (p.dim < 1) throw ConfigError("problem.dim must be >= 1");

  if (s.has("prior")) p.prior = parse_prior(s.sub("prior"), base);
  {
    Section sc = s.sub("score");
    p.score.kind = sc.req<std::string>("kind");
    if (p.score.kind == "mlp")
      p.score.weights = resolve(base, sc.req<std::string>("weights"), sc.name("weights"));
    else if (p.score.kind != "analytic" && p.score.kind != "random_init")
      throw ConfigError("unknown value '" + p.score.kind + "' for config key: " + sc.name("kind"));
    sc.finish();
  }
  p.op = parse_operator(s.sub("operator"), base);
  // the classifier likelihood is a cross-entropy; it has no noise level
  if (p.op.kind == OperatorKind::classifier) {
    p.sigma = 1.0;
    p.likelihood_sigma = 1.0;
  } else {
    p.sigma = s.req<double>("sigma");
    p.likelihood_sigma = s.opt("likelihood_sigma", p.sigma);
    if (!(p.sigma >= 0.0)) throw ConfigError("problem.sigma must be >= 0");
    if (!(p.likelihood_sigma > 0.0)) throw ConfigError("problem.likelihood_sigma must be positive");
  }
  {
    Section d = s.sub("data");
    p.data.source = d.req<std::string>("source");
    if (p.data.source == "csv" || p.data.source == "pgm")
      p.data.path = resolve(base, d.req<std::string>("path"), d.name("path"));
    else if (p.data.source != "prior_sample")
      throw ConfigError("unknown value '" + p.data.source + "' for config key: " + d.name("source"));
    d.finish();
  }
  if ((p.op.kind == OperatorKind::downsample || p.op.kind == OperatorKind::gaussian_blur ||
       p.op.kind == OperatorKind::motion_blur) && !p.image)
    throw ConfigError("missing config key: problem.image (needed by " + std::string(to_string(p.op.kind)) + ")");
  if (p.prior && p.prior->kind == "templates" && !p.image)
    throw ConfigError("missing config key: problem.image (needed by the templates prior)");
  s.finish();
  return p;
}

inline SolverConfig parse_solver(Section s) {
  SolverConfig c;
  c.T = s.opt("T", c.T);
  c.num_iters = s.opt("num_iters", c.num_iters);
  c.alpha = s.opt("alpha", c.alpha);
  const std::string rule = s.opt<std::string>("alpha_rule", "constant");
  if (rule == "constant") c.alpha_rule = AlphaRule::constant;
  else if (rule == "inverse_g2dt") c.alpha_rule = AlphaRule::inverse_g2dt;
  else throw ConfigError("unknown value '" + rule + "' for config key: " + s.name("alpha_rule"));
  c.running_weight = s.opt("running_weight", c.running_weight);
  c.lambda = s.opt("lambda", c.lambda);
  c.rank_k = s.opt("rank_k", c.rank_k);
  const std::string mode = s.opt<std::string>("mode", to_string(c.mode));
  if (mode == "input") c.mode = ControlMode::input;
  else if (mode == "output") c.mode = ControlMode::output;
  else throw ConfigError("unknown value '" + mode + "' for config key: " + s.name("mode"));
  if (s.has("adam")) {
    Section a = s.sub("adam");
    c.adam_enabled = a.opt("enabled", c.adam_enabled);
    c.adam.lr = a.opt("lr", c.adam.lr);
    c.adam.beta1 = a.opt("beta1", c.adam.beta1);
    c.adam.beta2 = a.opt("beta2", c.adam.beta2);
    c.adam.eps = a.opt("eps", c.adam.eps);
    a.finish();
  }
  c.beta_min = s.opt("beta_min", c.beta_min);
  c.beta_max = s.opt("beta_max", c.beta_max);
  s.finish();
  try {
    c.validate();
    (void)c.schedule();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid solver section: ") + e.what());
  }
  return c;
}

}  // namespace detail

/// Parses a config document. Relative paths resolve against `base`.
inline RunConfig parse_config(const Json& doc, const std::filesystem::path& base, const Overrides& ov = {}) {
  Section root(doc, "");
  RunConfig cfg;
  cfg.source = doc;
  cfg.seed = root.opt<std::uint64_t>("seed", 0);
  if (ov.seed) cfg.seed = *ov.seed;
  cfg.problem = detail::parse_problem(root.sub("problem"), base);
  cfg.solver = detail::parse_solver(root.sub("solver"));
  cfg.solver.seed = cfg.seed;
  {
    Section out = root.sub("output");
    if (ov.out_dir) {
      if (out.has("dir")) (void)out.req<std::string>("dir");
      cfg.out_dir = *ov.out_dir;
    } else {
      cfg.out_dir = out.req<std::string>("dir");
      if (cfg.out_dir.is_relative()) cfg.out_dir = base / cfg.out_dir;
    }
    cfg.timing = out.opt("timing", cfg.timing);
    out.finish();
  }
  if (root.has("ablate")) {
    Section a = root.sub("ablate");
    AblateSpec spec{a.req<std::string>("dimension"), a.req<std::vector<double>>("grid")};
    if (spec.dimension != "rank" && spec.dimension != "alpha" && spec.dimension != "T")
      throw ConfigError("unknown value '" + spec.dimension + "' for config key: ablate.dimension");
    if (spec.grid.empty()) throw ConfigError("ablate.grid must be nonempty");
    a.finish();
    cfg.ablate = std::move(spec);
  }
  if (root.has("compare")) {
    Section c = root.sub("compare");
    cfg.compare.T_grid = c.opt("T_grid", cfg.compare.T_grid);
    cfg.compare.dps_scale = c.opt("dps_scale", cfg.compare.dps_scale);
    for (int t : cfg.compare.T_grid)
      if (t < 1) throw ConfigError("compare.T_grid entries must be >= 1");
    if (!(cfg.compare.dps_scale >= 0.0)) throw ConfigError("compare.dps_scale must be >= 0");
    c.finish();
  }
  if (root.has("train")) {
    Section t = root.sub("train");
    cfg.train.samples = t.opt("samples", cfg.train.samples);
    cfg.train.epochs = t.opt("epochs", cfg.train.epochs);
    cfg.train.lr = t.opt("lr", cfg.train.lr);
    cfg.train.batch = t.opt("batch", cfg.train.batch);
    cfg.train.file = t.opt("file", cfg.train.file);
    if (cfg.train.samples < 2 || cfg.train.epochs < 0 || !(cfg.train.lr > 0.0) || cfg.train.batch < 1)
      throw ConfigError("invalid train section");
    t.finish();
  }
  root.finish();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path, const Overrides& ov = {}) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  Json doc;
  try {
    doc = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(doc, path.parent_path(), ov);
}

}  // namespace diffoc::harness
