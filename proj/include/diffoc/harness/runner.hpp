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
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "diffoc/baselines.hpp"
#include "diffoc/harness/instance.hpp"
#include "diffoc/harness/metrics.hpp"
#include "diffoc/version.hpp"

namespace diffoc::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitSolverError = 1;
inline constexpr int kExitConfigError = 2;

namespace fs = std::filesystem;

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else if (c == '\n' || c == '\r') out += ' ';
    else out += c;
  }
  return out + "\"";
}

inline Json solver_json(const SolverConfig& c) {
  Json j;
  j["T"] = c.T;
  j["num_iters"] = c.num_iters;
  j["alpha"] = c.alpha;
  j["alpha_rule"] = c.alpha_rule == AlphaRule::constant ? "constant" : "inverse_g2dt";
  j["running_weight"] = c.running_weight;
  j["lambda"] = c.lambda;
  j["rank_k"] = c.rank_k;
  j["mode"] = to_string(c.mode);
  j["adam"] = {{"enabled", c.adam_enabled}, {"lr", c.adam.lr}, {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
  j["beta_min"] = c.beta_min;
  j["beta_max"] = c.beta_max;
  j["seed"] = c.seed;
  return j;
}

inline Json manifest_base(const std::string& command, const RunConfig& cfg, const Instance& inst) {
  Json m;
  m["tool"] = "diffoc";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["dim"] = inst.dim;
  if (inst.image) m["image"] = {{"height", inst.image->height}, {"width", inst.image->width}};
  m["operator"] = to_string(inst.op->kind());
  m["measurement_dim"] = inst.meas.y.size();
  if (inst.op->kind() == OperatorKind::mask) m["mask_indices"] = inst.op->kept_indices();
  m["config"] = cfg.source;
  return m;
}

struct SolveOutcome {
  Solution solution;
  MetricsRecord metrics;
};

inline SolveOutcome solve_instance(const Instance& inst, const SolverConfig& solver) {
  SolveOutcome out;
  const Vector x_T = draw_initial_state(inst.dim, solver.seed);
  out.solution = solve(ControlProblem{inst.meas, inst.score.get(), x_T}, solver);
  out.metrics = compute_metrics(out.solution.x0(), inst.x_true, inst.meas, inst.image.has_value());
  out.metrics.nfe = out.solution.nfe;
  out.metrics.wall_seconds = out.solution.wall_seconds;
  return out;
}

inline void write_signal(const fs::path& dir, const std::string& stem, const Vector& x, const Instance& inst) {
  write_vector_csv(dir / (stem + ".csv"), x);
  if (inst.image) write_pgm(dir / (stem + ".pgm"), x, *inst.image);
}

inline void write_trajectory_files(const fs::path& dir, const Trajectory& traj) {
  std::ostringstream ts, cs;
  write_trajectory_csv(ts, traj);
  write_controls_csv(cs, traj);
  write_text(dir / "trajectory.csv", ts.str());
  write_text(dir / "controls.csv", cs.str());
}

/// manifest.json, metrics.csv, trajectory.csv, controls.csv, x0 / x_true / y
/// and, when asked for, timing.json.
inline void write_solve_artifacts(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                                  const Instance& inst, const SolveOutcome& out) {
  fs::create_directories(dir);
  const Solution& sol = out.solution;
  Json m = manifest_base(command, cfg, inst);
  m["solver"] = solver_json(sol.config);
  m["accepted"] = sol.accepted;
  m["rejected"] = sol.rejected;
  m["nfe"] = sol.nfe;
  m["cost_history"] = json_array(sol.cost_history);
  write_json(dir / "manifest.json", m);
  write_text(dir / "metrics.csv",
             std::string("label,") + kMetricsColumns + "\ncontrol," + metrics_fields(out.metrics) + "\n");
  write_trajectory_files(dir, sol.trajectory);
  write_signal(dir, "x0", sol.x0(), inst);
  write_signal(dir, "x_true", inst.x_true, inst);
  write_vector_csv(dir / "y.csv", inst.meas.y);
  if (cfg.timing) write_json(dir / "timing.json", Json{{"wall_seconds", out.metrics.wall_seconds}});
}

inline void run_solve(const RunConfig& cfg) {
  const Instance inst = build_instance(cfg);
  const SolveOutcome out = solve_instance(inst, cfg.solver);
  write_solve_artifacts(cfg.out_dir, "solve", cfg, inst, out);
  log_info("solve: terminal cost " + format_double(out.metrics.terminal_cost) + ", residual " +
           format_double(out.metrics.measurement_residual) + ", " +
           format_double(out.metrics.wall_seconds) + " s");
}

/// The solver settings of one ablation grid point.
inline SolverConfig ablation_point(const SolverConfig& base, const std::string& dimension, double value) {
  SolverConfig c = base;
  if (dimension == "rank") {
    if (value < 0 || value != std::floor(value)) throw ConfigError("ablate.grid: rank values must be integers >= 0");
    c.rank_k = static_cast<int>(value);
  } else if (dimension == "alpha") {
    if (!(value >= 0.0)) throw ConfigError("ablate.grid: alpha values must be >= 0");
    c.alpha = value;
    c.alpha_rule = AlphaRule::constant;
  } else {
    if (value < 1 || value != std::floor(value)) throw ConfigError("ablate.grid: T values must be integers >= 1");
    c.T = static_cast<int>(value);
  }
  return c;
}

/// One solve per grid point, each in point_<i>/; failures are recorded and
/// the sweep continues. Points run on up to `jobs` worker threads.
inline void run_ablate(const RunConfig& cfg, int jobs) {
  if (!cfg.ablate) throw ConfigError("missing config key: ablate");
  const AblateSpec& spec = *cfg.ablate;
  std::vector<SolverConfig> points;
  for (double v : spec.grid) points.push_back(ablation_point(cfg.solver, spec.dimension, v));
  const Instance inst = build_instance(cfg);
  fs::create_directories(cfg.out_dir);

  std::vector<std::string> rows(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      const std::string value = format_double(spec.grid[i]);
      try {
        const SolveOutcome out = solve_instance(inst, points[i]);
        write_solve_artifacts(cfg.out_dir / ("point_" + std::to_string(i)), "ablate", cfg, inst, out);
        rows[i] = value + ",ok," + metrics_fields(out.metrics) + ",";
      } catch (const Error& e) {
        log_error("ablate " + spec.dimension + "=" + value + ": " + e.what());
        rows[i] = value + ",failed," + empty_metrics_fields() + "," + csv_quote(e.what());
      }
    }
  };
  const int n = std::clamp<int>(jobs, 1, static_cast<int>(points.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < n; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string table = spec.dimension + ",status," + kMetricsColumns + ",message\n";
  for (const auto& r : rows) table += r + "\n";
  write_text(cfg.out_dir / "ablate.csv", table);
  Json m = manifest_base("ablate", cfg, inst);
  m["solver"] = solver_json(cfg.solver);
  m["dimension"] = spec.dimension;
  m["grid"] = spec.grid;
  write_json(cfg.out_dir / "manifest.json", m);
}

/// Uncontrolled sampling, DPS and the controller on the same instance and
/// x_T for every T in the grid.
inline void run_compare(const RunConfig& cfg) {
  const Instance inst = build_instance(cfg);
  fs::create_directories(cfg.out_dir);
  std::vector<int> grid = cfg.compare.T_grid;
  if (grid.empty()) grid.push_back(cfg.solver.T);
  const Vector x_T = draw_initial_state(inst.dim, cfg.seed);
  const bool image = inst.image.has_value();

  std::string table = std::string("T,method,status,") + kMetricsColumns + ",residual_reduction,message\n";
  for (int T : grid) {
    SolverConfig solver = cfg.solver;
    solver.T = T;
    const VpSchedule sched = solver.schedule();
    std::optional<double> base_residual;
    auto emit = [&](const char* method, auto&& run) {
      std::string row = std::to_string(T) + "," + method + ",";
      try {
        const auto [x0, nfe] = run();
        MetricsRecord m = compute_metrics(x0, inst.x_true, inst.meas, image);
        m.nfe = nfe;
        if (!base_residual) base_residual = m.measurement_residual;
        const double reduction = *base_residual > 0.0 ? 1.0 - m.measurement_residual / *base_residual : 0.0;
        row += "ok," + metrics_fields(m) + "," + format_double(reduction) + ",";
      } catch (const Error& e) {
        log_error(std::string("compare ") + method + " T=" + std::to_string(T) + ": " + e.what());
        row += "failed," + empty_metrics_fields() + ",," + csv_quote(e.what());
      }
      table += row + "\n";
    };
    emit("uncontrolled", [&] {
      const BaselineResult r = uncontrolled_sample(x_T, *inst.score, sched);
      return std::pair<Vector, long>{r.x0, r.nfe};
    });
    emit("dps", [&] {
      const BaselineResult r = dps_sample(x_T, inst.meas, *inst.score, sched, cfg.compare.dps_scale);
      return std::pair<Vector, long>{r.x0, r.nfe};
    });
    emit("control", [&] {
      const Solution s = solve(ControlProblem{inst.meas, inst.score.get(), x_T}, solver);
      return std::pair<Vector, long>{s.x0(), s.nfe};
    });
  }
  write_text(cfg.out_dir / "compare.csv", table);
  Json m = manifest_base("compare", cfg, inst);
  m["solver"] = solver_json(cfg.solver);
  m["T_grid"] = grid;
  m["dps_scale"] = cfg.compare.dps_scale;
  write_json(cfg.out_dir / "manifest.json", m);
}

/// Denoising score matching on draws from the configured prior.
inline void run_train_score(const RunConfig& cfg) {
  if (!cfg.problem.prior) throw ConfigError("missing config key: problem.prior (needed by train-score)");
  const GaussianMixturePrior prior = build_prior(cfg.problem, cfg.seed);
  Rng rng(derive_seed(cfg.seed, kTrainSeed, 0));
  std::vector<Vector> samples;
  for (int i = 0; i < cfg.train.samples; ++i) samples.push_back(prior.sample(rng));
  double loss = 0.0;
  const TrainOptions opts{cfg.train.epochs, cfg.train.lr, derive_seed(cfg.seed, kTrainSeed, 3),
                          static_cast<Eigen::Index>(cfg.train.batch), 1e-3};
  const MlpScoreNet net = train_dsm(MlpScoreNet::random_init(cfg.problem.dim, derive_seed(cfg.seed, kScoreSeed)),
                                    samples, cfg.solver.schedule(), opts, &loss);
  fs::create_directories(cfg.out_dir);
  save_layers((cfg.out_dir / cfg.train.file).string(), net.layers());
  Json m;
  m["tool"] = "diffoc";
  m["version"] = kVersion;
  m["command"] = "train-score";
  m["seed"] = cfg.seed;
  m["dim"] = cfg.problem.dim;
  m["config"] = cfg.source;
  m["weights"] = cfg.train.file;
  m["final_epoch_loss"] = json_number(cfg.train.epochs > 0 ? loss : std::nan(""));
  write_json(cfg.out_dir / "manifest.json", m);
}

inline Json equivalence_json(const EquivalenceReport& r) {
  Json j;
  j["per_t_cosine"] = json_array(r.per_t_cosine);
  j["per_t_ratio"] = json_array(r.per_t_ratio);
  j["inverse_alpha"] = json_array(r.inverse_alpha);
  std::vector<double> per_g2dt, per_half, ratio_err;
  double min_cos = 1.0, max_err = 0.0;
  for (std::size_t i = 0; i < r.per_t_ratio.size(); ++i) {
    per_g2dt.push_back(r.per_t_ratio[i] / r.g2dt[i]);
    per_half.push_back(r.per_t_ratio[i] / r.half_g2dt[i]);
    const double err = std::abs(r.per_t_ratio[i] / r.inverse_alpha[i] - 1.0);
    ratio_err.push_back(err);
    min_cos = std::min(min_cos, r.per_t_cosine[i]);
    max_err = std::max(max_err, err);
  }
  j["candidate_constants"] = {{"ratio_over_g2dt", json_array(per_g2dt)},
                              {"ratio_over_half_g2dt", json_array(per_half)}};
  j["ratio_relative_error"] = json_array(ratio_err);
  j["min_cosine"] = min_cos;
  j["max_ratio_relative_error"] = max_err;
  return j;
}

/// Runs the three equivalence harnesses from x_T ~ N(0, I) under the run
/// seed and collects them in one document.
inline Json theorem_report(const Measurement& meas, const ScoreModel& score, const Vector& x_T,
                           const VpSchedule& sched, double alpha) {
  Json doc;
  doc["T"] = sched.steps();
  doc["alpha"] = alpha;
  doc["output_mode"] = equivalence_json(verify_output_mode_equivalence(meas, score, x_T, sched, AlphaRule::constant, alpha));
  doc["dps_recovery"] =
      equivalence_json(verify_output_mode_equivalence(meas, score, x_T, sched, AlphaRule::inverse_g2dt));
  const PredictorCorrectorReport pc = verify_input_mode_predictor_corrector(meas, score, x_T, sched);
  doc["predictor_corrector"] = {{"per_t_residual", json_array(pc.per_t_residual)},
                                {"conditional_weight", json_array(pc.conditional_weight)},
                                {"max_residual", pc.max_residual}};
  return doc;
}

inline void run_verify_theorems(const RunConfig& cfg) {
  const Instance inst = build_instance(cfg);
  const Vector x_T = draw_initial_state(inst.dim, cfg.seed);
  Json doc = manifest_base("verify-theorems", cfg, inst);
  doc["report"] = theorem_report(inst.meas, *inst.score, x_T, cfg.solver.schedule(), cfg.solver.alpha);
  fs::create_directories(cfg.out_dir);
  write_json(cfg.out_dir / "theorems.json", doc);
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"solve", "ablate", "compare", "train-score", "verify-theorems"};
  return names;
}

/// Loads the config and runs one command. Returns the process exit code:
/// 0 success, 1 solver or runtime error, 2 configuration error.
inline int run_command(const std::string& command, const fs::path& config, const Overrides& ov, int jobs = 1) {
  try {
    if (std::find(commands().begin(), commands().end(), command) == commands().end())
      throw ConfigError("unknown command: " + command);
    if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    const RunConfig cfg = load_config(config, ov);
    if (command == "solve") run_solve(cfg);
    else if (command == "ablate") run_ablate(cfg, jobs);
    else if (command == "compare") run_compare(cfg);
    else if (command == "train-score") run_train_score(cfg);
    else run_verify_theorems(cfg);
    return kExitOk;
  } catch (const ConfigError& e) {
    log_error(e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    log_error(e.what());
    return kExitSolverError;
  }
}

}  // namespace diffoc::harness
