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


// diffoc <command> --config PATH [--seed N] [--out DIR] [--jobs N]

#include <CLI11.hpp>

#include "diffoc/harness/runner.hpp"

int main(int argc, char** argv) {
  using namespace diffoc::harness;
  CLI::App app{"Inverse problems by optimal control of a diffusion sampler"};
  app.set_version_flag("--version", diffoc::kVersion);
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int jobs = 1;

  const std::vector<std::pair<std::string, std::string>> help{
      {"solve", "solve one inverse problem"},
      {"ablate", "sweep rank, alpha or T"},
      {"compare", "uncontrolled sampling, DPS and control side by side"},
      {"train-score", "fit the score network by denoising score matching"},
      {"verify-theorems", "write the equivalence reports"},
  };
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", config, "JSON config file")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out, "override output.dir");
    sub->add_option("--jobs", jobs, "parallel ablation points")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  Overrides ov;
  ov.seed = seed;
  if (out) ov.out_dir = *out;
  return run_command(app.get_subcommands().front()->get_name(), config, ov, jobs);
}
