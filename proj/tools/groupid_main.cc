//
// Copyright 2026 The groupid Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// groupid: run, sweep and plot-data front end for the proxy simulator.
//
//   groupid run <config> [--seed N] [--out DIR] [--workers N]
//   groupid sweep <spec> [--seed N] [--out DIR] [--workers N]
//   groupid plotdata <dir> <figure>
//
// GROUPID_SEED and GROUPID_OUT override the config; flags override both.
// Exit status: 0 success, 1 configuration error, 2 runtime error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_join.h"
#include "groupid/harness.h"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int Fail(const absl::Status& status) {
  std::cerr << "groupid: " << status.message() << "\n";
  return status.code() == absl::StatusCode::kInvalidArgument ? kConfigError
                                                             : kRuntimeError;
}

// flag > environment > config file.
absl::Status ApplyOverrides(groupid::HarnessConfig& config,
                            const std::optional<uint64_t>& seed_flag,
                            const std::optional<std::string>& out_flag) {
  if (const char* env = std::getenv("GROUPID_SEED"); env != nullptr) {
    uint64_t seed = 0;
    if (!absl::SimpleAtoi(env, &seed)) {
      return absl::InvalidArgumentError(
          std::string("GROUPID_SEED is not an integer: ") + env);
    }
    config.scenario.seed = seed;
  }
  if (const char* env = std::getenv("GROUPID_OUT"); env != nullptr && *env) {
    config.out = env;
  }
  if (seed_flag.has_value()) config.scenario.seed = *seed_flag;
  if (out_flag.has_value()) config.out = *out_flag;
  return absl::OkStatus();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-identity proxy privacy simulator"};
  app.require_subcommand(1);

  std::string path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  int workers = 1;

  CLI::App* run = app.add_subcommand("run", "Run one scenario config");
  run->add_option("config", path, "Config file")->required();
  run->add_option("--seed", seed, "Override the seed");
  run->add_option("--out", out, "Output directory");
  run->add_option("--workers", workers, "Worker threads")
      ->check(CLI::PositiveNumber);

  CLI::App* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->add_option("spec", path, "Sweep file")->required();
  sweep->add_option("--seed", seed, "Override the base seed");
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--workers", workers, "Worker threads")
      ->check(CLI::PositiveNumber);

  std::string figure;
  CLI::App* plot = app.add_subcommand("plotdata", "Export plot data");
  plot->add_option("dir", path, "Metrics directory")->required();
  plot->add_option("figure", figure,
                   "One of: " + absl::StrJoin(groupid::PlotFigureIds(), ", "))
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (run->parsed()) {
    absl::StatusOr<groupid::HarnessConfig> config = groupid::LoadConfig(path);
    if (!config.ok()) return Fail(config.status());
    if (absl::Status s = ApplyOverrides(*config, seed, out); !s.ok()) {
      return Fail(s);
    }
    absl::StatusOr<groupid::RunOutcome> outcome =
        groupid::Run(*config, workers);
    if (!outcome.ok()) return Fail(outcome.status());
    std::cout << "wrote " << outcome->csv_path << "\n" << outcome->summary;
    return kOk;
  }
  if (sweep->parsed()) {
    absl::StatusOr<groupid::SweepSpec> spec = groupid::LoadSweep(path);
    if (!spec.ok()) return Fail(spec.status());
    if (absl::Status s = ApplyOverrides(spec->base, seed, out); !s.ok()) {
      return Fail(s);
    }
    absl::StatusOr<groupid::SweepOutcome> outcome =
        groupid::Sweep(*spec, workers, std::cout);
    if (!outcome.ok()) return Fail(outcome.status());
    std::cout << "wrote " << outcome->csv_paths.size() << " CSV(s) and "
              << outcome->summary_path << "\n";
    if (!outcome->failures.empty()) {
      std::cerr << "groupid: " << outcome->failures.size()
                << " sweep run(s) failed\n";
      return kRuntimeError;
    }
    return kOk;
  }
  absl::StatusOr<std::string> written = groupid::EmitPlotData(path, figure);
  if (!written.ok()) return Fail(written.status());
  std::cout << "wrote " << *written << "\n";
  return kOk;
}
