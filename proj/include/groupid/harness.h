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

#ifndef GROUPID_HARNESS_H_
#define GROUPID_HARNESS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "groupid/simulation.h"

namespace groupid {

// A scenario plus run-level settings.
struct HarnessConfig {
  ScenarioConfig scenario;
  // Repetition r runs with seed + r.
  int repetitions = 1;
  std::string out = "out";
};

// Line-oriented `key = value` text; `#` starts a comment. Unknown keys,
// duplicates and malformed values are InvalidArgument errors naming the line.
absl::StatusOr<HarnessConfig> ParseConfig(absl::string_view contents);
absl::StatusOr<HarnessConfig> LoadConfig(const std::string& path);

// Sets one key. Values use the same syntax as the config file.
absl::Status SetConfigValue(HarnessConfig& config, absl::string_view key,
                            absl::string_view value);

// Every scenario key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> ConfigEntries(
    const HarnessConfig& config);
std::string FormatConfig(const HarnessConfig& config);

// Column names after run, seed, step.
std::vector<std::string> MetricColumns(const std::vector<double>& alphas);

struct RunMetrics {
  int run = 0;
  uint64_t seed = 0;
  MetricsSeries series;
};

// Header block `# key = value` (config echo plus `extra`), column header,
// then one row per (run, step). Numbers use 12 significant digits, missing
// values are NA, line endings are LF.
std::string FormatMetricsCsv(
    const HarnessConfig& config, const std::vector<RunMetrics>& runs,
    const std::vector<std::pair<std::string, std::string>>& extra = {});

// Runs every repetition of `config` on up to `workers` threads.
absl::StatusOr<std::vector<RunMetrics>> RunRepetitions(
    const HarnessConfig& config, int workers);

struct Stat {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

// Mean and standard error of one metric over a set of samples (NA skipped).
Stat Summarize(const std::vector<std::optional<double>>& samples);

// A parsed metrics CSV.
struct MetricsTable {
  std::string path;
  std::map<std::string, std::string> header;
  std::vector<std::string> columns;
  // Row-major; std::nullopt for NA.
  std::vector<std::vector<std::optional<double>>> rows;
};

absl::StatusOr<MetricsTable> ParseMetricsCsv(absl::string_view contents,
                                             const std::string& path = "");
absl::StatusOr<MetricsTable> LoadMetricsCsv(const std::string& path);

struct RunOutcome {
  std::string csv_path;
  // Final-step mean +- standard error per metric.
  std::string summary;
};

// Executes `config`, writes <out>/metrics.csv.
absl::StatusOr<RunOutcome> Run(const HarnessConfig& config, int workers);

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

struct SweepSpec {
  HarnessConfig base;
  std::vector<SweepAxis> axes;

  // Product of the axis sizes.
  int num_cells() const;
  // Axis assignment of cell `index`, the last axis varying fastest.
  std::vector<std::pair<std::string, std::string>> Cell(int index) const;
};

// A config file whose `sweep.<key> = v1,v2,...` lines declare axes.
absl::StatusOr<SweepSpec> ParseSweep(absl::string_view contents);
absl::StatusOr<SweepSpec> LoadSweep(const std::string& path);

struct SweepOutcome {
  int cells = 0;
  int runs = 0;
  std::vector<std::string> csv_paths;
  std::vector<std::string> failures;
  std::string summary_path;
};

// One CSV per (cell, repetition) under <out>, then <out>/summary.csv with
// mean and standard error per (cell, step, metric). Failed cells are logged
// and skipped.
absl::StatusOr<SweepOutcome> Sweep(const SweepSpec& spec, int workers,
                                   std::ostream& log);

// Aggregates every metrics CSV in `dir` into summary rows keyed by
// (series label, x, metric) with x the step.
struct SummaryRow {
  std::string series;
  std::map<std::string, std::string> axes;
  int64_t step = 0;
  std::string metric;
  Stat stat;
};
absl::StatusOr<std::vector<SummaryRow>> AggregateDirectory(
    const std::string& dir);
std::string FormatSummaryCsv(const std::vector<SummaryRow>& rows);

std::vector<std::string> PlotFigureIds();

// Writes <dir>/plot_<figure>.csv in long format (x, series, mean, stderr)
// and returns its path.
absl::StatusOr<std::string> EmitPlotData(const std::string& dir,
                                         const std::string& figure);

// Writes `contents` to `path`, creating parent directories.
absl::Status WriteFile(const std::string& path, absl::string_view contents);

}  // namespace groupid

#endif  // GROUPID_HARNESS_H_
