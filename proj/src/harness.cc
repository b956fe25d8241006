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

#include "groupid/harness.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "absl/container/flat_hash_set.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace groupid {
namespace {

namespace fs = std::filesystem;

std::string Num(double v) { return absl::StrFormat("%.12g", v); }

absl::Status ParseInt(absl::string_view key, absl::string_view value, int& out) {
  if (!absl::SimpleAtoi(value, &out)) {
    return absl::InvalidArgumentError(
        absl::StrCat(key, ": expected an integer, got '", value, "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseU64(absl::string_view key, absl::string_view value,
                      uint64_t& out) {
  if (!absl::SimpleAtoi(value, &out)) {
    return absl::InvalidArgumentError(absl::StrCat(
        key, ": expected a non-negative integer, got '", value, "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseDouble(absl::string_view key, absl::string_view value,
                         double& out) {
  if (!absl::SimpleAtod(value, &out) || !std::isfinite(out)) {
    return absl::InvalidArgumentError(
        absl::StrCat(key, ": expected a number, got '", value, "'"));
  }
  return absl::OkStatus();
}

absl::Status ParseBool(absl::string_view key, absl::string_view value,
                       bool& out) {
  if (!absl::SimpleAtob(value, &out)) {
    return absl::InvalidArgumentError(
        absl::StrCat(key, ": expected true or false, got '", value, "'"));
  }
  return absl::OkStatus();
}

using Setter = std::function<absl::Status(HarnessConfig&, absl::string_view)>;
using Getter = std::function<std::string(const HarnessConfig&)>;

struct KeySpec {
  const char* key;
  Setter set;
  Getter get;
};

template <typename Field>
KeySpec IntKey(const char* key, Field field) {
  return {key,
          [key, field](HarnessConfig& c, absl::string_view v) {
            return ParseInt(key, v, field(c));
          },
          [field](const HarnessConfig& c) {
            return absl::StrCat(field(const_cast<HarnessConfig&>(c)));
          }};
}

template <typename Field>
KeySpec DoubleKey(const char* key, Field field) {
  return {key,
          [key, field](HarnessConfig& c, absl::string_view v) {
            return ParseDouble(key, v, field(c));
          },
          [field](const HarnessConfig& c) {
            return Num(field(const_cast<HarnessConfig&>(c)));
          }};
}

template <typename Field>
KeySpec BoolKey(const char* key, Field field) {
  return {key,
          [key, field](HarnessConfig& c, absl::string_view v) {
            return ParseBool(key, v, field(c));
          },
          [field](const HarnessConfig& c) {
            return field(const_cast<HarnessConfig&>(c)) ? std::string("true")
                                                         : std::string("false");
          }};
}

template <typename Field>
KeySpec U64Key(const char* key, Field field) {
  return {key,
          [key, field](HarnessConfig& c, absl::string_view v) {
            return ParseU64(key, v, field(c));
          },
          [field](const HarnessConfig& c) {
            return absl::StrCat(field(const_cast<HarnessConfig&>(c)));
          }};
}

const std::vector<KeySpec>& Keys() {
  static const std::vector<KeySpec>* keys = new std::vector<KeySpec>{
      IntKey("proxies",
             [](HarnessConfig& c) -> int& { return c.scenario.num_proxies; }),
      IntKey("users",
             [](HarnessConfig& c) -> int& { return c.scenario.num_users; }),
      DoubleKey("user_diversity", [](HarnessConfig& c) -> double& {
        return c.scenario.user_diversity;
      }),
      DoubleKey("proxy_diversity", [](HarnessConfig& c) -> double& {
        return c.scenario.proxy_diversity;
      }),
      IntKey("topics",
             [](HarnessConfig& c) -> int& { return c.scenario.num_topics; }),
      IntKey("steps", [](HarnessConfig& c) -> int& { return c.scenario.steps; }),
      DoubleKey("noise_ratio", [](HarnessConfig& c) -> double& {
        return c.scenario.noise_ratio;
      }),
      DoubleKey("smoothing",
                [](HarnessConfig& c) -> double& { return c.scenario.smoothing; }),
      DoubleKey("delta",
                [](HarnessConfig& c) -> double& { return c.scenario.delta; }),
      {"alphas",
       [](HarnessConfig& c, absl::string_view v) -> absl::Status {
         std::vector<double> alphas;
         for (absl::string_view part : absl::StrSplit(v, ',')) {
           double a = 0.0;
           if (absl::Status s = ParseDouble("alphas", absl::StripAsciiWhitespace(part), a);
               !s.ok()) {
             return s;
           }
           alphas.push_back(a);
         }
         c.scenario.alphas = std::move(alphas);
         return absl::OkStatus();
       },
       [](const HarnessConfig& c) {
         std::vector<std::string> parts;
         for (double a : c.scenario.alphas) parts.push_back(Num(a));
         return absl::StrJoin(parts, ",");
       }},
      DoubleKey("query_alpha", [](HarnessConfig& c) -> double& {
        return c.scenario.query_alpha;
      }),
      U64Key("seed", [](HarnessConfig& c) -> uint64_t& { return c.scenario.seed; }),
      {"mode",
       [](HarnessConfig& c, absl::string_view v) -> absl::Status {
         absl::StatusOr<ConditionalMode> mode = ParseConditionalMode(v);
         if (!mode.ok()) return mode.status();
         c.scenario.mode = *mode;
         return absl::OkStatus();
       },
       [](const HarnessConfig& c) {
         return std::string(ConditionalModeName(c.scenario.mode));
       }},
      IntKey("background_size", [](HarnessConfig& c) -> int& {
        return c.scenario.background_size;
      }),
      IntKey("training_size", [](HarnessConfig& c) -> int& {
        return c.scenario.training_size;
      }),
      BoolKey("reselect_every_step", [](HarnessConfig& c) -> bool& {
        return c.scenario.reselect_every_step;
      }),
      IntKey("repetitions", [](HarnessConfig& c) -> int& { return c.repetitions; }),
      {"corpus.path",
       [](HarnessConfig& c, absl::string_view v) -> absl::Status {
         c.scenario.corpus_path = std::string(v);
         return absl::OkStatus();
       },
       [](const HarnessConfig& c) { return c.scenario.corpus_path; }},
      U64Key("corpus.seed",
             [](HarnessConfig& c) -> uint64_t& { return c.scenario.corpus_seed; }),
      IntKey("corpus.input_dictionary_size", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.input_dictionary_size;
      }),
      IntKey("corpus.output_dictionary_size", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.output_dictionary_size;
      }),
      IntKey("corpus.pairs_per_topic", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.pairs_per_topic;
      }),
      IntKey("corpus.topic_inputs_per_topic", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.topic_inputs_per_topic;
      }),
      IntKey("corpus.topic_outputs_per_topic", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.topic_outputs_per_topic;
      }),
      IntKey("corpus.input_length", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.input_length;
      }),
      IntKey("corpus.output_length", [](HarnessConfig& c) -> int& {
        return c.scenario.corpus.output_length;
      }),
      DoubleKey("corpus.anchor_probability", [](HarnessConfig& c) -> double& {
        return c.scenario.corpus.anchor_probability;
      }),
      DoubleKey("corpus.shared_input_affinity", [](HarnessConfig& c) -> double& {
        return c.scenario.corpus.shared_input_affinity;
      }),
      DoubleKey("corpus.revealing_output_weight", [](HarnessConfig& c) -> double& {
        return c.scenario.corpus.revealing_output_weight;
      }),
      DoubleKey("corpus.shared_zipf_exponent", [](HarnessConfig& c) -> double& {
        return c.scenario.corpus.shared_zipf_exponent;
      }),
      BoolKey("tokens.enabled", [](HarnessConfig& c) -> bool& {
        return c.scenario.tokens_enabled;
      }),
      IntKey("tokens.limit",
             [](HarnessConfig& c) -> int& { return c.scenario.tokens_limit; }),
      IntKey("tokens.window",
             [](HarnessConfig& c) -> int& { return c.scenario.tokens_window; }),
  };
  return *keys;
}

const KeySpec* FindKey(absl::string_view key) {
  for (const KeySpec& spec : Keys()) {
    if (key == spec.key) return &spec;
  }
  return nullptr;
}

absl::Status LineError(int line, const absl::Status& status) {
  return absl::Status(status.code(),
                      absl::StrCat("config line ", line, ": ", status.message()));
}

absl::StatusOr<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Splits config text into (line number, key, value) triples.
absl::StatusOr<std::vector<std::tuple<int, std::string, std::string>>>
ConfigLines(absl::string_view contents) {
  std::vector<std::tuple<int, std::string, std::string>> out;
  int number = 0;
  for (absl::string_view line : absl::StrSplit(contents, '\n')) {
    ++number;
    if (size_t hash = line.find('#'); hash != absl::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = absl::StripAsciiWhitespace(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == absl::string_view::npos) {
      return absl::InvalidArgumentError(
          absl::StrCat("config line ", number, ": expected 'key = value'"));
    }
    std::string key(absl::StripAsciiWhitespace(line.substr(0, eq)));
    std::string value(absl::StripAsciiWhitespace(line.substr(eq + 1)));
    if (key.empty()) {
      return absl::InvalidArgumentError(
          absl::StrCat("config line ", number, ": empty key"));
    }
    out.emplace_back(number, std::move(key), std::move(value));
  }
  return out;
}

absl::Status ApplyLines(
    HarnessConfig& config,
    const std::vector<std::tuple<int, std::string, std::string>>& lines,
    bool allow_sweep, std::vector<SweepAxis>* axes) {
  absl::flat_hash_set<std::string> seen;
  for (const auto& [number, key, value] : lines) {
    if (!seen.insert(key).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("config line ", number, ": duplicate key '", key, "'"));
    }
    if (allow_sweep && absl::StartsWith(key, "sweep.")) {
      SweepAxis axis;
      axis.key = key.substr(6);
      if (FindKey(axis.key) == nullptr) {
        return absl::InvalidArgumentError(absl::StrCat(
            "config line ", number, ": unknown sweep key '", axis.key, "'"));
      }
      for (absl::string_view v : absl::StrSplit(value, ',')) {
        v = absl::StripAsciiWhitespace(v);
        if (v.empty()) {
          return absl::InvalidArgumentError(absl::StrCat(
              "config line ", number, ": empty value in sweep axis"));
        }
        axis.values.emplace_back(v);
      }
      axes->push_back(std::move(axis));
      continue;
    }
    if (absl::Status s = SetConfigValue(config, key, value); !s.ok()) {
      return LineError(number, s);
    }
  }
  return absl::OkStatus();
}

absl::Status ValidateHarness(const HarnessConfig& config) {
  if (config.repetitions < 1) {
    return absl::InvalidArgumentError("repetitions must be >= 1");
  }
  return ValidateConfig(config.scenario);
}

std::string CellLabel(
    const std::vector<std::pair<std::string, std::string>>& cell) {
  if (cell.empty()) return "run";
  std::vector<std::string> parts;
  for (const auto& [k, v] : cell) parts.push_back(absl::StrCat(k, "=", v));
  return absl::StrJoin(parts, ";");
}

std::string OptionalNum(const std::optional<double>& v) {
  return v.has_value() ? Num(*v) : "NA";
}

}  // namespace

absl::Status SetConfigValue(HarnessConfig& config, absl::string_view key,
                            absl::string_view value) {
  if (key == "out") {
    config.out = std::string(value);
    return absl::OkStatus();
  }
  const KeySpec* spec = FindKey(key);
  if (spec == nullptr) {
    return absl::InvalidArgumentError(absl::StrCat("unknown key '", key, "'"));
  }
  return spec->set(config, value);
}

absl::StatusOr<HarnessConfig> ParseConfig(absl::string_view contents) {
  auto lines = ConfigLines(contents);
  if (!lines.ok()) return lines.status();
  HarnessConfig config;
  if (absl::Status s = ApplyLines(config, *lines, false, nullptr); !s.ok()) {
    return s;
  }
  if (absl::Status s = ValidateHarness(config); !s.ok()) return s;
  return config;
}

absl::StatusOr<HarnessConfig> LoadConfig(const std::string& path) {
  absl::StatusOr<std::string> contents = ReadFile(path);
  if (!contents.ok()) {
    return absl::InvalidArgumentError(contents.status().message());
  }
  return ParseConfig(*contents);
}

std::vector<std::pair<std::string, std::string>> ConfigEntries(
    const HarnessConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeySpec& spec : Keys()) out.emplace_back(spec.key, spec.get(config));
  return out;
}

std::string FormatConfig(const HarnessConfig& config) {
  std::string out;
  for (const auto& [k, v] : ConfigEntries(config)) {
    absl::StrAppend(&out, k, " = ", v, "\n");
  }
  absl::StrAppend(&out, "out = ", config.out, "\n");
  return out;
}

std::vector<std::string> MetricColumns(const std::vector<double>& alphas) {
  std::vector<std::string> cols = {"selection_accuracy", "utility_loss",
                                   "deniability_direct_global",
                                   "deniability_direct_proxy"};
  for (double a : alphas) {
    cols.push_back(absl::StrCat("deniability_published_", Num(a)));
  }
  for (const char* c : {"abstain_count", "dropped_tokens", "fallback_responses",
                        "noise_queries", "token_refusals"}) {
    cols.push_back(c);
  }
  return cols;
}

std::string FormatMetricsCsv(
    const HarnessConfig& config, const std::vector<RunMetrics>& runs,
    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::string out;
  for (const auto& [k, v] : ConfigEntries(config)) {
    absl::StrAppend(&out, "# ", k, " = ", v, "\n");
  }
  for (const auto& [k, v] : extra) absl::StrAppend(&out, "# ", k, " = ", v, "\n");
  std::vector<std::string> header = {"run", "seed", "step"};
  for (std::string& c : MetricColumns(config.scenario.alphas)) {
    header.push_back(std::move(c));
  }
  absl::StrAppend(&out, absl::StrJoin(header, ","), "\n");
  for (const RunMetrics& run : runs) {
    for (const MetricsRecord& r : run.series.records) {
      std::vector<std::string> row = {
          absl::StrCat(run.run), absl::StrCat(run.seed), absl::StrCat(r.step),
          OptionalNum(r.selection_accuracy), OptionalNum(r.utility_loss),
          OptionalNum(r.deniability_direct_global),
          OptionalNum(r.deniability_direct_proxy)};
      for (const auto& v : r.deniability_published) row.push_back(OptionalNum(v));
      for (int v : {r.abstain_count, r.dropped_tokens, r.fallback_responses,
                    r.noise_queries, r.token_refusals}) {
        row.push_back(absl::StrCat(v));
      }
      absl::StrAppend(&out, absl::StrJoin(row, ","), "\n");
    }
  }
  return out;
}

absl::StatusOr<std::vector<RunMetrics>> RunRepetitions(
    const HarnessConfig& config, int workers) {
  if (absl::Status s = ValidateHarness(config); !s.ok()) return s;
  const int n = config.repetitions;
  std::vector<absl::StatusOr<MetricsSeries>> results(
      n, absl::UnknownError("not run"));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int r = next++; r < n; r = next++) {
      ScenarioConfig scenario = config.scenario;
      scenario.seed = config.scenario.seed + static_cast<uint64_t>(r);
      results[r] = RunScenario(scenario);
    }
  };
  std::vector<std::thread> threads;
  for (int w = 0; w < std::clamp(workers, 1, n); ++w) threads.emplace_back(work);
  for (std::thread& t : threads) t.join();
  std::vector<RunMetrics> runs;
  for (int r = 0; r < n; ++r) {
    if (!results[r].ok()) return results[r].status();
    runs.push_back({r, config.scenario.seed + static_cast<uint64_t>(r),
                    *std::move(results[r])});
  }
  return runs;
}

Stat Summarize(const std::vector<std::optional<double>>& samples) {
  Stat stat;
  double sum = 0.0;
  for (const auto& s : samples) {
    if (!s.has_value()) continue;
    sum += *s;
    ++stat.n;
  }
  if (stat.n == 0) return stat;
  stat.mean = sum / stat.n;
  if (stat.n > 1) {
    double ss = 0.0;
    for (const auto& s : samples) {
      if (s.has_value()) ss += (*s - stat.mean) * (*s - stat.mean);
    }
    stat.stderr_ = std::sqrt(ss / (stat.n - 1)) / std::sqrt(stat.n);
  }
  return stat;
}

absl::StatusOr<MetricsTable> ParseMetricsCsv(absl::string_view contents,
                                             const std::string& path) {
  MetricsTable table;
  table.path = path;
  int number = 0;
  for (absl::string_view line : absl::StrSplit(contents, '\n')) {
    ++number;
    if (line.empty()) continue;
    if (absl::ConsumePrefix(&line, "# ")) {
      size_t eq = line.find(" = ");
      if (eq == absl::string_view::npos) continue;
      table.header[std::string(line.substr(0, eq))] =
          std::string(line.substr(eq + 3));
      continue;
    }
    std::vector<std::string> fields = absl::StrSplit(line, ',');
    if (table.columns.empty()) {
      table.columns = std::move(fields);
      continue;
    }
    if (fields.size() != table.columns.size()) {
      return absl::InvalidArgumentError(absl::StrCat(
          path, ":", number, ": expected ", table.columns.size(),
          " fields, got ", fields.size()));
    }
    std::vector<std::optional<double>> row;
    for (const std::string& f : fields) {
      if (f == "NA") {
        row.push_back(std::nullopt);
        continue;
      }
      double v = 0.0;
      if (!absl::SimpleAtod(f, &v)) {
        return absl::InvalidArgumentError(
            absl::StrCat(path, ":", number, ": bad number '", f, "'"));
      }
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.columns.size() < 3 || table.columns[0] != "run" ||
      table.columns[2] != "step") {
    return absl::InvalidArgumentError(
        absl::StrCat(path, ": not a metrics CSV"));
  }
  return table;
}

absl::StatusOr<MetricsTable> LoadMetricsCsv(const std::string& path) {
  absl::StatusOr<std::string> contents = ReadFile(path);
  if (!contents.ok()) return contents.status();
  return ParseMetricsCsv(*contents, path);
}

absl::Status WriteFile(const std::string& path, absl::string_view contents) {
  fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) {
    return absl::InternalError(
        absl::StrCat("cannot create ", p.parent_path().string(), ": ", ec.message()));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::InternalError(absl::StrCat("cannot write ", path));
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) return absl::InternalError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<RunOutcome> Run(const HarnessConfig& config, int workers) {
  absl::StatusOr<std::vector<RunMetrics>> runs = RunRepetitions(config, workers);
  if (!runs.ok()) return runs.status();
  RunOutcome outcome;
  outcome.csv_path = (fs::path(config.out) / "metrics.csv").string();
  if (absl::Status s = WriteFile(outcome.csv_path, FormatMetricsCsv(config, *runs));
      !s.ok()) {
    return s;
  }
  // Re-read so the summary is computed from exactly what was written.
  absl::StatusOr<MetricsTable> table = LoadMetricsCsv(outcome.csv_path);
  if (!table.ok()) return table.status();
  const int64_t final_step = config.scenario.steps;
  absl::StrAppend(&outcome.summary, "final step ", final_step, ", ",
                  config.repetitions, " repetition(s)\n");
  for (size_t col = 3; col < table->columns.size(); ++col) {
    std::vector<std::optional<double>> samples;
    for (const auto& row : table->rows) {
      if (row[2].has_value() && *row[2] == final_step) samples.push_back(row[col]);
    }
    Stat stat = Summarize(samples);
    if (stat.n == 0) {
      absl::StrAppend(&outcome.summary, "  ", table->columns[col], ": NA\n");
    } else {
      absl::StrAppendFormat(&outcome.summary, "  %s: %.6g ± %.3g (n=%d)\n",
                            table->columns[col], stat.mean, stat.stderr_, stat.n);
    }
  }
  return outcome;
}

int SweepSpec::num_cells() const {
  int n = 1;
  for (const SweepAxis& axis : axes) n *= static_cast<int>(axis.values.size());
  return n;
}

std::vector<std::pair<std::string, std::string>> SweepSpec::Cell(
    int index) const {
  std::vector<std::pair<std::string, std::string>> out(axes.size());
  for (int a = static_cast<int>(axes.size()) - 1; a >= 0; --a) {
    const int size = static_cast<int>(axes[a].values.size());
    out[a] = {axes[a].key, axes[a].values[index % size]};
    index /= size;
  }
  return out;
}

absl::StatusOr<SweepSpec> ParseSweep(absl::string_view contents) {
  auto lines = ConfigLines(contents);
  if (!lines.ok()) return lines.status();
  SweepSpec spec;
  if (absl::Status s = ApplyLines(spec.base, *lines, true, &spec.axes); !s.ok()) {
    return s;
  }
  if (absl::Status s = ValidateHarness(spec.base); !s.ok()) return s;
  for (const SweepAxis& axis : spec.axes) {
    for (const std::string& v : axis.values) {
      HarnessConfig probe = spec.base;
      if (absl::Status s = SetConfigValue(probe, axis.key, v); !s.ok()) {
        return absl::InvalidArgumentError(
            absl::StrCat("sweep axis ", axis.key, ": ", s.message()));
      }
    }
  }
  return spec;
}

absl::StatusOr<SweepSpec> LoadSweep(const std::string& path) {
  absl::StatusOr<std::string> contents = ReadFile(path);
  if (!contents.ok()) {
    return absl::InvalidArgumentError(contents.status().message());
  }
  return ParseSweep(*contents);
}

absl::StatusOr<SweepOutcome> Sweep(const SweepSpec& spec, int workers,
                                   std::ostream& log) {
  SweepOutcome outcome;
  outcome.cells = spec.num_cells();
  outcome.runs = outcome.cells * spec.base.repetitions;
  log << "sweep: " << outcome.cells << " cell(s) x " << spec.base.repetitions
      << " repetition(s) = " << outcome.runs << " run(s)\n";

  struct Task {
    int cell;
    int rep;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < outcome.cells; ++c) {
    for (int r = 0; r < spec.base.repetitions; ++r) tasks.push_back({c, r});
  }
  std::vector<std::string> paths(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::atomic<size_t> next{0};
  auto work = [&]() {
    for (size_t t = next++; t < tasks.size(); t = next++) {
      const Task& task = tasks[t];
      const auto cell = spec.Cell(task.cell);
      HarnessConfig config = spec.base;
      absl::Status status;
      for (const auto& [k, v] : cell) {
        if (status.ok()) status = SetConfigValue(config, k, v);
      }
      config.repetitions = 1;
      const uint64_t seed =
          spec.base.scenario.seed + static_cast<uint64_t>(task.rep);
      config.scenario.seed = seed;
      absl::StatusOr<MetricsSeries> series =
          status.ok() ? RunScenario(config.scenario)
                      : absl::StatusOr<MetricsSeries>(status);
      if (!series.ok()) {
        errors[t] = absl::StrCat(CellLabel(cell), " rep ", task.rep, ": ",
                                 series.status().ToString());
        continue;
      }
      std::vector<std::string> keys;
      for (const SweepAxis& axis : spec.axes) keys.push_back(axis.key);
      const std::vector<std::pair<std::string, std::string>> extra = {
          {"sweep.axes", absl::StrJoin(keys, ",")},
          {"sweep.cell", CellLabel(cell)},
          {"sweep.cell_index", absl::StrCat(task.cell)},
          {"sweep.repetition", absl::StrCat(task.rep)}};
      const std::string path =
          (fs::path(spec.base.out) /
           absl::StrFormat("cell_%04d_rep_%03d.csv", task.cell, task.rep))
              .string();
      HarnessConfig echo = config;
      echo.scenario.seed = spec.base.scenario.seed;
      std::vector<RunMetrics> runs = {{task.rep, seed, *std::move(series)}};
      if (absl::Status s = WriteFile(path, FormatMetricsCsv(echo, runs, extra));
          !s.ok()) {
        errors[t] = s.ToString();
        continue;
      }
      paths[t] = path;
    }
  };
  std::vector<std::thread> threads;
  const int n_workers = std::clamp(workers, 1, std::max<int>(1, tasks.size()));
  for (int w = 0; w < n_workers; ++w) threads.emplace_back(work);
  for (std::thread& t : threads) t.join();

  for (size_t t = 0; t < tasks.size(); ++t) {
    if (!errors[t].empty()) {
      outcome.failures.push_back(errors[t]);
      log << "sweep: failed " << errors[t] << "\n";
    } else {
      outcome.csv_paths.push_back(paths[t]);
    }
  }
  if (!outcome.failures.empty()) {
    if (absl::Status s =
            WriteFile((fs::path(spec.base.out) / "failures.txt").string(),
                      absl::StrCat(absl::StrJoin(outcome.failures, "\n"), "\n"));
        !s.ok()) {
      return s;
    }
  }
  if (outcome.csv_paths.empty()) {
    return absl::InternalError("every sweep run failed");
  }
  absl::StatusOr<std::vector<SummaryRow>> rows =
      AggregateDirectory(spec.base.out);
  if (!rows.ok()) return rows.status();
  outcome.summary_path = (fs::path(spec.base.out) / "summary.csv").string();
  if (absl::Status s = WriteFile(outcome.summary_path, FormatSummaryCsv(*rows));
      !s.ok()) {
    return s;
  }
  return outcome;
}

absl::StatusOr<std::vector<SummaryRow>> AggregateDirectory(
    const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    return absl::NotFoundError(absl::StrCat("no metrics directory ", dir));
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (name == "metrics.csv" ||
        (absl::StartsWith(name, "cell_") && absl::EndsWith(name, ".csv"))) {
      files.push_back(entry.path().string());
    }
  }
  if (files.empty()) {
    return absl::NotFoundError(absl::StrCat("no metrics CSVs in ", dir));
  }
  std::sort(files.begin(), files.end());

  struct Group {
    std::map<std::string, std::string> header;
    std::vector<std::string> columns;
    // (step, column) -> samples
    std::map<std::pair<int64_t, size_t>, std::vector<std::optional<double>>>
        samples;
  };
  std::map<std::string, Group> groups;
  std::vector<std::string> order;
  for (const std::string& file : files) {
    absl::StatusOr<MetricsTable> table = LoadMetricsCsv(file);
    if (!table.ok()) return table.status();
    auto it = table->header.find("sweep.cell");
    const std::string series = it == table->header.end() ? "run" : it->second;
    auto [g, inserted] = groups.try_emplace(series);
    if (inserted) {
      g->second.header = table->header;
      g->second.columns = table->columns;
      order.push_back(series);
    } else if (g->second.columns != table->columns) {
      return absl::InvalidArgumentError(
          absl::StrCat(file, ": columns differ from other runs of ", series));
    }
    for (const auto& row : table->rows) {
      if (!row[2].has_value()) continue;
      const int64_t step = static_cast<int64_t>(*row[2]);
      for (size_t col = 3; col < row.size(); ++col) {
        g->second.samples[{step, col}].push_back(row[col]);
      }
    }
  }
  std::vector<SummaryRow> rows;
  for (const std::string& series : order) {
    const Group& g = groups[series];
    for (const auto& [key, samples] : g.samples) {
      SummaryRow row;
      row.series = series;
      row.axes = g.header;
      row.step = key.first;
      row.metric = g.columns[key.second];
      row.stat = Summarize(samples);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string FormatSummaryCsv(const std::vector<SummaryRow>& rows) {
  std::string out = "series,step,metric,n,mean,stderr\n";
  for (const SummaryRow& r : rows) {
    absl::StrAppend(&out, r.series, ",", r.step, ",", r.metric, ",", r.stat.n,
                    ",", r.stat.n > 0 ? Num(r.stat.mean) : "NA", ",",
                    r.stat.n > 0 ? Num(r.stat.stderr_) : "NA", "\n");
  }
  return out;
}

std::vector<std::string> PlotFigureIds() {
  return {"selection-convergence", "utility-loss", "diversity-vs-pd",
          "noise-vs-pd"};
}

absl::StatusOr<std::string> EmitPlotData(const std::string& dir,
                                         const std::string& figure) {
  const std::vector<std::string> ids = PlotFigureIds();
  if (std::find(ids.begin(), ids.end(), figure) == ids.end()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "unknown figure '", figure, "'; valid ids: ", absl::StrJoin(ids, ", ")));
  }
  absl::StatusOr<std::vector<SummaryRow>> rows = AggregateDirectory(dir);
  if (!rows.ok()) return rows.status();

  std::string out;
  auto emit = [&out](const std::string& x, const std::string& series,
                     const Stat& stat) {
    absl::StrAppend(&out, x, ",", series, ",",
                    stat.n > 0 ? Num(stat.mean) : "NA", ",",
                    stat.n > 0 ? Num(stat.stderr_) : "NA", "\n");
  };
  // Series label with one axis removed.
  auto without = [](const std::string& series, absl::string_view key) {
    std::vector<std::string> kept;
    for (absl::string_view part : absl::StrSplit(series, ';')) {
      if (!absl::StartsWith(part, absl::StrCat(key, "="))) kept.emplace_back(part);
    }
    return kept.empty() ? std::string("all") : absl::StrJoin(kept, ";");
  };

  if (figure == "selection-convergence" || figure == "utility-loss") {
    const std::string metric = figure == "selection-convergence"
                                   ? "selection_accuracy"
                                   : "utility_loss";
    out = "step,series,mean,stderr\n";
    for (const SummaryRow& r : *rows) {
      if (r.metric == metric) emit(absl::StrCat(r.step), r.series, r.stat);
    }
  } else if (figure == "noise-vs-pd") {
    out = "step,series,mean,stderr\n";
    for (const SummaryRow& r : *rows) {
      if (r.metric != "deniability_direct_proxy") continue;
      auto it = r.axes.find("noise_ratio");
      const std::string noise = it == r.axes.end() ? "NA" : it->second;
      std::string series = absl::StrCat("noise_ratio=", noise);
      const std::string rest = without(r.series, "noise_ratio");
      if (rest != "all" && rest != "run") absl::StrAppend(&series, ";", rest);
      emit(absl::StrCat(r.step), series, r.stat);
    }
  } else {
    out = "user_diversity,series,mean,stderr\n";
    int64_t final_step = 0;
    for (const SummaryRow& r : *rows) final_step = std::max(final_step, r.step);
    for (const SummaryRow& r : *rows) {
      if (r.step != final_step ||
          !absl::StartsWith(r.metric, "deniability_")) {
        continue;
      }
      auto it = r.axes.find("user_diversity");
      const std::string x = it == r.axes.end() ? "NA" : it->second;
      std::string series = r.metric;
      const std::string rest = without(r.series, "user_diversity");
      if (rest != "all" && rest != "run") absl::StrAppend(&series, ";", rest);
      emit(x, series, r.stat);
    }
  }
  const std::string path =
      (fs::path(dir) / absl::StrCat("plot_", figure, ".csv")).string();
  if (absl::Status s = WriteFile(path, out); !s.ok()) return s;
  return path;
}

}  // namespace groupid
