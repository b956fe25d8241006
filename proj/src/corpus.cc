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

#include "groupid/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"

namespace groupid {

Dictionary::Dictionary(std::vector<std::string> features, DictionaryKind kind)
    : features_(std::move(features)), kind_(kind) {
  index_.reserve(features_.size());
  for (int i = 0; i < size(); ++i) index_.emplace(features_[i], i);
}

absl::StatusOr<Dictionary> Dictionary::Create(std::vector<std::string> features,
                                              DictionaryKind kind) {
  if (features.empty()) {
    return absl::InvalidArgumentError("dictionary must be non-empty");
  }
  absl::flat_hash_set<absl::string_view> seen;
  for (const std::string& f : features) {
    if (f.empty()) {
      return absl::InvalidArgumentError("dictionary contains an empty feature");
    }
    if (!seen.insert(f).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("duplicate dictionary feature '", f, "'"));
    }
  }
  return Dictionary(std::move(features), kind);
}

std::optional<int> Dictionary::IndexOf(absl::string_view feature) const {
  auto it = index_.find(feature);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

absl::StatusOr<TopicSet> TopicSet::Create(std::vector<std::string> labels) {
  if (labels.empty()) {
    return absl::InvalidArgumentError(
        "topic set needs at least the catch-all label");
  }
  absl::flat_hash_set<absl::string_view> seen;
  for (const std::string& l : labels) {
    if (l.empty() || !seen.insert(l).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("invalid or duplicate topic label '", l, "'"));
    }
  }
  return TopicSet(std::move(labels));
}

TopicSet TopicSet::WithSensitiveTopics(int num_sensitive) {
  std::vector<std::string> labels;
  for (int c = 0; c <= num_sensitive; ++c) labels.push_back(absl::StrCat("c", c));
  return TopicSet(std::move(labels));
}

std::optional<TopicId> TopicSet::Find(absl::string_view label) const {
  for (int c = 0; c < size(); ++c) {
    if (labels_[c] == label) return c;
  }
  return std::nullopt;
}

std::vector<TopicId> TopicSet::SensitiveTopics() const {
  std::vector<TopicId> out;
  for (int c = 1; c < size(); ++c) out.push_back(c);
  return out;
}

namespace {

absl::Status CheckSides(const InputOutputPair& pair) {
  if (pair.input.empty() || pair.output.empty()) {
    return absl::InvalidArgumentError(
        "an input-output pair needs at least one keyword on each side");
  }
  return absl::OkStatus();
}

}  // namespace

absl::Status SessionSequence::AppendBackground(InputOutputPair pair) {
  if (absl::Status s = CheckSides(pair); !s.ok()) return s;
  if (background_size_ != pairs_.size()) {
    return absl::FailedPreconditionError(
        "background knowledge must precede all interactions");
  }
  pairs_.push_back(std::move(pair));
  ++background_size_;
  return absl::OkStatus();
}

absl::Status SessionSequence::Append(InputOutputPair pair) {
  if (absl::Status s = CheckSides(pair); !s.ok()) return s;
  if (pair.step < 1) {
    return absl::InvalidArgumentError("interaction step index must be >= 1");
  }
  if (pairs_.size() > background_size_ && pairs_.back().step >= pair.step) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "step index %d does not follow %d", pair.step, pairs_.back().step));
  }
  pairs_.push_back(std::move(pair));
  return absl::OkStatus();
}

LabellingRule::LabellingRule(int num_topics, int input_size, int output_size)
    : num_topics_(num_topics),
      input_size_(input_size),
      output_size_(output_size),
      cells_(num_topics),
      inputs_(num_topics),
      outputs_(num_topics) {}

absl::Status LabellingRule::AddRevealingCell(TopicId topic, KeywordCell cell) {
  if (topic <= kCatchAllTopic || topic >= num_topics_) {
    return absl::InvalidArgumentError(
        absl::StrCat("rules apply to sensitive topics only, got ", topic));
  }
  if (cell.input < 0 || cell.input >= input_size_ || cell.output < 0 ||
      cell.output >= output_size_) {
    return absl::OutOfRangeError("rule cell outside the dictionaries");
  }
  cells_[topic].insert(Key(cell));
  return absl::OkStatus();
}

absl::Status LabellingRule::AddRevealingInput(TopicId topic, int input) {
  if (topic <= kCatchAllTopic || topic >= num_topics_) {
    return absl::InvalidArgumentError(
        absl::StrCat("rules apply to sensitive topics only, got ", topic));
  }
  if (input < 0 || input >= input_size_) {
    return absl::OutOfRangeError("rule input outside the dictionary");
  }
  inputs_[topic].insert(input);
  return absl::OkStatus();
}

absl::Status LabellingRule::AddRevealingOutput(TopicId topic, int output) {
  if (topic <= kCatchAllTopic || topic >= num_topics_) {
    return absl::InvalidArgumentError(
        absl::StrCat("rules apply to sensitive topics only, got ", topic));
  }
  if (output < 0 || output >= output_size_) {
    return absl::OutOfRangeError("rule output outside the dictionary");
  }
  outputs_[topic].insert(output);
  return absl::OkStatus();
}

bool LabellingRule::Matches(TopicId topic, KeywordCell cell) const {
  if (topic <= kCatchAllTopic || topic >= num_topics_) return false;
  return inputs_[topic].contains(cell.input) ||
         outputs_[topic].contains(cell.output) ||
         cells_[topic].contains(Key(cell));
}

std::vector<TopicId> LabellingRule::Label(const InputOutputPair& pair) const {
  std::vector<TopicId> labels;
  if (!pair.input.empty() && !pair.output.empty()) {
    for (TopicId c = 1; c < num_topics_; ++c) {
      bool hit = std::any_of(pair.input.begin(), pair.input.end(),
                             [&](int i) { return inputs_[c].contains(i); }) ||
                 std::any_of(pair.output.begin(), pair.output.end(),
                             [&](int j) { return outputs_[c].contains(j); });
      if (!hit && !cells_[c].empty()) {
        for (int i : pair.input) {
          for (int j : pair.output) {
            if (cells_[c].contains(Key({i, j}))) {
              hit = true;
              break;
            }
          }
          if (hit) break;
        }
      }
      if (hit) labels.push_back(c);
    }
  }
  if (labels.empty()) labels.push_back(kCatchAllTopic);
  return labels;
}

std::vector<TopicId> LabelPair(const LabellingRule& rule,
                               const InputOutputPair& pair) {
  return rule.Label(pair);
}

std::vector<std::string> Tokenize(absl::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

CountVector CountVectorize(absl::Span<const std::string> tokens,
                           const Dictionary& dictionary) {
  CountVector out;
  out.counts.assign(dictionary.size(), 0);
  for (const std::string& t : tokens) {
    if (auto idx = dictionary.IndexOf(t)) {
      ++out.counts[*idx];
    } else {
      ++out.dropped;
    }
  }
  return out;
}

CountVector CountVectorize(absl::string_view text,
                           const Dictionary& dictionary) {
  std::vector<std::string> tokens = Tokenize(text);
  return CountVectorize(absl::MakeConstSpan(tokens), dictionary);
}

namespace {

absl::Status ValidateSpec(const SyntheticCorpusSpec& spec, int topic_inputs,
                          int topic_outputs) {
  if (spec.num_sensitive_topics < 1) {
    return absl::InvalidArgumentError("need at least one sensitive topic");
  }
  if (spec.pairs_per_topic < 1 || spec.input_length < 1 ||
      spec.output_length < 1) {
    return absl::InvalidArgumentError(
        "pairs_per_topic, input_length and output_length must be >= 1");
  }
  if (!(spec.shared_input_affinity > 0.0)) {
    return absl::InvalidArgumentError("shared_input_affinity must be > 0");
  }
  if (!(spec.anchor_probability >= 0.0 && spec.anchor_probability <= 1.0)) {
    return absl::InvalidArgumentError("anchor_probability must lie in [0, 1]");
  }
  if (!(spec.revealing_output_weight >= 0.0 &&
        spec.revealing_output_weight <= 1.0)) {
    return absl::InvalidArgumentError(
        "revealing_output_weight must lie in [0, 1]");
  }
  if (!(spec.shared_zipf_exponent >= 0.0)) {
    return absl::InvalidArgumentError("shared_zipf_exponent must be >= 0");
  }
  if (topic_inputs < 1 || topic_outputs < 1) {
    return absl::InvalidArgumentError("topic keyword blocks must be non-empty");
  }
  const int64_t reserved_x =
      static_cast<int64_t>(topic_inputs) * spec.num_sensitive_topics;
  const int64_t reserved_y =
      static_cast<int64_t>(topic_outputs) * spec.num_sensitive_topics;
  if (reserved_x >= spec.input_dictionary_size ||
      reserved_y >= spec.output_dictionary_size) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "infeasible corpus spec: %d topics x (%d inputs, %d outputs) leave no "
        "shared keywords in dictionaries of size %d x %d",
        spec.num_sensitive_topics, topic_inputs, topic_outputs,
        spec.input_dictionary_size, spec.output_dictionary_size));
  }
  return absl::OkStatus();
}

std::discrete_distribution<int> ZipfOver(int n, double exponent) {
  std::vector<double> weights(n);
  for (int r = 0; r < n; ++r) weights[r] = 1.0 / std::pow(r + 1.0, exponent);
  return std::discrete_distribution<int>(weights.begin(), weights.end());
}

}  // namespace

absl::StatusOr<Corpus> GenerateCorpus(const SyntheticCorpusSpec& spec) {
  const int k = spec.num_sensitive_topics;
  const int topic_inputs =
      spec.topic_inputs_per_topic > 0
          ? spec.topic_inputs_per_topic
          : std::max(1, spec.input_dictionary_size / (4 * std::max(k, 1)));
  const int topic_outputs =
      spec.topic_outputs_per_topic > 0
          ? spec.topic_outputs_per_topic
          : std::max(1, spec.output_dictionary_size / (4 * std::max(k, 1)));
  if (absl::Status s = ValidateSpec(spec, topic_inputs, topic_outputs);
      !s.ok()) {
    return s;
  }

  // Topic c (1-based) owns inputs [(c-1)*topic_inputs, c*topic_inputs); the
  // shared keywords follow the topic blocks.
  const int shared_x_begin = k * topic_inputs;
  const int shared_y_begin = k * topic_outputs;
  const int shared_x = spec.input_dictionary_size - shared_x_begin;
  const int shared_y = spec.output_dictionary_size - shared_y_begin;

  std::vector<std::string> xs, ys;
  xs.reserve(spec.input_dictionary_size);
  ys.reserve(spec.output_dictionary_size);
  for (int c = 1; c <= k; ++c) {
    for (int t = 0; t < topic_inputs; ++t) xs.push_back(absl::StrCat("t", c, "q", t));
    for (int t = 0; t < topic_outputs; ++t) ys.push_back(absl::StrCat("t", c, "r", t));
  }
  for (int t = 0; t < shared_x; ++t) xs.push_back(absl::StrCat("q", t));
  for (int t = 0; t < shared_y; ++t) ys.push_back(absl::StrCat("r", t));

  absl::StatusOr<Dictionary> dx =
      Dictionary::Create(std::move(xs), DictionaryKind::kInput);
  if (!dx.ok()) return dx.status();
  absl::StatusOr<Dictionary> dy =
      Dictionary::Create(std::move(ys), DictionaryKind::kOutput);
  if (!dy.ok()) return dy.status();

  std::mt19937_64 rng(spec.seed);
  std::discrete_distribution<int> shared_input =
      ZipfOver(shared_x, spec.shared_zipf_exponent);
  std::discrete_distribution<int> shared_output =
      ZipfOver(shared_y, spec.shared_zipf_exponent);
  std::uniform_int_distribution<int> topic_input(0, topic_inputs - 1);
  std::uniform_int_distribution<int> topic_output(0, topic_outputs - 1);
  // Topic c favours the shared inputs at ranks r with r % (k + 1) == c.
  std::vector<std::discrete_distribution<int>> shared_input_by_topic;
  for (TopicId c = 0; c <= k; ++c) {
    std::vector<double> weights = shared_input.probabilities();
    for (int r = c; r < shared_x; r += k + 1) {
      weights[r] *= spec.shared_input_affinity;
    }
    shared_input_by_topic.emplace_back(weights.begin(), weights.end());
  }
  std::bernoulli_distribution revealing(spec.revealing_output_weight);
  std::bernoulli_distribution anchored(spec.anchor_probability);

  std::vector<LabelledPair> pairs;
  pairs.reserve(static_cast<size_t>(spec.pairs_per_topic) * (k + 1));
  for (TopicId c = 0; c <= k; ++c) {
    for (int n = 0; n < spec.pairs_per_topic; ++n) {
      LabelledPair lp;
      lp.labels = {c};
      auto& in = lp.pair.input;
      auto& out = lp.pair.output;
      const bool anchor_in = c != kCatchAllTopic && anchored(rng);
      const bool anchor_out = c != kCatchAllTopic && anchored(rng);
      for (int s = 0; s < spec.input_length; ++s) {
        if (anchor_in && s == 0) {
          in.push_back((c - 1) * topic_inputs + topic_input(rng));
        } else {
          in.push_back(shared_x_begin + shared_input_by_topic[c](rng));
        }
      }
      for (int s = 0; s < spec.output_length; ++s) {
        if (c != kCatchAllTopic && ((s == 0 && anchor_out) ||
                                    (s > 0 && revealing(rng)))) {
          out.push_back((c - 1) * topic_outputs + topic_output(rng));
        } else {
          out.push_back(shared_y_begin + shared_output(rng));
        }
      }
      pairs.push_back(std::move(lp));
    }
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);

  return Corpus{*std::move(dx), *std::move(dy), TopicSet::WithSensitiveTopics(k),
                std::move(pairs), 0};
}

namespace {

absl::Status LineError(int line, absl::string_view what) {
  return absl::InvalidArgumentError(
      absl::StrCat("corpus line ", line, ": ", what));
}

absl::StatusOr<std::vector<std::string>> HeaderList(absl::string_view line,
                                                    absl::string_view key,
                                                    int line_no) {
  std::vector<absl::string_view> parts = absl::StrSplit(line, '\t');
  if (parts.size() != 2 || parts[0] != key) {
    return LineError(line_no, absl::StrCat("expected header '", key, "'"));
  }
  std::vector<std::string> items = absl::StrSplit(parts[1], ',');
  return items;
}

}  // namespace

absl::StatusOr<Corpus> ParseCorpus(absl::string_view contents) {
  std::vector<absl::string_view> lines = absl::StrSplit(contents, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 3) {
    return absl::InvalidArgumentError("corpus file is missing its header block");
  }

  absl::StatusOr<std::vector<std::string>> xs =
      HeaderList(lines[0], "#dictionary_x", 1);
  if (!xs.ok()) return xs.status();
  absl::StatusOr<std::vector<std::string>> ys =
      HeaderList(lines[1], "#dictionary_y", 2);
  if (!ys.ok()) return ys.status();
  absl::StatusOr<std::vector<std::string>> ts = HeaderList(lines[2], "#topics", 3);
  if (!ts.ok()) return ts.status();

  absl::StatusOr<Dictionary> dx =
      Dictionary::Create(*std::move(xs), DictionaryKind::kInput);
  if (!dx.ok()) return LineError(1, dx.status().message());
  absl::StatusOr<Dictionary> dy =
      Dictionary::Create(*std::move(ys), DictionaryKind::kOutput);
  if (!dy.ok()) return LineError(2, dy.status().message());
  absl::StatusOr<TopicSet> topics = TopicSet::Create(*std::move(ts));
  if (!topics.ok()) return LineError(3, topics.status().message());

  std::vector<LabelledPair> pairs;
  int dropped = 0;
  for (size_t n = 3; n < lines.size(); ++n) {
    const int line_no = static_cast<int>(n) + 1;
    absl::string_view line = lines[n];
    if (line.empty()) continue;
    std::vector<absl::string_view> cols = absl::StrSplit(line, '\t');
    if (cols.size() != 3) {
      return LineError(line_no, "expected 3 tab-separated columns");
    }
    LabelledPair lp;
    for (absl::string_view l : absl::StrSplit(cols[0], ',')) {
      std::optional<TopicId> c = topics->Find(l);
      if (!c) return LineError(line_no, absl::StrCat("unknown topic '", l, "'"));
      lp.labels.push_back(*c);
    }
    std::sort(lp.labels.begin(), lp.labels.end());
    lp.labels.erase(std::unique(lp.labels.begin(), lp.labels.end()),
                    lp.labels.end());
    for (absl::string_view f : absl::StrSplit(cols[1], ' ', absl::SkipEmpty())) {
      if (auto i = dx->IndexOf(f)) {
        lp.pair.input.push_back(*i);
      } else {
        ++dropped;
      }
    }
    for (absl::string_view f : absl::StrSplit(cols[2], ' ', absl::SkipEmpty())) {
      if (auto j = dy->IndexOf(f)) {
        lp.pair.output.push_back(*j);
      } else {
        ++dropped;
      }
    }
    if (lp.pair.input.empty() || lp.pair.output.empty()) {
      return LineError(line_no, "input and output need at least one known feature");
    }
    pairs.push_back(std::move(lp));
  }
  return Corpus{*std::move(dx), *std::move(dy), *std::move(topics),
                std::move(pairs), dropped};
}

absl::StatusOr<Corpus> LoadCorpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseCorpus(buffer.str());
}

std::string FormatCorpus(const Corpus& corpus) {
  std::string out;
  absl::StrAppend(&out, "#dictionary_x\t",
                  absl::StrJoin(corpus.input_dictionary.features(), ","), "\n");
  absl::StrAppend(&out, "#dictionary_y\t",
                  absl::StrJoin(corpus.output_dictionary.features(), ","), "\n");
  absl::StrAppend(&out, "#topics\t", absl::StrJoin(corpus.topics.labels(), ","),
                  "\n");
  for (const LabelledPair& lp : corpus.pairs) {
    absl::StrAppend(
        &out,
        absl::StrJoin(lp.labels, ",",
                      [&](std::string* o, TopicId c) {
                        o->append(corpus.topics.label(c));
                      }),
        "\t",
        absl::StrJoin(lp.pair.input, " ",
                      [&](std::string* o, int i) {
                        o->append(corpus.input_dictionary.feature(i));
                      }),
        "\t",
        absl::StrJoin(lp.pair.output, " ",
                      [&](std::string* o, int j) {
                        o->append(corpus.output_dictionary.feature(j));
                      }),
        "\n");
  }
  return out;
}

absl::Status SaveCorpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path));
  out << FormatCorpus(corpus);
  if (!out) return absl::DataLossError(absl::StrCat("short write to ", path));
  return absl::OkStatus();
}

LabellingRule DeriveLabellingRule(const Corpus& corpus) {
  const int num_topics = corpus.topics.size();
  const int nx = corpus.input_dictionary.size();
  const int ny = corpus.output_dictionary.size();
  // For each keyword: how many pairs contain it, and how many of those carry
  // each label.
  std::vector<int> x_total(nx, 0), y_total(ny, 0);
  std::vector<std::vector<int>> x_by_topic(num_topics, std::vector<int>(nx, 0));
  std::vector<std::vector<int>> y_by_topic(num_topics, std::vector<int>(ny, 0));
  for (const LabelledPair& lp : corpus.pairs) {
    absl::flat_hash_set<int> in(lp.pair.input.begin(), lp.pair.input.end());
    absl::flat_hash_set<int> out(lp.pair.output.begin(), lp.pair.output.end());
    for (int i : in) {
      ++x_total[i];
      for (TopicId c : lp.labels) ++x_by_topic[c][i];
    }
    for (int j : out) {
      ++y_total[j];
      for (TopicId c : lp.labels) ++y_by_topic[c][j];
    }
  }
  LabellingRule rule(num_topics, nx, ny);
  for (TopicId c = 1; c < num_topics; ++c) {
    for (int i = 0; i < nx; ++i) {
      if (x_total[i] > 0 && x_by_topic[c][i] == x_total[i]) {
        rule.AddRevealingInput(c, i).IgnoreError();
      }
    }
    for (int j = 0; j < ny; ++j) {
      if (y_total[j] > 0 && y_by_topic[c][j] == y_total[j]) {
        rule.AddRevealingOutput(c, j).IgnoreError();
      }
    }
  }
  return rule;
}

}  // namespace groupid
