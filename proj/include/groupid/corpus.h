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

#ifndef GROUPID_CORPUS_H_
#define GROUPID_CORPUS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/container/flat_hash_map.h"
#include "absl/container/flat_hash_set.h"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "absl/types/span.h"

namespace groupid {

// Topic labels are dense indices into a TopicSet. Index 0 is the catch-all,
// non-sensitive category; every other index is a sensitive topic.
using TopicId = int;
inline constexpr TopicId kCatchAllTopic = 0;

enum class DictionaryKind { kInput, kOutput };

// An ordered list of unique keyword features.
class Dictionary {
 public:
  static absl::StatusOr<Dictionary> Create(std::vector<std::string> features,
                                           DictionaryKind kind);

  int size() const { return static_cast<int>(features_.size()); }
  DictionaryKind kind() const { return kind_; }
  const std::string& feature(int index) const { return features_[index]; }
  const std::vector<std::string>& features() const { return features_; }
  std::optional<int> IndexOf(absl::string_view feature) const;

  friend bool operator==(const Dictionary& a, const Dictionary& b) {
    return a.kind_ == b.kind_ && a.features_ == b.features_;
  }

 private:
  Dictionary(std::vector<std::string> features, DictionaryKind kind);

  std::vector<std::string> features_;
  absl::flat_hash_map<std::string, int> index_;
  DictionaryKind kind_;
};

// Topic labels c_0..c_K. Label 0 is always the catch-all.
class TopicSet {
 public:
  static absl::StatusOr<TopicSet> Create(std::vector<std::string> labels);
  // c0, c1, ..., c{num_sensitive}.
  static TopicSet WithSensitiveTopics(int num_sensitive);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& label(TopicId c) const { return labels_[c]; }
  const std::vector<std::string>& labels() const { return labels_; }
  bool is_sensitive(TopicId c) const { return c != kCatchAllTopic; }
  std::optional<TopicId> Find(absl::string_view label) const;
  std::vector<TopicId> SensitiveTopics() const;

  friend bool operator==(const TopicSet& a, const TopicSet& b) {
    return a.labels_ == b.labels_;
  }

 private:
  explicit TopicSet(std::vector<std::string> labels)
      : labels_(std::move(labels)) {}

  std::vector<std::string> labels_;
};

// One input-output interaction. Features are indices into the input and
// output dictionaries; both sides are multisets.
struct InputOutputPair {
  std::vector<int> input;
  std::vector<int> output;
  std::optional<int> origin_user;
  std::optional<int> via_proxy;
  // Interaction sequence number. Background knowledge carries 0.
  int64_t step = 0;

  friend bool operator==(const InputOutputPair&,
                         const InputOutputPair&) = default;
};

// A corpus entry together with its ground-truth topic labels.
struct LabelledPair {
  InputOutputPair pair;
  std::vector<TopicId> labels;

  friend bool operator==(const LabelledPair&, const LabelledPair&) = default;
};

// Ordered session of interactions: a background-knowledge prefix followed by
// interactions with strictly increasing step indices.
class SessionSequence {
 public:
  // Background pairs may only be added before the first interaction.
  absl::Status AppendBackground(InputOutputPair pair);
  absl::Status Append(InputOutputPair pair);

  absl::Span<const InputOutputPair> pairs() const { return pairs_; }
  const InputOutputPair& operator[](size_t i) const { return pairs_[i]; }
  size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  size_t background_size() const { return background_size_; }

 private:
  std::vector<InputOutputPair> pairs_;
  size_t background_size_ = 0;
};

// A cell of the |D_X| x |D_Y| keyword-pair grid.
struct KeywordCell {
  int input = 0;
  int output = 0;

  friend auto operator<=>(const KeywordCell&, const KeywordCell&) = default;
};

// Private labelling function expressed as keyword-pair rules: a pair is
// labelled c when some (input, output) cell registered for c co-occurs in it.
// Pairs matching no sensitive rule are labelled c_0.
class LabellingRule {
 public:
  LabellingRule(int num_topics, int input_size, int output_size);

  int num_topics() const { return num_topics_; }
  int input_size() const { return input_size_; }
  int output_size() const { return output_size_; }

  absl::Status AddRevealingCell(TopicId topic, KeywordCell cell);
  // Registers every cell in the row of `input` (or column of `output`).
  absl::Status AddRevealingInput(TopicId topic, int input);
  absl::Status AddRevealingOutput(TopicId topic, int output);

  bool Matches(TopicId topic, KeywordCell cell) const;

  // Sorted, non-empty label set.
  std::vector<TopicId> Label(const InputOutputPair& pair) const;

 private:
  uint32_t Key(KeywordCell cell) const {
    return static_cast<uint32_t>(cell.input) * output_size_ + cell.output;
  }

  int num_topics_;
  int input_size_;
  int output_size_;
  std::vector<absl::flat_hash_set<uint32_t>> cells_;
  std::vector<absl::flat_hash_set<int>> inputs_;
  std::vector<absl::flat_hash_set<int>> outputs_;
};

std::vector<TopicId> LabelPair(const LabellingRule& rule,
                               const InputOutputPair& pair);

// Lowercases and splits on runs of non-alphanumeric characters.
std::vector<std::string> Tokenize(absl::string_view text);

struct CountVector {
  std::vector<int> counts;
  // Tokens not present in the dictionary.
  int dropped = 0;
};

CountVector CountVectorize(absl::Span<const std::string> tokens,
                           const Dictionary& dictionary);
CountVector CountVectorize(absl::string_view text,
                           const Dictionary& dictionary);

struct Corpus {
  Dictionary input_dictionary;
  Dictionary output_dictionary;
  TopicSet topics;
  std::vector<LabelledPair> pairs;
  // Out-of-dictionary tokens seen while ingesting.
  int dropped_tokens = 0;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.input_dictionary == b.input_dictionary &&
           a.output_dictionary == b.output_dictionary &&
           a.topics == b.topics && a.pairs == b.pairs;
  }
};

// Parameters for the synthetic corpus generator. Each sensitive topic owns a
// block of input and output keywords; the remaining keywords are shared by
// every topic and drawn from a Zipf profile.
struct SyntheticCorpusSpec {
  int input_dictionary_size = 250;
  int output_dictionary_size = 500;
  int num_sensitive_topics = 5;
  // Labelled pairs generated per topic, c_0 included.
  int pairs_per_topic = 400;
  // Size of each topic's keyword block; 0 picks a default from the
  // dictionary size.
  int topic_inputs_per_topic = 0;
  int topic_outputs_per_topic = 0;
  int input_length = 4;
  int output_length = 10;
  // Probability that the first input slot, and independently the first output
  // slot, of a sensitive pair holds a topic-block keyword.
  double anchor_probability = 0.5;
  // Weight of topic-block keywords vs shared keywords for output slots after
  // the first. The shared weight is 1 - revealing_output_weight.
  double revealing_output_weight = 0.15;
  double shared_zipf_exponent = 1.5;
  // Weight multiplier a topic applies to the shared input keywords it is
  // affiliated with; 1 makes shared inputs carry no topic signal.
  double shared_input_affinity = 2.0;
  uint64_t seed = 1;
};

absl::StatusOr<Corpus> GenerateCorpus(const SyntheticCorpusSpec& spec);

// Tab-separated corpus format:
//   #dictionary_x<TAB>f1,f2,...
//   #dictionary_y<TAB>g1,g2,...
//   #topics<TAB>c0,c1,...
//   labels(comma-sep)<TAB>input features(space-sep)<TAB>output features
absl::StatusOr<Corpus> ParseCorpus(absl::string_view contents);
absl::StatusOr<Corpus> LoadCorpus(const std::string& path);
std::string FormatCorpus(const Corpus& corpus);
absl::Status SaveCorpus(const Corpus& corpus, const std::string& path);

// Builds keyword-pair rules from ground-truth labels: a keyword is revealing
// for sensitive topic c when every corpus pair containing it is labelled c.
// All cells in that keyword's row (input) or column (output) join c's rule.
LabellingRule DeriveLabellingRule(const Corpus& corpus);

}  // namespace groupid

#endif  // GROUPID_CORPUS_H_
