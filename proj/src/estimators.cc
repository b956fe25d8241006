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

#include "groupid/estimators.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace groupid {

CoOccurrenceCounts::CoOccurrenceCounts(int num_topics, int input_size,
                                       int output_size)
    : num_topics_(num_topics),
      input_size_(input_size),
      output_size_(output_size),
      topics_(num_topics),
      raw_topic_totals_(num_topics, 0.0),
      presence_totals_(num_topics, 0) {}

absl::StatusOr<CoOccurrenceCounts> CoOccurrenceCounts::Create(int num_topics,
                                                              int input_size,
                                                              int output_size) {
  if (num_topics < 1 || input_size < 1 || output_size < 1) {
    return absl::InvalidArgumentError(
        "counts need at least one topic and non-empty dictionaries");
  }
  if (static_cast<int64_t>(input_size) * output_size > (int64_t{1} << 31)) {
    return absl::InvalidArgumentError("dictionary grid too large");
  }
  return CoOccurrenceCounts(num_topics, input_size, output_size);
}

absl::Status CoOccurrenceCounts::Add(const InputOutputPair& pair,
                                     absl::Span<const TopicId> labels) {
  if (labels.empty()) {
    return absl::InvalidArgumentError("pair has no labels");
  }
  for (size_t k = 0; k < labels.size(); ++k) {
    const TopicId c = labels[k];
    if (c < 0 || c >= num_topics_) {
      return absl::OutOfRangeError(absl::StrCat("unknown topic ", c));
    }
    for (size_t m = 0; m < k; ++m) {
      if (labels[m] == c) {
        return absl::InvalidArgumentError(
            absl::StrCat("topic ", c, " listed twice"));
      }
    }
  }
  // Count vectors of the input and output sides.
  absl::flat_hash_map<int, int> xs, ys;
  for (int i : pair.input) {
    if (i < 0 || i >= input_size_) {
      return absl::OutOfRangeError(absl::StrCat("input feature ", i, " unknown"));
    }
    ++xs[i];
  }
  for (int j : pair.output) {
    if (j < 0 || j >= output_size_) {
      return absl::OutOfRangeError(absl::StrCat("output feature ", j, " unknown"));
    }
    ++ys[j];
  }
  const double mass = static_cast<double>(pair.input.size()) *
                      static_cast<double>(pair.output.size());
  const int64_t cells_present = static_cast<int64_t>(xs.size() * ys.size());
  for (const auto& [i, nx] : xs) {
    for (const auto& [j, ny] : ys) {
      const uint32_t key = Key(i, j);
      const double product = static_cast<double>(nx) * ny;
      for (TopicId c : labels) {
        Entry& e = topics_[c][key];
        e.count += product;
        e.presence += 1;
        Entry& joint = joint_[key];
        joint.count += product;
        joint.presence += 1;
      }
    }
  }
  for (TopicId c : labels) {
    raw_topic_totals_[c] += mass;
    raw_total_ += mass;
    presence_totals_[c] += cells_present;
    presence_total_ += cells_present;
  }
  ++num_pairs_;
  return absl::OkStatus();
}

double CoOccurrenceCounts::count(TopicId c, int i, int j) const {
  auto it = topics_[c].find(Key(i, j));
  return (it == topics_[c].end() ? 0.0 : it->second.count) + smoothing_;
}

int64_t CoOccurrenceCounts::presence(TopicId c, int i, int j) const {
  auto it = topics_[c].find(Key(i, j));
  return it == topics_[c].end() ? 0 : it->second.presence;
}

double CoOccurrenceCounts::joint_count(int i, int j) const {
  auto it = joint_.find(Key(i, j));
  return (it == joint_.end() ? 0.0 : it->second.count) +
         smoothing_ * num_topics_;
}

int64_t CoOccurrenceCounts::joint_presence(int i, int j) const {
  auto it = joint_.find(Key(i, j));
  return it == joint_.end() ? 0 : it->second.presence;
}

double CoOccurrenceCounts::topic_total(TopicId c) const {
  return raw_topic_totals_[c] + smoothing_ * cells();
}

double CoOccurrenceCounts::total() const {
  return raw_total_ + smoothing_ * cells() * num_topics_;
}

std::vector<KeywordCell> CoOccurrenceCounts::ObservedCells() const {
  std::vector<uint32_t> keys;
  keys.reserve(joint_.size());
  for (const auto& [key, entry] : joint_) {
    if (entry.presence > 0) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  std::vector<KeywordCell> out;
  out.reserve(keys.size());
  for (uint32_t key : keys) {
    out.push_back({static_cast<int>(key / output_size_),
                   static_cast<int>(key % output_size_)});
  }
  return out;
}

Eigen::MatrixXd CoOccurrenceCounts::CountMatrix(TopicId c) const {
  Eigen::MatrixXd m =
      Eigen::MatrixXd::Constant(input_size_, output_size_, smoothing_);
  for (const auto& [key, entry] : topics_[c]) {
    m(key / output_size_, key % output_size_) += entry.count;
  }
  return m;
}

Eigen::MatrixXd CoOccurrenceCounts::PresenceMatrix(TopicId c) const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(input_size_, output_size_);
  for (const auto& [key, entry] : topics_[c]) {
    m(key / output_size_, key % output_size_) =
        static_cast<double>(entry.presence);
  }
  return m;
}

Eigen::MatrixXd CoOccurrenceCounts::JointCountMatrix() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(input_size_, output_size_,
                                                smoothing_ * num_topics_);
  for (const auto& [key, entry] : joint_) {
    m(key / output_size_, key % output_size_) += entry.count;
  }
  return m;
}

absl::StatusOr<CoOccurrenceCounts> BuildCounts(const SessionSequence& sequence,
                                               const LabellingRule& rule) {
  if (sequence.empty()) {
    return absl::FailedPreconditionError(
        "cannot build statistics from an empty sequence");
  }
  absl::StatusOr<CoOccurrenceCounts> counts = CoOccurrenceCounts::Create(
      rule.num_topics(), rule.input_size(), rule.output_size());
  if (!counts.ok()) return counts.status();
  for (const InputOutputPair& pair : sequence.pairs()) {
    std::vector<TopicId> labels = rule.Label(pair);
    if (absl::Status s = counts->Add(pair, labels); !s.ok()) return s;
  }
  return counts;
}

absl::StatusOr<CoOccurrenceCounts> BuildCounts(
    absl::Span<const LabelledPair> pairs, int num_topics, int input_size,
    int output_size) {
  if (pairs.empty()) {
    return absl::FailedPreconditionError(
        "cannot build statistics from an empty sequence");
  }
  absl::StatusOr<CoOccurrenceCounts> counts =
      CoOccurrenceCounts::Create(num_topics, input_size, output_size);
  if (!counts.ok()) return counts.status();
  for (const LabelledPair& lp : pairs) {
    if (absl::Status s = counts->Add(lp.pair, lp.labels); !s.ok()) return s;
  }
  return counts;
}

absl::StatusOr<CoOccurrenceCounts> LaplaceSmooth(CoOccurrenceCounts counts,
                                                 double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    return absl::InvalidArgumentError("smoothing factor must be > 0");
  }
  if (counts.smoothed_) {
    return absl::FailedPreconditionError("counts are already smoothed");
  }
  counts.smoothed_ = true;
  counts.smoothing_ = lambda;
  return counts;
}

absl::StatusOr<Eigen::MatrixXd> PairGivenTopic(const CoOccurrenceCounts& counts,
                                               TopicId c) {
  if (c < 0 || c >= counts.num_topics()) {
    return absl::OutOfRangeError(absl::StrCat("unknown topic ", c));
  }
  const double total = counts.topic_total(c);
  if (!(total > 0.0)) {
    return absl::FailedPreconditionError(
        absl::StrCat("topic ", c, " has no mass; smooth the counts first"));
  }
  return Eigen::MatrixXd(counts.CountMatrix(c) / total);
}

absl::StatusOr<Eigen::MatrixXd> PairGivenSequence(
    const CoOccurrenceCounts& counts) {
  const double total = counts.total();
  if (!(total > 0.0)) {
    return absl::FailedPreconditionError(
        "sequence has no mass; smooth the counts first");
  }
  return Eigen::MatrixXd(counts.JointCountMatrix() / total);
}

absl::StatusOr<std::vector<double>> TopicPrior(const CoOccurrenceCounts& counts) {
  const double total = counts.total();
  if (!(total > 0.0)) {
    return absl::FailedPreconditionError(
        "sequence has no mass; smooth the counts first");
  }
  std::vector<double> prior(counts.num_topics());
  for (TopicId c = 0; c < counts.num_topics(); ++c) {
    prior[c] = counts.topic_total(c) / total;
  }
  return prior;
}

absl::string_view ConditionalModeName(ConditionalMode mode) {
  switch (mode) {
    case ConditionalMode::kAsWritten:
      return "as_written";
    case ConditionalMode::kBayesRenormalized:
      return "bayes";
  }
  return "unknown";
}

absl::StatusOr<ConditionalMode> ParseConditionalMode(absl::string_view name) {
  if (name == "as_written") return ConditionalMode::kAsWritten;
  if (name == "bayes") return ConditionalMode::kBayesRenormalized;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown estimator mode '", name,
                   "' (expected as_written or bayes)"));
}

double TopicGivenPairAt(const CoOccurrenceCounts& counts, TopicId c,
                        KeywordCell cell, ConditionalMode mode) {
  const int64_t o = counts.presence(c, cell.input, cell.output);
  if (o == 0) return 0.0;
  switch (mode) {
    case ConditionalMode::kAsWritten:
      return static_cast<double>(o) /
             static_cast<double>(counts.presence_total(c));
    case ConditionalMode::kBayesRenormalized:
      return static_cast<double>(o) /
             static_cast<double>(counts.joint_presence(cell.input, cell.output));
  }
  return 0.0;
}

TopicConditionalTable TopicGivenPair(const CoOccurrenceCounts& counts,
                                     ConditionalMode mode) {
  TopicConditionalTable table;
  table.mode = mode;
  table.per_topic.reserve(counts.num_topics());
  for (TopicId c = 0; c < counts.num_topics(); ++c) {
    table.per_topic.push_back(
        Eigen::MatrixXd::Zero(counts.input_size(), counts.output_size()));
  }
  for (const KeywordCell& cell : counts.ObservedCells()) {
    for (TopicId c = 0; c < counts.num_topics(); ++c) {
      table.per_topic[c](cell.input, cell.output) =
          TopicGivenPairAt(counts, c, cell, mode);
    }
  }
  return table;
}

absl::StatusOr<double> MixtureProbability(const Eigen::MatrixXd& membership,
                                          const Eigen::MatrixXd& conditioning) {
  if (membership.rows() != conditioning.rows() ||
      membership.cols() != conditioning.cols()) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "shape mismatch: membership %dx%d vs distribution %dx%d",
        membership.rows(), membership.cols(), conditioning.rows(),
        conditioning.cols()));
  }
  return std::clamp(membership.cwiseProduct(conditioning).sum(), 0.0, 1.0);
}

absl::StatusOr<PublishedDistribution> PublishedDistribution::Create(
    Eigen::MatrixXd values, int proxy_id, int64_t step) {
  if (values.size() == 0) {
    return absl::InvalidArgumentError("published distribution is empty");
  }
  if ((values.array() < 0.0).any() || !values.allFinite()) {
    return absl::InvalidArgumentError(
        "published distribution has negative or non-finite entries");
  }
  const double mass = values.sum();
  if (std::abs(mass - 1.0) > kDistributionTolerance) {
    return absl::InvalidArgumentError(
        absl::StrFormat("published distribution sums to %.15g", mass));
  }
  return PublishedDistribution(
      std::make_shared<const Eigen::MatrixXd>(std::move(values)), 1.0,
      proxy_id, step);
}

absl::StatusOr<PublishedDistribution> PublishedDistribution::FromCounts(
    const CoOccurrenceCounts& counts, int proxy_id, int64_t step) {
  const double total = counts.total();
  if (!(total > 0.0)) {
    return absl::FailedPreconditionError(
        "sequence has no mass; smooth the counts first");
  }
  return PublishedDistribution(
      std::make_shared<const Eigen::MatrixXd>(counts.JointCountMatrix()), total,
      proxy_id, step);
}

absl::StatusOr<PublishedDistribution> PublishedDistribution::FromMass(
    std::shared_ptr<const Eigen::MatrixXd> mass, double total, int proxy_id,
    int64_t step) {
  if (mass == nullptr || mass->size() == 0 || !(total > 0.0)) {
    return absl::InvalidArgumentError("published mass is empty");
  }
  return PublishedDistribution(std::move(mass), total, proxy_id, step);
}

std::string FormatDistributionCsv(const Eigen::MatrixXd& distribution) {
  std::string out;
  for (Eigen::Index i = 0; i < distribution.rows(); ++i) {
    for (Eigen::Index j = 0; j < distribution.cols(); ++j) {
      if (j > 0) out.push_back(',');
      absl::StrAppendFormat(&out, "%.12g", distribution(i, j));
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace groupid
