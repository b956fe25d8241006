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

#include "groupid/personalisation.h"

#include <cmath>

#include "absl/strings/str_cat.h"

namespace groupid {

void TopicTally::Add(absl::Span<const TopicId> labels) {
  if (labels.empty()) return;
  const double w = 1.0 / static_cast<double>(labels.size());
  for (TopicId c : labels) {
    weights_[c] += w;
    ++label_counts_[c];
  }
  ++size_;
}

absl::StatusOr<TopicDistribution> TopicTally::Distribution() const {
  if (size_ == 0) {
    return absl::FailedPreconditionError("topic distribution of empty sequence");
  }
  TopicDistribution out;
  out.probabilities.resize(weights_.size());
  for (size_t c = 0; c < weights_.size(); ++c) {
    out.probabilities[c] = weights_[c] / static_cast<double>(size_);
  }
  return out;
}

double TopicTally::LabelFraction(TopicId c) const {
  if (size_ == 0) return 0.0;
  return static_cast<double>(label_counts_[c]) / static_cast<double>(size_);
}

absl::StatusOr<TopicDistribution> ComputeTopicDistribution(
    const SessionSequence& sequence, const LabellingRule& rule) {
  TopicTally tally(rule.num_topics());
  for (const InputOutputPair& pair : sequence.pairs()) {
    tally.Add(rule.Label(pair));
  }
  return tally.Distribution();
}

absl::StatusOr<double> UtilityLoss(const TopicDistribution& user,
                                   const TopicDistribution& proxy) {
  if (user.probabilities.size() != proxy.probabilities.size()) {
    return absl::InvalidArgumentError("topic distributions differ in size");
  }
  double sum = 0.0;
  for (size_t c = 0; c < user.probabilities.size(); ++c) {
    sum += std::abs(user.probabilities[c] - proxy.probabilities[c]);
  }
  return 0.5 * sum;
}

absl::StatusOr<ObjectiveTerms> BuildObjectiveTerms(
    const CoOccurrenceCounts& counts, ConditionalMode mode) {
  const double total = counts.total();
  if (!(total > 0.0)) {
    return absl::FailedPreconditionError("user counts have no mass");
  }
  ObjectiveTerms terms;
  terms.num_topics = counts.num_topics();
  terms.input_size = counts.input_size();
  terms.output_size = counts.output_size();
  for (const KeywordCell& cell : counts.ObservedCells()) {
    ObjectiveTerms::Cell entry;
    entry.cell = cell;
    entry.b = counts.joint_count(cell.input, cell.output) / total;
    entry.a.resize(counts.num_topics());
    for (TopicId c = 0; c < counts.num_topics(); ++c) {
      entry.a[c] = TopicGivenPairAt(counts, c, cell, mode);
    }
    terms.cells.push_back(std::move(entry));
  }
  return terms;
}

absl::StatusOr<ProxyScore> ProxyObjective(
    const ObjectiveTerms& terms, const PublishedDistribution& published) {
  if (published.rows() != terms.input_size ||
      published.cols() != terms.output_size) {
    return absl::InvalidArgumentError(absl::StrCat(
        "published distribution is ", published.rows(), "x", published.cols(),
        ", user terms are ", terms.input_size, "x", terms.output_size));
  }
  ProxyScore score;
  score.proxy_id = published.proxy_id();
  score.per_topic.assign(terms.num_topics, 0.0);
  for (const ObjectiveTerms::Cell& cell : terms.cells) {
    const double diff = cell.b - published.at(cell.cell);
    for (int c = 0; c < terms.num_topics; ++c) {
      score.per_topic[c] += cell.a[c] * diff;
    }
  }
  for (double& v : score.per_topic) {
    v = std::abs(v);
    score.objective += v;
  }
  return score;
}

absl::StatusOr<ProxyScore> ProxyObjective(
    const CoOccurrenceCounts& counts, ConditionalMode mode,
    const PublishedDistribution& published) {
  absl::StatusOr<ObjectiveTerms> terms = BuildObjectiveTerms(counts, mode);
  if (!terms.ok()) return terms.status();
  return ProxyObjective(*terms, published);
}

absl::StatusOr<SelectionResult> SelectProxy(
    const ObjectiveTerms& terms,
    absl::Span<const PublishedDistribution* const> pool,
    absl::Span<const SensitiveKeywordSet> thetas,
    absl::Span<const TopicId> constrained_topics, double delta) {
  if (pool.empty()) {
    return absl::InvalidArgumentError("proxy pool is empty");
  }
  SelectionResult result;
  const ProxyScore* best = nullptr;
  for (const PublishedDistribution* published : pool) {
    absl::StatusOr<ProxyScore> score = ProxyObjective(terms, *published);
    if (!score.ok()) return score.status();
    for (TopicId c : constrained_topics) {
      absl::StatusOr<DeniabilityEstimate> est =
          DeniabilityPublished(thetas, *published, c);
      if (!est.ok()) return est.status();
      score->deniability.push_back(est->value);
      if (!DeniabilityCheck(*est, delta)) score->feasible = false;
    }
    result.scores.push_back(*std::move(score));
  }
  for (const ProxyScore& s : result.scores) {
    if (!s.feasible) continue;
    if (best == nullptr || s.objective < best->objective ||
        (s.objective == best->objective && s.proxy_id < best->proxy_id)) {
      best = &s;
    }
  }
  if (best != nullptr) result.chosen = best->proxy_id;
  return result;
}

}  // namespace groupid
