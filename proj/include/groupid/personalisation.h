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

#ifndef GROUPID_PERSONALISATION_H_
#define GROUPID_PERSONALISATION_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "groupid/corpus.h"
#include "groupid/estimators.h"
#include "groupid/privacy.h"

namespace groupid {

enum class DistributionSource { kUserDirect, kViaProxy };

struct TopicDistribution {
  std::vector<double> probabilities;
  DistributionSource source = DistributionSource::kUserDirect;
  std::optional<int> proxy_id;
  int64_t step = 0;
};

// Running label tally; a pair with n labels adds 1/n to each.
class TopicTally {
 public:
  explicit TopicTally(int num_topics)
      : weights_(num_topics, 0.0), label_counts_(num_topics, 0) {}

  void Add(absl::Span<const TopicId> labels);
  int64_t size() const { return size_; }
  // Fails on an empty tally.
  absl::StatusOr<TopicDistribution> Distribution() const;
  // Fraction of pairs carrying label c (multi-label pairs count fully).
  double LabelFraction(TopicId c) const;
  int64_t label_count(TopicId c) const { return label_counts_[c]; }

 private:
  std::vector<double> weights_;
  std::vector<int64_t> label_counts_;
  int64_t size_ = 0;
};

absl::StatusOr<TopicDistribution> ComputeTopicDistribution(
    const SessionSequence& sequence, const LabellingRule& rule);

// Total variation distance.
absl::StatusOr<double> UtilityLoss(const TopicDistribution& user,
                                   const TopicDistribution& proxy);

// The user's private half of the selection objective: for each topic c and
// each cell the user has observed, a = P(topic c | cell) and
// b = P(cell | user sequence). Cells the user never observed have a = 0 and
// drop out of the sum.
struct ObjectiveTerms {
  struct Cell {
    KeywordCell cell;
    double b = 0.0;
    // One entry per topic.
    std::vector<double> a;
  };
  int num_topics = 0;
  int input_size = 0;
  int output_size = 0;
  std::vector<Cell> cells;
};

// `counts` must be smoothed (or have mass).
absl::StatusOr<ObjectiveTerms> BuildObjectiveTerms(
    const CoOccurrenceCounts& counts, ConditionalMode mode);

struct ProxyScore {
  int proxy_id = 0;
  double objective = 0.0;
  std::vector<double> per_topic;
  bool feasible = true;
  // Published deniability for each constrained topic, in the order given.
  std::vector<double> deniability;
};

// sum_c | sum_ij a_c(ij) (b(ij) - published(ij)) |.
absl::StatusOr<ProxyScore> ProxyObjective(const ObjectiveTerms& terms,
                                          const PublishedDistribution& published);
absl::StatusOr<ProxyScore> ProxyObjective(const CoOccurrenceCounts& counts,
                                          ConditionalMode mode,
                                          const PublishedDistribution& published);

struct SelectionResult {
  std::optional<int> chosen;
  // One per pool entry, in pool order.
  std::vector<ProxyScore> scores;
};

// Exhaustive search over the pool. A proxy is feasible when its published
// deniability is <= delta for every topic in `constrained_topics`; `thetas`
// holds one set per sensitive topic. Ties go to the lowest proxy id.
absl::StatusOr<SelectionResult> SelectProxy(
    const ObjectiveTerms& terms,
    absl::Span<const PublishedDistribution* const> pool,
    absl::Span<const SensitiveKeywordSet> thetas,
    absl::Span<const TopicId> constrained_topics, double delta);

}  // namespace groupid

#endif  // GROUPID_PERSONALISATION_H_
