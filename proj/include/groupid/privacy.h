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

#ifndef GROUPID_PRIVACY_H_
#define GROUPID_PRIVACY_H_

#include <cstdint>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "groupid/corpus.h"
#include "groupid/estimators.h"

namespace groupid {

// Theta(alpha): keyword pairs whose topic conditional strictly exceeds alpha.
struct SensitiveKeywordSet {
  TopicId topic = kCatchAllTopic;
  double alpha = 0.5;
  // Sorted row-major.
  std::vector<KeywordCell> cells;

  bool Contains(KeywordCell cell) const;
};

absl::StatusOr<SensitiveKeywordSet> BuildSensitiveSet(
    const TopicConditionalTable& table, TopicId c, double alpha);

// One set per sensitive topic of the table, in topic order.
absl::StatusOr<std::vector<SensitiveKeywordSet>> BuildSensitiveSets(
    const TopicConditionalTable& table, double alpha);

enum class ObserverKind { kGlobal, kProxy };
enum class EstimatorKind { kDirect, kPublished };

struct DeniabilityEstimate {
  TopicId topic = kCatchAllTopic;
  double value = 0.0;
  ObserverKind observer = ObserverKind::kGlobal;
  // Proxies visible to a proxy observer.
  std::vector<int> proxies;
  EstimatorKind estimator = EstimatorKind::kDirect;
  // Only meaningful for published estimates.
  double alpha = 0.0;
  int64_t step = 0;
  // Published estimate whose denominator was zero.
  bool no_sensitive_mass = false;
};

// Fraction of the observed pairs that the rule labels c.
absl::StatusOr<DeniabilityEstimate> DeniabilityDirect(
    const SessionSequence& observed, const LabellingRule& rule, TopicId c);

// Span version used when the observer view is spread over several logs.
absl::StatusOr<DeniabilityEstimate> DeniabilityDirect(
    absl::Span<const SessionSequence* const> observed, const LabellingRule& rule,
    TopicId c);

// Mass of Theta_c under the published distribution over the mass of the
// union of all topics' sets (each set counted once per topic).
// `thetas` must hold one set per sensitive topic.
absl::StatusOr<DeniabilityEstimate> DeniabilityPublished(
    absl::Span<const SensitiveKeywordSet> thetas,
    const PublishedDistribution& published, TopicId c);

// value <= delta.
bool DeniabilityCheck(const DeniabilityEstimate& estimate, double delta);
bool DeniabilityCheck(double value, double delta);

// delta * pi for an observer that sees a fraction pi of the sequence.
absl::StatusOr<double> LocalityAdjustedBound(double delta, double coverage);

// Smallest gamma with which delta-deniable labelling is
// (epsilon, gamma)-differentially private: max{delta, 1 - e^eps (1 - delta)}.
absl::StatusOr<double> DpGammaBound(double delta, double epsilon);

// Probability of avoiding re-identification, 1 - delta.
absl::StatusOr<double> ReidentificationBound(double delta);

}  // namespace groupid

#endif  // GROUPID_PRIVACY_H_
