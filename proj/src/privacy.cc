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

#include "groupid/privacy.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_cat.h"

namespace groupid {
namespace {

bool InUnitInterval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

bool SensitiveKeywordSet::Contains(KeywordCell cell) const {
  return std::binary_search(cells.begin(), cells.end(), cell);
}

absl::StatusOr<SensitiveKeywordSet> BuildSensitiveSet(
    const TopicConditionalTable& table, TopicId c, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("alpha must lie in (0, 1], got ", alpha));
  }
  if (c < 0 || c >= static_cast<int>(table.per_topic.size())) {
    return absl::OutOfRangeError(absl::StrCat("unknown topic ", c));
  }
  SensitiveKeywordSet set;
  set.topic = c;
  set.alpha = alpha;
  const Eigen::MatrixXd& m = table.per_topic[c];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) > alpha) {
        set.cells.push_back({static_cast<int>(i), static_cast<int>(j)});
      }
    }
  }
  return set;
}

absl::StatusOr<std::vector<SensitiveKeywordSet>> BuildSensitiveSets(
    const TopicConditionalTable& table, double alpha) {
  std::vector<SensitiveKeywordSet> out;
  for (TopicId c = 1; c < static_cast<int>(table.per_topic.size()); ++c) {
    absl::StatusOr<SensitiveKeywordSet> set = BuildSensitiveSet(table, c, alpha);
    if (!set.ok()) return set.status();
    out.push_back(*std::move(set));
  }
  return out;
}

absl::StatusOr<DeniabilityEstimate> DeniabilityDirect(
    const SessionSequence& observed, const LabellingRule& rule, TopicId c) {
  const SessionSequence* views[] = {&observed};
  return DeniabilityDirect(views, rule, c);
}

absl::StatusOr<DeniabilityEstimate> DeniabilityDirect(
    absl::Span<const SessionSequence* const> observed, const LabellingRule& rule,
    TopicId c) {
  if (c < 0 || c >= rule.num_topics()) {
    return absl::OutOfRangeError(absl::StrCat("unknown topic ", c));
  }
  int64_t total = 0;
  int64_t hits = 0;
  for (const SessionSequence* seq : observed) {
    for (const InputOutputPair& pair : seq->pairs()) {
      ++total;
      std::vector<TopicId> labels = rule.Label(pair);
      if (std::find(labels.begin(), labels.end(), c) != labels.end()) ++hits;
    }
  }
  if (total == 0) {
    return absl::FailedPreconditionError("observer sequence is empty");
  }
  DeniabilityEstimate est;
  est.topic = c;
  est.value = static_cast<double>(hits) / static_cast<double>(total);
  est.estimator = EstimatorKind::kDirect;
  return est;
}

absl::StatusOr<DeniabilityEstimate> DeniabilityPublished(
    absl::Span<const SensitiveKeywordSet> thetas,
    const PublishedDistribution& published, TopicId c) {
  if (thetas.empty()) {
    return absl::InvalidArgumentError("no sensitive keyword sets given");
  }
  double numerator = 0.0;
  double denominator = 0.0;
  bool found = false;
  double alpha = thetas.front().alpha;
  for (const SensitiveKeywordSet& theta : thetas) {
    double mass = 0.0;
    for (const KeywordCell& cell : theta.cells) {
      if (cell.input >= published.rows() || cell.output >= published.cols()) {
        return absl::InvalidArgumentError(
            "sensitive set does not fit the published distribution");
      }
      mass += published.at(cell);
    }
    denominator += mass;
    if (theta.topic == c) {
      numerator = mass;
      found = true;
      alpha = theta.alpha;
    }
  }
  if (!found) {
    return absl::InvalidArgumentError(
        absl::StrCat("no sensitive keyword set for topic ", c));
  }
  DeniabilityEstimate est;
  est.topic = c;
  est.estimator = EstimatorKind::kPublished;
  est.alpha = alpha;
  est.step = published.step();
  est.proxies = {published.proxy_id()};
  est.observer = ObserverKind::kProxy;
  if (denominator > 0.0) {
    est.value = std::clamp(numerator / denominator, 0.0, 1.0);
  } else {
    est.no_sensitive_mass = true;
  }
  return est;
}

bool DeniabilityCheck(double value, double delta) { return value <= delta; }

bool DeniabilityCheck(const DeniabilityEstimate& estimate, double delta) {
  return DeniabilityCheck(estimate.value, delta);
}

absl::StatusOr<double> LocalityAdjustedBound(double delta, double coverage) {
  if (!(delta > 0.0 && delta <= 1.0) || !(coverage > 0.0 && coverage <= 1.0)) {
    return absl::InvalidArgumentError("delta and coverage must lie in (0, 1]");
  }
  return delta * coverage;
}

absl::StatusOr<double> DpGammaBound(double delta, double epsilon) {
  if (!InUnitInterval(delta)) {
    return absl::InvalidArgumentError("delta must lie in [0, 1]");
  }
  if (!(epsilon >= 0.0)) {
    return absl::InvalidArgumentError("epsilon must be >= 0");
  }
  return std::max(delta, 1.0 - std::exp(epsilon) * (1.0 - delta));
}

absl::StatusOr<double> ReidentificationBound(double delta) {
  if (!InUnitInterval(delta)) {
    return absl::InvalidArgumentError("delta must lie in [0, 1]");
  }
  return 1.0 - delta;
}

}  // namespace groupid
