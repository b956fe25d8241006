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

#ifndef GROUPID_ESTIMATORS_H_
#define GROUPID_ESTIMATORS_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/container/flat_hash_map.h"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "groupid/corpus.h"

namespace groupid {

// Tolerance for "sums to one" checks on distributions.
inline constexpr double kDistributionTolerance = 1e-9;

// Per-topic keyword co-occurrence statistics of a labelled sequence.
//
// For each topic c, count(c, i, j) accumulates (occurrences of input i) x
// (occurrences of output j) over pairs labelled c, i.e. the (i, j) entry of
// A_c^T B_c for the stacked count vectors. presence(c, i, j) counts the pairs
// labelled c in which both features occur at least once. A pair carrying
// several labels contributes to each of them.
//
// Storage is sparse. Laplace smoothing is kept as an offset, so count() of a
// smoothed table is raw + lambda for every cell, observed or not.
class CoOccurrenceCounts {
 public:
  static absl::StatusOr<CoOccurrenceCounts> Create(int num_topics,
                                                   int input_size,
                                                   int output_size);

  // Incremental single-writer update. Allowed before or after smoothing.
  absl::Status Add(const InputOutputPair& pair, absl::Span<const TopicId> labels);

  int num_topics() const { return num_topics_; }
  int input_size() const { return input_size_; }
  int output_size() const { return output_size_; }
  int64_t num_pairs() const { return num_pairs_; }

  bool smoothed() const { return smoothed_; }
  double smoothing() const { return smoothing_; }

  // N_{c,ij}, including smoothing.
  double count(TopicId c, int i, int j) const;
  // O_{c,ij}; never smoothed.
  int64_t presence(TopicId c, int i, int j) const;
  // N_{ij} = sum_c N_{c,ij}.
  double joint_count(int i, int j) const;
  // N_c, N, O_c, O.
  double topic_total(TopicId c) const;
  double total() const;
  int64_t presence_total(TopicId c) const { return presence_totals_[c]; }
  int64_t presence_total() const { return presence_total_; }
  // sum_c O_{c,ij}.
  int64_t joint_presence(int i, int j) const;

  // Cells with at least one presence under any topic, in row-major order.
  std::vector<KeywordCell> ObservedCells() const;

  Eigen::MatrixXd CountMatrix(TopicId c) const;
  Eigen::MatrixXd PresenceMatrix(TopicId c) const;
  Eigen::MatrixXd JointCountMatrix() const;

 private:
  friend absl::StatusOr<CoOccurrenceCounts> LaplaceSmooth(
      CoOccurrenceCounts counts, double lambda);

  struct Entry {
    double count = 0.0;
    int64_t presence = 0;
  };

  CoOccurrenceCounts(int num_topics, int input_size, int output_size);

  uint32_t Key(int i, int j) const {
    return static_cast<uint32_t>(i) * output_size_ + j;
  }
  double cells() const {
    return static_cast<double>(input_size_) * output_size_;
  }

  int num_topics_;
  int input_size_;
  int output_size_;
  int64_t num_pairs_ = 0;
  bool smoothed_ = false;
  double smoothing_ = 0.0;
  std::vector<absl::flat_hash_map<uint32_t, Entry>> topics_;
  absl::flat_hash_map<uint32_t, Entry> joint_;
  std::vector<double> raw_topic_totals_;
  double raw_total_ = 0.0;
  std::vector<int64_t> presence_totals_;
  int64_t presence_total_ = 0;
};

// Labels every pair of `sequence` with `rule` and accumulates the counts.
absl::StatusOr<CoOccurrenceCounts> BuildCounts(const SessionSequence& sequence,
                                               const LabellingRule& rule);
// Same, for pairs whose labels are already known.
absl::StatusOr<CoOccurrenceCounts> BuildCounts(
    absl::Span<const LabelledPair> pairs, int num_topics, int input_size,
    int output_size);

// Adds lambda to every N_{c,ij}. Presence matrices are untouched.
absl::StatusOr<CoOccurrenceCounts> LaplaceSmooth(CoOccurrenceCounts counts,
                                                 double lambda);

// N_{c,ij} / N_c.
absl::StatusOr<Eigen::MatrixXd> PairGivenTopic(const CoOccurrenceCounts& counts,
                                               TopicId c);
// N_{ij} / N.
absl::StatusOr<Eigen::MatrixXd> PairGivenSequence(
    const CoOccurrenceCounts& counts);
// N_c / N.
absl::StatusOr<std::vector<double>> TopicPrior(const CoOccurrenceCounts& counts);

enum class ConditionalMode {
  // O_{c,ij} / O_c, the estimator exactly as it is usually stated.
  kAsWritten,
  // O_{c,ij} / sum_c' O_{c',ij}; zero where no topic observed the cell.
  kBayesRenormalized,
};

absl::string_view ConditionalModeName(ConditionalMode mode);
absl::StatusOr<ConditionalMode> ParseConditionalMode(absl::string_view name);

// Estimated probability that a pair belongs to topic c given that the cell
// (i, j) co-occurs in it.
double TopicGivenPairAt(const CoOccurrenceCounts& counts, TopicId c,
                        KeywordCell cell, ConditionalMode mode);

struct TopicConditionalTable {
  ConditionalMode mode = ConditionalMode::kAsWritten;
  // One |D_X| x |D_Y| matrix per topic.
  std::vector<Eigen::MatrixXd> per_topic;
};

TopicConditionalTable TopicGivenPair(const CoOccurrenceCounts& counts,
                                     ConditionalMode mode);

// sum_ij membership(i, j) * conditioning(i, j).
absl::StatusOr<double> MixtureProbability(const Eigen::MatrixXd& membership,
                                          const Eigen::MatrixXd& conditioning);

// The joint keyword-pair distribution a proxy agent releases. Stored as a
// mass matrix and its total so that a proxy can share its live buffer; the
// snapshot itself is immutable.
class PublishedDistribution {
 public:
  // Validates non-negativity and unit mass.
  static absl::StatusOr<PublishedDistribution> Create(Eigen::MatrixXd values,
                                                      int proxy_id,
                                                      int64_t step);
  // pair_given_sequence of smoothed counts.
  static absl::StatusOr<PublishedDistribution> FromCounts(
      const CoOccurrenceCounts& counts, int proxy_id, int64_t step);
  // Entry (i, j) is mass(i, j) / total. `mass` must be non-negative and sum
  // to `total`; only total > 0 is checked.
  static absl::StatusOr<PublishedDistribution> FromMass(
      std::shared_ptr<const Eigen::MatrixXd> mass, double total, int proxy_id,
      int64_t step);

  Eigen::MatrixXd values() const { return *mass_ / total_; }
  double at(int i, int j) const { return (*mass_)(i, j) / total_; }
  double at(KeywordCell cell) const { return at(cell.input, cell.output); }
  int proxy_id() const { return proxy_id_; }
  int64_t step() const { return step_; }
  int rows() const { return static_cast<int>(mass_->rows()); }
  int cols() const { return static_cast<int>(mass_->cols()); }

 private:
  PublishedDistribution(std::shared_ptr<const Eigen::MatrixXd> mass,
                        double total, int proxy_id, int64_t step)
      : mass_(std::move(mass)), total_(total), proxy_id_(proxy_id),
        step_(step) {}

  std::shared_ptr<const Eigen::MatrixXd> mass_;
  double total_ = 1.0;
  int proxy_id_ = 0;
  int64_t step_ = 0;
};

// Writes a distribution as CSV: one row per input feature, one column per
// output feature, 12 significant digits.
std::string FormatDistributionCsv(const Eigen::MatrixXd& distribution);

}  // namespace groupid

#endif  // GROUPID_ESTIMATORS_H_
