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

#ifndef GROUPID_SIMULATION_H_
#define GROUPID_SIMULATION_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "absl/container/btree_set.h"
#include "absl/container/flat_hash_map.h"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "groupid/corpus.h"
#include "groupid/estimators.h"
#include "groupid/personalisation.h"
#include "groupid/privacy.h"
#include "groupid/tokens.h"

namespace groupid {

struct ScenarioConfig {
  int num_proxies = 5;
  int num_users = 10;
  // Percentage of agents allocated the catch-all topic.
  double user_diversity = 0.0;
  double proxy_diversity = 0.0;
  // Number of sensitive topics.
  int num_topics = 5;
  int steps = 20;
  // Average noise rounds per true query, in percent.
  double noise_ratio = 0.0;
  double smoothing = 0.001;
  double delta = 0.2;
  std::vector<double> alphas = {0.25, 0.5, 0.75};
  // Threshold of the sets true queries are drawn from.
  double query_alpha = 0.5;
  uint64_t seed = 1;
  ConditionalMode mode = ConditionalMode::kBayesRenormalized;
  int background_size = 20;
  // Labelled corpus pairs each user sees when building its sensitive sets.
  int training_size = 200;
  bool reselect_every_step = true;

  // Synthetic corpus; its topic count and seed are taken from the fields
  // above unless corpus_seed is non-zero.
  SyntheticCorpusSpec corpus;
  uint64_t corpus_seed = 0;
  // Loads a TSV corpus instead of generating one.
  std::string corpus_path;

  // Gates every query on a blind session token.
  bool tokens_enabled = false;
  int tokens_limit = kDefaultIssuanceLimit;
  int tokens_window = 10;
};

absl::Status ValidateConfig(const ScenarioConfig& config);

// Black-box personalising system. It knows the topic labels of its corpus
// and profiles each proxy identity separately.
class BackendSystem {
 public:
  // Laplace pseudo-count of the per-proxy topic prior.
  static constexpr double kPriorPseudoCount = 1.0;

  struct Response {
    std::vector<int> output;
    TopicId topic = kCatchAllTopic;
    // The inventory for the chosen topic was empty; answered from c_0.
    bool fallback = false;
  };

  BackendSystem(std::shared_ptr<const Corpus> corpus, int num_proxies,
                double smoothing, uint64_t seed);

  // Adds an interaction to the proxy's profile under `labels`.
  void Seed(int proxy, const InputOutputPair& pair,
            absl::Span<const TopicId> labels);
  absl::StatusOr<Response> Respond(int proxy, absl::Span<const int> input);

  // log P(c | proxy) + sum over distinct input keywords i of log P(c | i),
  // where P(c | i) pools the corpus and the proxy's history of i.
  std::vector<double> TopicScores(int proxy, absl::Span<const int> input) const;
  // argmax of TopicScores; ties to lowest c.
  TopicId MostLikelyTopic(int proxy, absl::Span<const int> input) const;

  int64_t fallback_count() const { return fallback_count_; }

 private:
  std::shared_ptr<const Corpus> corpus_;
  int num_topics_;
  double smoothing_;
  std::vector<std::vector<int>> inventory_;
  // [topic][input keyword] pairs of the corpus containing the keyword.
  std::vector<std::vector<double>> keyword_counts_;
  std::vector<absl::flat_hash_map<int, std::vector<double>>> profiles_;
  std::vector<std::vector<double>> topic_totals_;
  std::mt19937_64 rng_;
  int64_t fallback_count_ = 0;
};

struct ProxyAgent {
  int id = 0;
  TopicId topic = kCatchAllTopic;
  SessionSequence log;
  // Single-topic counts of everything routed through the proxy.
  std::optional<CoOccurrenceCounts> counts;
  TopicTally tally{1};
  // Live smoothed joint mass backing the published distribution.
  std::shared_ptr<Eigen::MatrixXd> mass;
  double mass_total = 0.0;
  int64_t published_step = 0;

  PublishedDistribution Published() const;
};

struct UserAgent {
  int id = 0;
  TopicId topic = kCatchAllTopic;
  // Topics the deniability constraint is enforced for.
  std::vector<TopicId> sensitive_topics;
  SessionSequence log;
  std::optional<CoOccurrenceCounts> counts;
  TopicTally tally{1};
  ObjectiveTerms terms;
  // thetas[a] holds one set per sensitive topic at alphas[a].
  std::vector<std::vector<SensitiveKeywordSet>> thetas;
  // Sets at the query threshold.
  std::vector<SensitiveKeywordSet> query_thetas;
  // Query keywords per topic: inputs of its query set not shared with another
  // topic's query set.
  std::vector<std::vector<int>> query_inputs;
  // Input keywords per topic used when the query set is empty.
  std::vector<std::vector<int>> fallback_vocabulary;
  // Per topic, the keywords noise queries draw from: never one of the user's
  // own query keywords.
  std::vector<std::vector<int>> noise_vocabulary;
  std::optional<int> chosen;
  std::optional<int> last_chosen;
  // Proxies the user has routed true queries through.
  absl::btree_set<int> used_proxies;
  double noise_accumulator = 0.0;
  std::mt19937_64 rng;
};

struct ObserverView {
  ObserverKind kind = ObserverKind::kGlobal;
  std::vector<int> proxies;
  SessionSequence sequence;
};

struct MetricsRecord {
  int64_t step = 0;
  std::optional<double> selection_accuracy;
  std::optional<double> utility_loss;
  std::optional<double> deniability_direct_global;
  std::optional<double> deniability_direct_proxy;
  // One per configured alpha.
  std::vector<std::optional<double>> deniability_published;
  int abstain_count = 0;
  int dropped_tokens = 0;
  int fallback_responses = 0;
  int noise_queries = 0;
  int token_refusals = 0;
};

struct MetricsSeries {
  std::vector<double> alphas;
  std::vector<MetricsRecord> records;
};

class World {
 public:
  static absl::StatusOr<World> Create(const ScenarioConfig& config);
  static absl::StatusOr<World> Create(const ScenarioConfig& config,
                                      std::shared_ptr<const Corpus> corpus);

  World(World&&) = default;
  World& operator=(World&&) = default;

  // One round: every user in ascending id order runs UserStep then
  // InjectNoise.
  absl::Status Step();
  absl::Status UserStep(int user);
  absl::Status InjectNoise(int user);
  // Runs selection for every user without querying.
  absl::Status SelectAll();

  absl::StatusOr<ObserverView> View(ObserverKind kind,
                                    absl::Span<const int> proxies) const;
  absl::StatusOr<MetricsRecord> Metrics() const;

  const ScenarioConfig& config() const { return config_; }
  const Corpus& corpus() const { return *corpus_; }
  const LabellingRule& rule() const { return *rule_; }
  const std::vector<UserAgent>& users() const { return users_; }
  const std::vector<ProxyAgent>& proxies() const { return proxies_; }
  const BackendSystem& backend() const { return *backend_; }
  const SessionSequence& global_log() const { return global_log_; }
  int64_t round() const { return round_; }
  int64_t interactions() const { return next_step_ - 1; }

 private:
  World() = default;

  absl::Status Select(UserAgent& user);
  absl::StatusOr<bool> AcquireToken(UserAgent& user);
  absl::StatusOr<InputOutputPair> Query(UserAgent& user, int proxy,
                                        absl::Span<const int> input);
  absl::Status RecordAtProxy(ProxyAgent& proxy, const InputOutputPair& pair,
                             bool background);
  absl::Status RecordAtUser(UserAgent& user, const InputOutputPair& pair,
                            bool background);
  std::vector<int> DrawQuery(UserAgent& user, TopicId topic);
  std::vector<int> DrawNoise(UserAgent& user, TopicId topic);

  ScenarioConfig config_;
  std::shared_ptr<const Corpus> corpus_;
  std::unique_ptr<LabellingRule> rule_;
  std::unique_ptr<BackendSystem> backend_;
  std::vector<ProxyAgent> proxies_;
  std::vector<UserAgent> users_;
  SessionSequence global_log_;
  TopicTally global_tally_{1};
  int64_t next_step_ = 1;
  int64_t round_ = 0;

  std::unique_ptr<BlindSignatureScheme> token_scheme_;
  std::unique_ptr<SpentRegistry> registry_;

  // Per-round counters reported by Metrics().
  int abstains_ = 0;
  int noise_queries_ = 0;
  int token_refusals_ = 0;
  int64_t fallbacks_at_round_start_ = 0;
};

// Corpus a scenario runs on: loaded or generated.
absl::StatusOr<std::shared_ptr<const Corpus>> ScenarioCorpus(
    const ScenarioConfig& config);

// Initial row at step 0, then one row per round.
absl::StatusOr<MetricsSeries> RunScenario(const ScenarioConfig& config);

}  // namespace groupid

#endif  // GROUPID_SIMULATION_H_
