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

#include "groupid/simulation.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/container/flat_hash_set.h"
#include "absl/strings/str_cat.h"

namespace groupid {
namespace {

constexpr uint32_t kInitStream = 0;
constexpr uint32_t kUserStream = 1;
constexpr uint32_t kBackendStream = 2;
constexpr uint32_t kTokenStream = 3;

std::mt19937_64 MakeRng(uint64_t seed, uint32_t stream, uint32_t index = 0) {
  std::seed_seq seq{static_cast<uint32_t>(seed),
                    static_cast<uint32_t>(seed >> 32), stream, index};
  return std::mt19937_64(seq);
}

absl::Status CheckRange(absl::string_view name, double value, double lo,
                        double hi) {
  if (!(value >= lo && value <= hi)) {
    return absl::InvalidArgumentError(
        absl::StrCat(name, " = ", value, " is outside [", lo, ", ", hi, "]"));
  }
  return absl::OkStatus();
}

// First n entries of a seeded shuffle.
std::vector<int> DrawWithoutReplacement(std::vector<int> pool, int n,
                                        std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min<size_t>(pool.size(), n));
  return pool;
}

template <typename T>
const T& Pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> index(0, items.size() - 1);
  return items[index(rng)];
}

int CountFromPercent(double percent, int n) {
  return static_cast<int>(std::lround(percent / 100.0 * n));
}

// Per topic, the input keywords of its query set that no other topic's
// query set contains; all of its input keywords when that leaves none.
std::vector<std::vector<int>> QueryInputs(
    const std::vector<SensitiveKeywordSet>& thetas, int num_topics) {
  absl::flat_hash_map<int, int> owners;
  std::vector<absl::btree_set<int>> inputs(num_topics);
  for (const SensitiveKeywordSet& theta : thetas) {
    for (const KeywordCell& cell : theta.cells) {
      if (inputs[theta.topic].insert(cell.input).second) ++owners[cell.input];
    }
  }
  std::vector<std::vector<int>> result(num_topics);
  for (TopicId c = 1; c < num_topics; ++c) {
    for (int i : inputs[c]) {
      if (owners[i] == 1) result[c].push_back(i);
    }
    if (result[c].empty()) result[c].assign(inputs[c].begin(), inputs[c].end());
  }
  return result;
}

std::vector<std::vector<int>> NoiseVocabulary(const UserAgent& user,
                                              int num_topics) {
  absl::flat_hash_set<int> own;
  if (user.topic != kCatchAllTopic) {
    own.insert(user.query_inputs[user.topic].begin(),
               user.query_inputs[user.topic].end());
  }
  std::vector<std::vector<int>> out(num_topics);
  for (TopicId c = 0; c < num_topics; ++c) {
    const std::vector<int>& source = c != kCatchAllTopic && !user.query_inputs[c].empty()
                                         ? user.query_inputs[c]
                                         : user.fallback_vocabulary[c];
    for (int i : source) {
      if (!own.contains(i)) out[c].push_back(i);
    }
  }
  return out;
}

}  // namespace

absl::Status ValidateConfig(const ScenarioConfig& config) {
  const std::pair<absl::string_view, absl::Status> checks[] = {
      {"proxies", CheckRange("proxies", config.num_proxies, 3, 30)},
      {"users", CheckRange("users", config.num_users, 10, 120)},
      {"user_diversity",
       CheckRange("user_diversity", config.user_diversity, 0, 100)},
      {"proxy_diversity",
       CheckRange("proxy_diversity", config.proxy_diversity, 0, 100)},
      {"topics", CheckRange("topics", config.num_topics, 1, 1000)},
      {"steps", CheckRange("steps", config.steps, 0, 100000)},
      {"noise_ratio", CheckRange("noise_ratio", config.noise_ratio, 0, 1000)},
      {"delta", CheckRange("delta", config.delta, 0, 1)},
      {"query_alpha", CheckRange("query_alpha", config.query_alpha, 0, 1)},
      {"background_size",
       CheckRange("background_size", config.background_size, 1, 1e6)},
      {"training_size",
       CheckRange("training_size", config.training_size, config.num_topics + 1,
                  1e7)},
      {"tokens.limit", CheckRange("tokens.limit", config.tokens_limit, 1, 1e9)},
      {"tokens.window",
       CheckRange("tokens.window", config.tokens_window, 1, 1e9)},
  };
  for (const auto& [name, status] : checks) {
    if (!status.ok()) return status;
  }
  if (!(config.smoothing > 0.0) || !std::isfinite(config.smoothing)) {
    return absl::InvalidArgumentError("smoothing must be > 0");
  }
  if (config.delta == 0.0) {
    return absl::InvalidArgumentError("delta must lie in (0, 1]");
  }
  if (config.query_alpha == 0.0) {
    return absl::InvalidArgumentError("query_alpha must lie in (0, 1]");
  }
  if (config.alphas.empty()) {
    return absl::InvalidArgumentError("alphas must not be empty");
  }
  for (double a : config.alphas) {
    if (!(a > 0.0 && a <= 1.0)) {
      return absl::InvalidArgumentError(
          absl::StrCat("alpha ", a, " is outside (0, 1]"));
    }
  }
  return absl::OkStatus();
}

BackendSystem::BackendSystem(std::shared_ptr<const Corpus> corpus,
                             int num_proxies, double smoothing, uint64_t seed)
    : corpus_(std::move(corpus)),
      num_topics_(corpus_->topics.size()),
      smoothing_(smoothing),
      inventory_(num_topics_),
      keyword_counts_(num_topics_,
                      std::vector<double>(corpus_->input_dictionary.size(), 0.0)),
      profiles_(num_proxies),
      topic_totals_(num_proxies, std::vector<double>(num_topics_, 0.0)),
      rng_(MakeRng(seed, kBackendStream)) {
  for (size_t n = 0; n < corpus_->pairs.size(); ++n) {
    const LabelledPair& lp = corpus_->pairs[n];
    absl::flat_hash_set<int> in(lp.pair.input.begin(), lp.pair.input.end());
    for (TopicId c : lp.labels) {
      inventory_[c].push_back(static_cast<int>(n));
      for (int i : in) keyword_counts_[c][i] += 1.0;
    }
  }
}

void BackendSystem::Seed(int proxy, const InputOutputPair& pair,
                         absl::Span<const TopicId> labels) {
  for (TopicId c : labels) topic_totals_[proxy][c] += 1.0;
  absl::flat_hash_set<int> seen;
  for (int i : pair.input) {
    if (!seen.insert(i).second) continue;
    std::vector<double>& row = profiles_[proxy][i];
    if (row.empty()) row.assign(num_topics_, 0.0);
    for (TopicId c : labels) row[c] += 1.0;
  }
}

std::vector<double> BackendSystem::TopicScores(
    int proxy, absl::Span<const int> input) const {
  const std::vector<double>& totals = topic_totals_[proxy];
  const double proxy_total = std::accumulate(totals.begin(), totals.end(), 0.0);
  std::vector<double> score(num_topics_);
  for (TopicId c = 0; c < num_topics_; ++c) {
    score[c] = std::log((totals[c] + kPriorPseudoCount) /
                        (proxy_total + kPriorPseudoCount * num_topics_));
  }
  absl::flat_hash_set<int> seen;
  for (int i : input) {
    if (!seen.insert(i).second) continue;
    auto it = profiles_[proxy].find(i);
    double total = 0.0;
    for (TopicId c = 0; c < num_topics_; ++c) {
      total += keyword_counts_[c][i];
      if (it != profiles_[proxy].end()) total += it->second[c];
    }
    for (TopicId c = 0; c < num_topics_; ++c) {
      const double here = it == profiles_[proxy].end() ? 0.0 : it->second[c];
      score[c] += std::log((keyword_counts_[c][i] + here + smoothing_) /
                           (total + smoothing_ * num_topics_));
    }
  }
  return score;
}

TopicId BackendSystem::MostLikelyTopic(int proxy,
                                       absl::Span<const int> input) const {
  const std::vector<double> score = TopicScores(proxy, input);
  TopicId best = 0;
  for (TopicId c = 1; c < num_topics_; ++c) {
    if (score[c] > score[best]) best = c;
  }
  return best;
}

absl::StatusOr<BackendSystem::Response> BackendSystem::Respond(
    int proxy, absl::Span<const int> input) {
  if (proxy < 0 || proxy >= static_cast<int>(profiles_.size())) {
    return absl::OutOfRangeError(absl::StrCat("unknown proxy ", proxy));
  }
  if (input.empty()) {
    return absl::InvalidArgumentError("query input is empty");
  }
  Response response;
  response.topic = MostLikelyTopic(proxy, input);
  const std::vector<int>* inventory = &inventory_[response.topic];
  if (inventory->empty()) {
    response.fallback = true;
    ++fallback_count_;
    inventory = &inventory_[kCatchAllTopic];
    if (inventory->empty()) {
      return absl::FailedPreconditionError("backend corpus has no responses");
    }
  }
  response.output = corpus_->pairs[Pick(*inventory, rng_)].pair.output;
  InputOutputPair record;
  record.input.assign(input.begin(), input.end());
  const TopicId recorded[] = {response.topic};
  Seed(proxy, record, recorded);
  return response;
}

PublishedDistribution ProxyAgent::Published() const {
  return *PublishedDistribution::FromMass(mass, mass_total, id,
                                          published_step);
}

absl::StatusOr<std::shared_ptr<const Corpus>> ScenarioCorpus(
    const ScenarioConfig& config) {
  if (!config.corpus_path.empty()) {
    absl::StatusOr<Corpus> loaded = LoadCorpus(config.corpus_path);
    if (!loaded.ok()) return loaded.status();
    if (loaded->topics.size() != config.num_topics + 1) {
      return absl::InvalidArgumentError(absl::StrCat(
          "corpus declares ", loaded->topics.size() - 1,
          " sensitive topics but the config asks for ", config.num_topics));
    }
    return std::make_shared<const Corpus>(*std::move(loaded));
  }
  SyntheticCorpusSpec spec = config.corpus;
  spec.num_sensitive_topics = config.num_topics;
  spec.seed = config.corpus_seed != 0 ? config.corpus_seed : config.seed;
  absl::StatusOr<Corpus> generated = GenerateCorpus(spec);
  if (!generated.ok()) return generated.status();
  return std::make_shared<const Corpus>(*std::move(generated));
}

absl::StatusOr<World> World::Create(const ScenarioConfig& config) {
  if (absl::Status s = ValidateConfig(config); !s.ok()) return s;
  absl::StatusOr<std::shared_ptr<const Corpus>> corpus = ScenarioCorpus(config);
  if (!corpus.ok()) return corpus.status();
  return Create(config, *std::move(corpus));
}

absl::StatusOr<World> World::Create(const ScenarioConfig& config,
                                    std::shared_ptr<const Corpus> corpus) {
  if (absl::Status s = ValidateConfig(config); !s.ok()) return s;
  const int num_topics = corpus->topics.size();
  if (num_topics != config.num_topics + 1) {
    return absl::InvalidArgumentError("corpus topic count does not match");
  }
  const int nx = corpus->input_dictionary.size();
  const int ny = corpus->output_dictionary.size();

  World world;
  world.config_ = config;
  world.corpus_ = corpus;
  world.rule_ = std::make_unique<LabellingRule>(DeriveLabellingRule(*corpus));
  world.backend_ = std::make_unique<BackendSystem>(
      corpus, config.num_proxies, config.smoothing, config.seed);
  world.global_tally_ = TopicTally(num_topics);

  std::vector<std::vector<int>> by_label(num_topics);
  std::vector<int> all_pairs(corpus->pairs.size());
  std::iota(all_pairs.begin(), all_pairs.end(), 0);
  for (size_t n = 0; n < corpus->pairs.size(); ++n) {
    for (TopicId c : corpus->pairs[n].labels) {
      by_label[c].push_back(static_cast<int>(n));
    }
  }
  auto background_pool = [&](TopicId c) -> absl::StatusOr<std::vector<int>> {
    const std::vector<int>& pool =
        c == kCatchAllTopic ? all_pairs : by_label[c];
    if (static_cast<int>(pool.size()) < config.background_size) {
      return absl::FailedPreconditionError(absl::StrCat(
          "corpus has ", pool.size(), " pairs for topic ",
          corpus->topics.label(c), " but background_size is ",
          config.background_size));
    }
    return pool;
  };

  std::mt19937_64 init_rng = MakeRng(config.seed, kInitStream);

  // Topic allocation. Exactly round(diversity * n) agents get c_0.
  std::vector<int> proxy_order(config.num_proxies);
  std::iota(proxy_order.begin(), proxy_order.end(), 0);
  std::shuffle(proxy_order.begin(), proxy_order.end(), init_rng);
  std::vector<TopicId> proxy_topic(config.num_proxies, kCatchAllTopic);
  {
    const int n0 = CountFromPercent(config.proxy_diversity, config.num_proxies);
    std::vector<int> sensitive(proxy_order.begin() + n0, proxy_order.end());
    std::sort(sensitive.begin(), sensitive.end());
    for (size_t k = 0; k < sensitive.size(); ++k) {
      proxy_topic[sensitive[k]] = 1 + static_cast<int>(k % config.num_topics);
    }
  }
  std::vector<int> user_order(config.num_users);
  std::iota(user_order.begin(), user_order.end(), 0);
  std::shuffle(user_order.begin(), user_order.end(), init_rng);
  std::vector<TopicId> user_topic(config.num_users, kCatchAllTopic);
  {
    const int n0 = CountFromPercent(config.user_diversity, config.num_users);
    std::uniform_int_distribution<int> topic(1, config.num_topics);
    std::vector<int> sensitive(user_order.begin() + n0, user_order.end());
    std::sort(sensitive.begin(), sensitive.end());
    for (int u : sensitive) user_topic[u] = topic(init_rng);
  }

  for (int p = 0; p < config.num_proxies; ++p) {
    ProxyAgent proxy;
    proxy.id = p;
    proxy.topic = proxy_topic[p];
    absl::StatusOr<CoOccurrenceCounts> counts =
        CoOccurrenceCounts::Create(1, nx, ny);
    if (!counts.ok()) return counts.status();
    counts = LaplaceSmooth(*std::move(counts), config.smoothing);
    if (!counts.ok()) return counts.status();
    proxy.counts = *std::move(counts);
    proxy.tally = TopicTally(num_topics);
    proxy.mass = std::make_shared<Eigen::MatrixXd>(
        Eigen::MatrixXd::Constant(nx, ny, config.smoothing));
    proxy.mass_total = config.smoothing * nx * ny;
    world.proxies_.push_back(std::move(proxy));
  }
  for (int p = 0; p < config.num_proxies; ++p) {
    ProxyAgent& proxy = world.proxies_[p];
    absl::StatusOr<std::vector<int>> pool = background_pool(proxy.topic);
    if (!pool.ok()) return pool.status();
    for (int n : DrawWithoutReplacement(*std::move(pool),
                                        config.background_size, init_rng)) {
      InputOutputPair pair = corpus->pairs[n].pair;
      pair.via_proxy = p;
      pair.step = 0;
      world.backend_->Seed(p, pair, corpus->pairs[n].labels);
      if (absl::Status s = world.RecordAtProxy(proxy, pair, true); !s.ok()) {
        return s;
      }
    }
  }

  for (int u = 0; u < config.num_users; ++u) {
    UserAgent user;
    user.id = u;
    user.topic = user_topic[u];
    if (user.topic != kCatchAllTopic) user.sensitive_topics = {user.topic};
    user.rng = MakeRng(config.seed, kUserStream, static_cast<uint32_t>(u));
    user.tally = TopicTally(num_topics);
    absl::StatusOr<CoOccurrenceCounts> counts =
        CoOccurrenceCounts::Create(num_topics, nx, ny);
    if (!counts.ok()) return counts.status();
    counts = LaplaceSmooth(*std::move(counts), config.smoothing);
    if (!counts.ok()) return counts.status();
    user.counts = *std::move(counts);

    absl::StatusOr<std::vector<int>> pool = background_pool(user.topic);
    if (!pool.ok()) return pool.status();
    for (int n : DrawWithoutReplacement(*std::move(pool),
                                        config.background_size, user.rng)) {
      InputOutputPair pair = corpus->pairs[n].pair;
      pair.origin_user = u;
      pair.step = 0;
      if (absl::Status s = world.RecordAtUser(user, pair, true); !s.ok()) {
        return s;
      }
    }

    // Labelled training sample, stratified over topics.
    std::vector<LabelledPair> training;
    const int per_topic = config.training_size / num_topics;
    user.fallback_vocabulary.assign(num_topics, {});
    for (TopicId c = 0; c < num_topics; ++c) {
      for (int n : DrawWithoutReplacement(by_label[c], per_topic, user.rng)) {
        training.push_back(corpus->pairs[n]);
        for (int i : corpus->pairs[n].pair.input) {
          user.fallback_vocabulary[c].push_back(i);
        }
      }
    }
    if (training.empty()) {
      return absl::FailedPreconditionError("corpus has no training pairs");
    }
    absl::StatusOr<CoOccurrenceCounts> training_counts =
        BuildCounts(training, num_topics, nx, ny);
    if (!training_counts.ok()) return training_counts.status();
    const TopicConditionalTable table =
        TopicGivenPair(*training_counts, config.mode);
    for (double alpha : config.alphas) {
      absl::StatusOr<std::vector<SensitiveKeywordSet>> sets =
          BuildSensitiveSets(table, alpha);
      if (!sets.ok()) return sets.status();
      user.thetas.push_back(*std::move(sets));
    }
    absl::StatusOr<std::vector<SensitiveKeywordSet>> query_sets =
        BuildSensitiveSets(table, config.query_alpha);
    if (!query_sets.ok()) return query_sets.status();
    user.query_thetas = *std::move(query_sets);
    user.query_inputs = QueryInputs(user.query_thetas, num_topics);
    user.noise_vocabulary = NoiseVocabulary(user, num_topics);

    absl::StatusOr<ObjectiveTerms> terms =
        BuildObjectiveTerms(*user.counts, config.mode);
    if (!terms.ok()) return terms.status();
    user.terms = *std::move(terms);
    world.users_.push_back(std::move(user));
  }

  if (config.tokens_enabled) {
    std::mt19937_64 key_rng = MakeRng(config.seed, kTokenStream);
    world.token_scheme_ = std::make_unique<MockBlindSignatureScheme>(key_rng());
    world.registry_ = std::make_unique<SpentRegistry>(config.tokens_limit);
  }

  if (absl::Status s = world.SelectAll(); !s.ok()) return s;
  return world;
}

absl::Status World::RecordAtProxy(ProxyAgent& proxy, const InputOutputPair& pair,
                                  bool background) {
  absl::Status s = background ? proxy.log.AppendBackground(pair)
                              : proxy.log.Append(pair);
  if (!s.ok()) return s;
  const TopicId single[] = {0};
  if (s = proxy.counts->Add(pair, single); !s.ok()) return s;
  if (proxy.mass.use_count() > 1) {
    proxy.mass = std::make_shared<Eigen::MatrixXd>(*proxy.mass);
  }
  for (int i : pair.input) {
    for (int j : pair.output) (*proxy.mass)(i, j) += 1.0;
  }
  proxy.mass_total += static_cast<double>(pair.input.size()) *
                      static_cast<double>(pair.output.size());
  proxy.published_step = pair.step;
  const std::vector<TopicId> labels = rule_->Label(pair);
  proxy.tally.Add(labels);
  s = background ? global_log_.AppendBackground(pair) : global_log_.Append(pair);
  if (!s.ok()) return s;
  global_tally_.Add(labels);
  return absl::OkStatus();
}

absl::Status World::RecordAtUser(UserAgent& user, const InputOutputPair& pair,
                                 bool background) {
  absl::Status s =
      background ? user.log.AppendBackground(pair) : user.log.Append(pair);
  if (!s.ok()) return s;
  const std::vector<TopicId> labels = rule_->Label(pair);
  if (s = user.counts->Add(pair, labels); !s.ok()) return s;
  user.tally.Add(labels);
  return absl::OkStatus();
}

absl::Status World::Select(UserAgent& user) {
  std::vector<PublishedDistribution> published;
  published.reserve(proxies_.size());
  for (const ProxyAgent& proxy : proxies_) published.push_back(proxy.Published());
  std::vector<const PublishedDistribution*> pool;
  for (const PublishedDistribution& p : published) pool.push_back(&p);
  absl::StatusOr<SelectionResult> result =
      SelectProxy(user.terms, pool, user.query_thetas, user.sensitive_topics,
                  config_.delta);
  if (!result.ok()) return result.status();
  user.chosen = result->chosen;
  return absl::OkStatus();
}

absl::Status World::SelectAll() {
  for (UserAgent& user : users_) {
    if (absl::Status s = Select(user); !s.ok()) return s;
  }
  return absl::OkStatus();
}

std::vector<int> World::DrawQuery(UserAgent& user, TopicId topic) {
  if (topic != kCatchAllTopic) {
    const std::vector<int>& inputs = user.query_inputs[topic];
    if (!inputs.empty()) return {Pick(inputs, user.rng)};
  }
  const std::vector<int>& vocabulary = user.fallback_vocabulary[topic];
  if (!vocabulary.empty()) return {Pick(vocabulary, user.rng)};
  std::uniform_int_distribution<int> any(0, corpus_->input_dictionary.size() - 1);
  return {any(user.rng)};
}

std::vector<int> World::DrawNoise(UserAgent& user, TopicId topic) {
  const std::vector<int>& vocabulary = user.noise_vocabulary[topic];
  if (!vocabulary.empty()) return {Pick(vocabulary, user.rng)};
  return DrawQuery(user, topic);
}

absl::StatusOr<bool> World::AcquireToken(UserAgent& user) {
  if (!config_.tokens_enabled) return true;
  const int64_t window = round_ / config_.tokens_window;
  absl::StatusOr<std::vector<SessionToken>> minted =
      MintAndBlind(*token_scheme_, *registry_, user.id, window, 1, user.rng);
  if (absl::IsResourceExhausted(minted.status())) return false;
  if (!minted.ok()) return minted.status();
  SessionToken& token = minted->front();
  absl::StatusOr<Bytes> request = token.IssuerRequest();
  if (!request.ok()) return request.status();
  absl::StatusOr<Bytes> blind_signature = SignBlinded(*token_scheme_, *request);
  if (!blind_signature.ok()) return blind_signature.status();
  if (absl::Status s = token.AcceptBlindSignature(*token_scheme_, *blind_signature);
      !s.ok()) {
    return s;
  }
  if (!registry_->Redeem(*token_scheme_, token)) {
    return absl::InternalError("freshly issued token was rejected");
  }
  return true;
}

absl::StatusOr<InputOutputPair> World::Query(UserAgent& user, int proxy,
                                             absl::Span<const int> input) {
  absl::StatusOr<BackendSystem::Response> response =
      backend_->Respond(proxy, input);
  if (!response.ok()) return response.status();
  InputOutputPair pair;
  pair.input.assign(input.begin(), input.end());
  pair.output = std::move(response->output);
  pair.origin_user = user.id;
  pair.via_proxy = proxy;
  pair.step = next_step_++;
  if (absl::Status s = RecordAtProxy(proxies_[proxy], pair, false); !s.ok()) {
    return s;
  }
  return pair;
}

absl::Status World::UserStep(int u) {
  UserAgent& user = users_[u];
  if (config_.reselect_every_step || !user.chosen.has_value()) {
    if (absl::Status s = Select(user); !s.ok()) return s;
  }
  if (!user.chosen.has_value()) {
    ++abstains_;
    return absl::OkStatus();
  }
  absl::StatusOr<bool> token = AcquireToken(user);
  if (!token.ok()) return token.status();
  if (!*token) {
    ++token_refusals_;
    ++abstains_;
    return absl::OkStatus();
  }
  TopicId topic = user.topic;
  if (topic == kCatchAllTopic) {
    std::uniform_int_distribution<int> any(0, config_.num_topics);
    topic = any(user.rng);
  }
  const std::vector<int> input = DrawQuery(user, topic);
  absl::StatusOr<InputOutputPair> pair = Query(user, *user.chosen, input);
  if (!pair.ok()) return pair.status();
  if (absl::Status s = RecordAtUser(user, *pair, false); !s.ok()) return s;
  user.used_proxies.insert(*user.chosen);
  user.last_chosen = user.chosen;
  absl::StatusOr<ObjectiveTerms> terms =
      BuildObjectiveTerms(*user.counts, config_.mode);
  if (!terms.ok()) return terms.status();
  user.terms = *std::move(terms);
  return absl::OkStatus();
}

absl::Status World::InjectNoise(int u) {
  if (config_.noise_ratio <= 0.0 || proxies_.size() < 2) return absl::OkStatus();
  UserAgent& user = users_[u];
  user.noise_accumulator += config_.noise_ratio / 100.0;
  std::vector<TopicId> topics;
  for (TopicId c = 0; c <= config_.num_topics; ++c) {
    if (c != user.topic) topics.push_back(c);
  }
  while (user.noise_accumulator >= 1.0 - 1e-9) {
    user.noise_accumulator -= 1.0;
    for (const ProxyAgent& proxy : proxies_) {
      if (user.last_chosen.has_value() && proxy.id == *user.last_chosen) continue;
      absl::StatusOr<bool> token = AcquireToken(user);
      if (!token.ok()) return token.status();
      if (!*token) {
        ++token_refusals_;
        continue;
      }
      const TopicId topic = Pick(topics, user.rng);
      const std::vector<int> input = DrawNoise(user, topic);
      absl::StatusOr<InputOutputPair> pair = Query(user, proxy.id, input);
      if (!pair.ok()) return pair.status();
      ++noise_queries_;
    }
  }
  return absl::OkStatus();
}

absl::Status World::Step() {
  ++round_;
  abstains_ = 0;
  noise_queries_ = 0;
  token_refusals_ = 0;
  fallbacks_at_round_start_ = backend_->fallback_count();
  for (int u = 0; u < static_cast<int>(users_.size()); ++u) {
    if (absl::Status s = UserStep(u); !s.ok()) return s;
    if (absl::Status s = InjectNoise(u); !s.ok()) return s;
  }
  return absl::OkStatus();
}

absl::StatusOr<ObserverView> World::View(ObserverKind kind,
                                         absl::Span<const int> proxies) const {
  ObserverView view;
  view.kind = kind;
  if (kind == ObserverKind::kGlobal) {
    view.sequence = global_log_;
    for (const ProxyAgent& p : proxies_) view.proxies.push_back(p.id);
    return view;
  }
  absl::flat_hash_set<int> visible;
  for (int p : proxies) {
    if (p < 0 || p >= static_cast<int>(proxies_.size())) {
      return absl::OutOfRangeError(absl::StrCat("unknown proxy ", p));
    }
    visible.insert(p);
  }
  view.proxies.assign(visible.begin(), visible.end());
  std::sort(view.proxies.begin(), view.proxies.end());
  for (size_t n = 0; n < global_log_.size(); ++n) {
    const InputOutputPair& pair = global_log_[n];
    if (!pair.via_proxy.has_value() || !visible.contains(*pair.via_proxy)) {
      continue;
    }
    absl::Status s = n < global_log_.background_size()
                         ? view.sequence.AppendBackground(pair)
                         : view.sequence.Append(pair);
    if (!s.ok()) return s;
  }
  return view;
}

absl::StatusOr<MetricsRecord> World::Metrics() const {
  MetricsRecord record;
  record.step = round_;
  record.abstain_count = abstains_;
  record.dropped_tokens = corpus_->dropped_tokens;
  record.fallback_responses =
      static_cast<int>(backend_->fallback_count() - fallbacks_at_round_start_);
  record.noise_queries = noise_queries_;
  record.token_refusals = token_refusals_;

  const std::vector<TopicId> sensitive = corpus_->topics.SensitiveTopics();
  // Sensitive users are scored on their own topic, c_0 users on the mean over
  // all sensitive topics.
  auto per_user = [&](const UserAgent& user, auto&& value_for) {
    if (user.topic != kCatchAllTopic) return value_for(user.topic);
    double sum = 0.0;
    for (TopicId c : sensitive) sum += value_for(c);
    return sum / static_cast<double>(sensitive.size());
  };

  int sensitive_users = 0;
  int correct = 0;
  double loss_sum = 0.0;
  int loss_n = 0;
  double global_sum = 0.0;
  double proxy_sum = 0.0;
  int proxy_n = 0;
  std::vector<double> published_sum(config_.alphas.size(), 0.0);
  int published_n = 0;

  for (const UserAgent& user : users_) {
    if (user.topic != kCatchAllTopic) {
      ++sensitive_users;
      if (user.chosen.has_value() &&
          proxies_[*user.chosen].topic == user.topic) {
        ++correct;
      }
    }
    global_sum += per_user(user, [&](TopicId c) {
      return global_tally_.LabelFraction(c);
    });

    absl::btree_set<int> employed = user.used_proxies;
    if (user.chosen.has_value()) employed.insert(*user.chosen);
    if (!employed.empty()) {
      int64_t size = 0;
      for (int p : employed) size += proxies_[p].tally.size();
      proxy_sum += per_user(user, [&](TopicId c) {
        int64_t hits = 0;
        for (int p : employed) hits += proxies_[p].tally.label_count(c);
        return static_cast<double>(hits) / static_cast<double>(size);
      });
      ++proxy_n;
    }

    if (!user.chosen.has_value()) continue;
    const ProxyAgent& proxy = proxies_[*user.chosen];
    absl::StatusOr<TopicDistribution> mine = user.tally.Distribution();
    if (!mine.ok()) return mine.status();
    absl::StatusOr<TopicDistribution> theirs = proxy.tally.Distribution();
    if (!theirs.ok()) return theirs.status();
    absl::StatusOr<double> loss = UtilityLoss(*mine, *theirs);
    if (!loss.ok()) return loss.status();
    loss_sum += *loss;
    ++loss_n;

    const PublishedDistribution published = proxy.Published();
    for (size_t a = 0; a < config_.alphas.size(); ++a) {
      absl::Status status;
      published_sum[a] += per_user(user, [&](TopicId c) {
        absl::StatusOr<DeniabilityEstimate> est =
            DeniabilityPublished(user.thetas[a], published, c);
        if (!est.ok()) {
          status = est.status();
          return 0.0;
        }
        return est->value;
      });
      if (!status.ok()) return status;
    }
    ++published_n;
  }

  if (sensitive_users > 0) {
    record.selection_accuracy =
        static_cast<double>(correct) / static_cast<double>(sensitive_users);
  }
  if (loss_n > 0) record.utility_loss = loss_sum / loss_n;
  if (!users_.empty()) {
    record.deniability_direct_global =
        global_sum / static_cast<double>(users_.size());
  }
  if (proxy_n > 0) record.deniability_direct_proxy = proxy_sum / proxy_n;
  record.deniability_published.resize(config_.alphas.size());
  if (published_n > 0) {
    for (size_t a = 0; a < config_.alphas.size(); ++a) {
      record.deniability_published[a] = published_sum[a] / published_n;
    }
  }
  return record;
}

absl::StatusOr<MetricsSeries> RunScenario(const ScenarioConfig& config) {
  absl::StatusOr<World> world = World::Create(config);
  if (!world.ok()) return world.status();
  MetricsSeries series;
  series.alphas = config.alphas;
  absl::StatusOr<MetricsRecord> initial = world->Metrics();
  if (!initial.ok()) return initial.status();
  series.records.push_back(*std::move(initial));
  for (int s = 0; s < config.steps; ++s) {
    if (absl::Status status = world->Step(); !status.ok()) return status;
    absl::StatusOr<MetricsRecord> record = world->Metrics();
    if (!record.ok()) return record.status();
    series.records.push_back(*std::move(record));
  }
  return series;
}

}  // namespace groupid
