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

#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "absl/container/flat_hash_set.h"

namespace groupid {
namespace {

constexpr double kTol = 1e-9;

ScenarioConfig SmallConfig() {
  ScenarioConfig config;
  config.num_proxies = 5;
  config.num_users = 10;
  config.steps = 5;
  config.delta = 1.0;
  config.seed = 3;
  return config;
}

void ExpectSameRecord(const MetricsRecord& a, const MetricsRecord& b) {
  EXPECT_EQ(a.step, b.step);
  EXPECT_EQ(a.selection_accuracy, b.selection_accuracy);
  EXPECT_EQ(a.utility_loss, b.utility_loss);
  EXPECT_EQ(a.deniability_direct_global, b.deniability_direct_global);
  EXPECT_EQ(a.deniability_direct_proxy, b.deniability_direct_proxy);
  EXPECT_EQ(a.deniability_published, b.deniability_published);
  EXPECT_EQ(a.abstain_count, b.abstain_count);
  EXPECT_EQ(a.noise_queries, b.noise_queries);
  EXPECT_EQ(a.fallback_responses, b.fallback_responses);
}

// c1 pairs use input a, c2 pairs input b, c0 pairs input c; s occurs once in
// every topic.
std::shared_ptr<const Corpus> TinyCorpus() {
  absl::StatusOr<Corpus> corpus = ParseCorpus(
      "#dictionary_x\ta,b,c,s\n"
      "#dictionary_y\tx,y,z,w\n"
      "#topics\tc0,c1,c2\n"
      "c1\ta\tx\n"
      "c1\ta\tx\n"
      "c1\ts\tw\n"
      "c2\tb\ty\n"
      "c2\ts\tw\n"
      "c0\tc\tz\n"
      "c0\ts\tw\n");
  EXPECT_TRUE(corpus.ok()) << corpus.status();
  return std::make_shared<const Corpus>(*std::move(corpus));
}

InputOutputPair Input(std::vector<int> in) {
  InputOutputPair p;
  p.input = std::move(in);
  p.output = {0};
  return p;
}

TEST(ConfigTest, RangesAreValidated) {
  ScenarioConfig config = SmallConfig();
  EXPECT_TRUE(ValidateConfig(config).ok());
  config.num_users = 121;
  EXPECT_FALSE(ValidateConfig(config).ok());
  config = SmallConfig();
  config.num_proxies = 2;
  EXPECT_FALSE(ValidateConfig(config).ok());
  config = SmallConfig();
  config.num_proxies = 31;
  EXPECT_FALSE(ValidateConfig(config).ok());
  config = SmallConfig();
  config.user_diversity = 101;
  EXPECT_FALSE(ValidateConfig(config).ok());
  config = SmallConfig();
  config.delta = 0.0;
  EXPECT_FALSE(ValidateConfig(config).ok());
  config = SmallConfig();
  config.smoothing = 0.0;
  EXPECT_FALSE(ValidateConfig(config).ok());
  config = SmallConfig();
  config.alphas = {0.5, 1.2};
  EXPECT_FALSE(ValidateConfig(config).ok());
}

TEST(ConfigTest, BackgroundLargerThanCorpusFails) {
  ScenarioConfig config = SmallConfig();
  config.corpus.pairs_per_topic = 10;
  config.background_size = 50;
  EXPECT_FALSE(World::Create(config).ok());
}

TEST(BackendTest, AnswersTheTopicItHasSeen) {
  BackendSystem backend(TinyCorpus(), 2, 0.001, 1);
  const TopicId c1[] = {1};
  for (int k = 0; k < 5; ++k) backend.Seed(0, Input({0}), c1);
  auto r = backend.Respond(0, std::vector<int>{0});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->topic, 1);
  EXPECT_EQ(r->output, std::vector<int>{0});
  EXPECT_FALSE(r->fallback);
}

TEST(BackendTest, FreshTieGoesToLowestTopic) {
  BackendSystem backend(TinyCorpus(), 1, 0.001, 1);
  const std::vector<double> scores = backend.TopicScores(0, std::vector<int>{3});
  EXPECT_NEAR(scores[0], scores[1], kTol);
  EXPECT_NEAR(scores[1], scores[2], kTol);
  EXPECT_EQ(backend.MostLikelyTopic(0, std::vector<int>{3}), 0);
}

TEST(BackendTest, ScoresMatchHandComputation) {
  const double lambda = 0.5;
  BackendSystem backend(TinyCorpus(), 1, lambda, 1);
  const TopicId c2[] = {2};
  backend.Seed(0, Input({3}), c2);
  // Prior: (0+1)/(1+3), (0+1)/(1+3), (1+1)/(1+3).
  // Keyword s: corpus 1,1,1 plus profile 0,0,1, total 4.
  const std::vector<double> scores = backend.TopicScores(0, std::vector<int>{3, 3});
  const double denom = 4 + 3 * lambda;
  EXPECT_NEAR(scores[0], std::log(0.25) + std::log((1 + lambda) / denom), kTol);
  EXPECT_NEAR(scores[1], std::log(0.25) + std::log((1 + lambda) / denom), kTol);
  EXPECT_NEAR(scores[2], std::log(0.5) + std::log((2 + lambda) / denom), kTol);
}

TEST(BackendTest, SameSeedSameResponses) {
  BackendSystem a(TinyCorpus(), 1, 0.001, 9), b(TinyCorpus(), 1, 0.001, 9);
  for (int k = 0; k < 20; ++k) {
    const std::vector<int> input = {k % 4};
    auto ra = a.Respond(0, input);
    auto rb = b.Respond(0, input);
    ASSERT_TRUE(ra.ok() && rb.ok());
    EXPECT_EQ(ra->topic, rb->topic);
    EXPECT_EQ(ra->output, rb->output);
  }
  EXPECT_FALSE(a.Respond(0, std::vector<int>{}).ok());
  EXPECT_FALSE(a.Respond(1, std::vector<int>{0}).ok());
}

TEST(WorldTest, DiversityCountsAreExact) {
  for (double diversity : {0.0, 50.0, 100.0}) {
    ScenarioConfig config = SmallConfig();
    config.user_diversity = diversity;
    config.proxy_diversity = diversity;
    absl::StatusOr<World> world = World::Create(config);
    ASSERT_TRUE(world.ok()) << world.status();
    int users_c0 = 0;
    for (const UserAgent& u : world->users()) users_c0 += u.topic == 0;
    int proxies_c0 = 0;
    for (const ProxyAgent& p : world->proxies()) proxies_c0 += p.topic == 0;
    EXPECT_EQ(users_c0, static_cast<int>(diversity / 10));
    EXPECT_EQ(proxies_c0, static_cast<int>(std::lround(diversity / 20)));
  }
}

TEST(WorldTest, MatchedProxiesCoverTopicsRoundRobin) {
  absl::StatusOr<World> world = World::Create(SmallConfig());
  ASSERT_TRUE(world.ok());
  std::vector<TopicId> topics;
  for (const ProxyAgent& p : world->proxies()) topics.push_back(p.topic);
  std::sort(topics.begin(), topics.end());
  EXPECT_EQ(topics, (std::vector<TopicId>{1, 2, 3, 4, 5}));
}

TEST(WorldTest, SameSeedSameWorld) {
  ScenarioConfig config = SmallConfig();
  config.noise_ratio = 50;
  absl::StatusOr<World> a = World::Create(config), b = World::Create(config);
  ASSERT_TRUE(a.ok() && b.ok());
  for (int s = 0; s < 3; ++s) {
    ASSERT_TRUE(a->Step().ok());
    ASSERT_TRUE(b->Step().ok());
  }
  ASSERT_EQ(a->global_log().size(), b->global_log().size());
  for (size_t n = 0; n < a->global_log().size(); ++n) {
    EXPECT_EQ(a->global_log()[n], b->global_log()[n]);
  }
  for (size_t u = 0; u < a->users().size(); ++u) {
    EXPECT_EQ(a->users()[u].topic, b->users()[u].topic);
    EXPECT_EQ(a->users()[u].chosen, b->users()[u].chosen);
  }
}

TEST(WorldTest, RunScenarioIsDeterministic) {
  ScenarioConfig config = SmallConfig();
  config.noise_ratio = 100;
  config.user_diversity = 25;
  auto a = RunScenario(config);
  auto b = RunScenario(config);
  ASSERT_TRUE(a.ok() && b.ok());
  ASSERT_EQ(a->records.size(), b->records.size());
  for (size_t k = 0; k < a->records.size(); ++k) {
    ExpectSameRecord(a->records[k], b->records[k]);
  }
}

TEST(WorldTest, ZeroStepsGivesInitialRowOnly) {
  ScenarioConfig config = SmallConfig();
  config.steps = 0;
  auto series = RunScenario(config);
  ASSERT_TRUE(series.ok());
  ASSERT_EQ(series->records.size(), 1u);
  EXPECT_EQ(series->records[0].step, 0);
  EXPECT_EQ(series->records[0].deniability_published.size(), config.alphas.size());
}

TEST(WorldTest, UserStepBookkeeping) {
  absl::StatusOr<World> world = World::Create(SmallConfig());
  ASSERT_TRUE(world.ok());
  std::vector<size_t> logs;
  std::vector<int64_t> pairs;
  for (const ProxyAgent& p : world->proxies()) {
    logs.push_back(p.log.size());
    pairs.push_back(p.counts->num_pairs());
  }
  const size_t user_before = world->users()[0].log.size();
  const int64_t user_pairs = world->users()[0].counts->num_pairs();
  ASSERT_TRUE(world->UserStep(0).ok());

  const UserAgent& user = world->users()[0];
  ASSERT_TRUE(user.last_chosen.has_value());
  const int used = *user.last_chosen;
  for (const ProxyAgent& p : world->proxies()) {
    const size_t grew = p.id == used ? 1 : 0;
    EXPECT_EQ(p.log.size(), logs[p.id] + grew);
    EXPECT_EQ(p.counts->num_pairs(), pairs[p.id] + static_cast<int64_t>(grew));
  }
  EXPECT_EQ(user.log.size(), user_before + 1);
  EXPECT_EQ(user.counts->num_pairs(), user_pairs + 1);
  const InputOutputPair& last = user.log[user.log.size() - 1];
  EXPECT_EQ(last.origin_user, 0);
  EXPECT_EQ(last.via_proxy, used);
  EXPECT_EQ(last.step, 1);
  EXPECT_EQ(world->global_log()[world->global_log().size() - 1], last);
}

TEST(WorldTest, ConservationAndPublishedConsistency) {
  ScenarioConfig config = SmallConfig();
  config.noise_ratio = 100;
  config.user_diversity = 50;
  absl::StatusOr<World> world = World::Create(config);
  ASSERT_TRUE(world.ok());
  for (int s = 0; s < 4; ++s) ASSERT_TRUE(world->Step().ok());

  size_t proxy_total = 0;
  absl::flat_hash_set<int64_t> steps_in_proxies;
  for (const ProxyAgent& p : world->proxies()) {
    proxy_total += p.log.size();
    for (const InputOutputPair& pair : p.log.pairs()) {
      EXPECT_EQ(pair.via_proxy, p.id);
      if (pair.step > 0) EXPECT_TRUE(steps_in_proxies.insert(pair.step).second);
    }
    auto published = p.Published();
    auto expected = PairGivenSequence(*p.counts);
    ASSERT_TRUE(expected.ok());
    EXPECT_LT((published.values() - *expected).cwiseAbs().maxCoeff(), kTol);
    EXPECT_NEAR(published.values().sum(), 1.0, kTol);
  }
  EXPECT_EQ(proxy_total, world->global_log().size());
  EXPECT_EQ(static_cast<int64_t>(steps_in_proxies.size()), world->interactions());

  absl::flat_hash_set<int64_t> steps_in_users;
  for (const UserAgent& u : world->users()) {
    for (size_t n = u.log.background_size(); n < u.log.size(); ++n) {
      EXPECT_EQ(u.log[n].origin_user, u.id);
      EXPECT_TRUE(steps_in_proxies.contains(u.log[n].step));
      EXPECT_TRUE(steps_in_users.insert(u.log[n].step).second);
    }
  }
}

TEST(WorldTest, NoiseFollowsTheAccumulator) {
  for (double ratio : {0.0, 50.0, 200.0}) {
    ScenarioConfig config = SmallConfig();
    config.noise_ratio = ratio;
    config.steps = 4;
    auto series = RunScenario(config);
    ASSERT_TRUE(series.ok());
    int noise = 0;
    int abstains = 0;
    for (const MetricsRecord& r : series->records) {
      noise += r.noise_queries;
      abstains += r.abstain_count;
    }
    ASSERT_EQ(abstains, 0);
    const int others = config.num_proxies - 1;
    EXPECT_EQ(noise, static_cast<int>(ratio / 100 * config.steps) *
                         config.num_users * others);
  }
}

TEST(WorldTest, NoiseNeverCarriesTheUsersOwnQueryKeywords) {
  ScenarioConfig config = SmallConfig();
  config.noise_ratio = 200;
  config.steps = 6;
  absl::StatusOr<World> world = World::Create(config);
  ASSERT_TRUE(world.ok());
  for (int s = 0; s < config.steps; ++s) ASSERT_TRUE(world->Step().ok());
  int audited = 0;
  for (const UserAgent& u : world->users()) {
    absl::flat_hash_set<int64_t> true_steps;
    for (const InputOutputPair& p : u.log.pairs()) true_steps.insert(p.step);
    const std::vector<int>& own = u.query_inputs[u.topic];
    for (const InputOutputPair& p : world->global_log().pairs()) {
      if (p.origin_user != u.id || true_steps.contains(p.step)) continue;
      ++audited;
      for (int i : p.input) {
        EXPECT_EQ(std::find(own.begin(), own.end(), i), own.end());
      }
    }
    EXPECT_EQ(u.log.size(),
              static_cast<size_t>(config.background_size + config.steps));
  }
  EXPECT_GT(audited, 0);
}

TEST(WorldTest, TrueQueriesComeFromTheQuerySet) {
  absl::StatusOr<World> world = World::Create(SmallConfig());
  ASSERT_TRUE(world.ok());
  for (int s = 0; s < 5; ++s) ASSERT_TRUE(world->Step().ok());
  for (const UserAgent& u : world->users()) {
    const SensitiveKeywordSet& theta = u.query_thetas[u.topic - 1];
    absl::flat_hash_set<int> allowed;
    for (const KeywordCell& cell : theta.cells) allowed.insert(cell.input);
    ASSERT_FALSE(u.query_inputs[u.topic].empty());
    for (size_t n = u.log.background_size(); n < u.log.size(); ++n) {
      for (int i : u.log[n].input) EXPECT_TRUE(allowed.contains(i));
    }
  }
}

TEST(WorldTest, ObserverViews) {
  ScenarioConfig config = SmallConfig();
  config.num_proxies = 8;
  absl::StatusOr<World> world = World::Create(config);
  ASSERT_TRUE(world.ok());
  for (int s = 0; s < 3; ++s) ASSERT_TRUE(world->Step().ok());

  std::vector<int> all;
  for (const ProxyAgent& p : world->proxies()) all.push_back(p.id);
  auto everything = world->View(ObserverKind::kProxy, all);
  ASSERT_TRUE(everything.ok());
  ASSERT_EQ(everything->sequence.size(), world->global_log().size());
  for (size_t n = 0; n < world->global_log().size(); ++n) {
    EXPECT_EQ(everything->sequence[n], world->global_log()[n]);
  }
  auto global = world->View(ObserverKind::kGlobal, {});
  ASSERT_TRUE(global.ok());
  EXPECT_EQ(global->sequence.size(), world->global_log().size());
  EXPECT_NEAR(DeniabilityDirect(everything->sequence, world->rule(), 1)->value,
              DeniabilityDirect(global->sequence, world->rule(), 1)->value, kTol);

  size_t sum = 0;
  int untouched = 0;
  for (const ProxyAgent& p : world->proxies()) {
    const int ids[] = {p.id};
    auto view = world->View(ObserverKind::kProxy, ids);
    ASSERT_TRUE(view.ok());
    sum += view->sequence.size();
    EXPECT_EQ(view->sequence.size(), p.log.size());
    if (p.log.size() == p.log.background_size()) {
      ++untouched;
      EXPECT_EQ(view->sequence.size(),
                static_cast<size_t>(config.background_size));
      for (const InputOutputPair& pair : view->sequence.pairs()) {
        EXPECT_EQ(pair.step, 0);
      }
    }
  }
  EXPECT_EQ(sum, world->global_log().size());
  EXPECT_GT(untouched, 0);

  const int bad[] = {8};
  EXPECT_FALSE(world->View(ObserverKind::kProxy, bad).ok());
}

TEST(WorldTest, NoFeasibleProxyMeansAbstain) {
  ScenarioConfig config = SmallConfig();
  config.delta = 1e-9;
  config.alphas = {0.5};
  absl::StatusOr<World> world = World::Create(config);
  ASSERT_TRUE(world.ok());
  int without = 0;
  for (const UserAgent& u : world->users()) without += !u.chosen.has_value();
  ASSERT_GT(without, 0);
  const size_t before = world->global_log().size();
  ASSERT_TRUE(world->Step().ok());
  auto record = world->Metrics();
  ASSERT_TRUE(record.ok());
  int abstained = 0;
  for (const UserAgent& u : world->users()) abstained += !u.chosen.has_value();
  EXPECT_EQ(record->abstain_count, abstained);
  EXPECT_EQ(world->global_log().size(),
            before + static_cast<size_t>(config.num_users - abstained));
}

TEST(WorldTest, TokenLimitGatesQueries) {
  ScenarioConfig config = SmallConfig();
  config.tokens_enabled = true;
  config.tokens_limit = 2;
  config.tokens_window = 100;
  config.steps = 4;
  auto series = RunScenario(config);
  ASSERT_TRUE(series.ok()) << series.status();
  int refusals = 0;
  for (const MetricsRecord& r : series->records) refusals += r.token_refusals;
  EXPECT_EQ(refusals, 2 * config.num_users);
  EXPECT_EQ(series->records[1].token_refusals, 0);
  EXPECT_EQ(series->records[3].abstain_count, config.num_users);
}

TEST(WorldTest, MetricsAreProbabilities) {
  ScenarioConfig config = SmallConfig();
  config.user_diversity = 50;
  config.noise_ratio = 50;
  auto series = RunScenario(config);
  ASSERT_TRUE(series.ok());
  for (const MetricsRecord& r : series->records) {
    for (const std::optional<double>& v :
         {r.selection_accuracy, r.utility_loss, r.deniability_direct_global,
          r.deniability_direct_proxy}) {
      ASSERT_TRUE(v.has_value());
      EXPECT_GE(*v, 0.0);
      EXPECT_LE(*v, 1.0);
    }
  }
}

}  // namespace
}  // namespace groupid
