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

#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.h"

namespace groupid {
namespace {

constexpr double kTol = 1e-9;

void ExpectGridNear(const Eigen::MatrixXd& got, const oracle::Grid& want) {
  ASSERT_EQ(got.rows(), static_cast<int>(want.size()));
  for (size_t i = 0; i < want.size(); ++i) {
    ASSERT_EQ(got.cols(), static_cast<int>(want[i].size()));
    for (size_t j = 0; j < want[i].size(); ++j) {
      EXPECT_NEAR(got(i, j), want[i][j], kTol) << "cell " << i << "," << j;
    }
  }
}

CoOccurrenceCounts Build(const oracle::RandomCorpus& rc) {
  return *BuildCounts(rc.pairs, rc.num_topics, rc.nx, rc.ny);
}

InputOutputPair Pair(std::vector<int> in, std::vector<int> out) {
  InputOutputPair p;
  p.input = std::move(in);
  p.output = std::move(out);
  return p;
}

TEST(CountsTest, RandomCorporaMatchRecount) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
    const CoOccurrenceCounts counts = Build(rc);
    for (TopicId c = 0; c < rc.num_topics; ++c) {
      const oracle::Grid n = oracle::Count(rc, c, 0.0);
      const oracle::Grid o = oracle::Presence(rc, c);
      for (int i = 0; i < rc.nx; ++i) {
        for (int j = 0; j < rc.ny; ++j) {
          EXPECT_EQ(counts.count(c, i, j), n[i][j]);
          EXPECT_EQ(counts.presence(c, i, j), static_cast<int64_t>(o[i][j]));
        }
      }
      EXPECT_EQ(counts.topic_total(c), oracle::Sum(n));
      EXPECT_EQ(counts.presence_total(c),
                static_cast<int64_t>(oracle::Sum(o)));
    }
    EXPECT_EQ(counts.total(), oracle::Sum(oracle::JointCount(rc, 0.0)));
  }
}

TEST(CountsTest, IncrementalAddEqualsBatch) {
  std::mt19937_64 rng(12);
  const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
  CoOccurrenceCounts inc = *CoOccurrenceCounts::Create(rc.num_topics, rc.nx, rc.ny);
  for (const LabelledPair& lp : rc.pairs) {
    ASSERT_TRUE(inc.Add(lp.pair, lp.labels).ok());
  }
  const CoOccurrenceCounts batch = Build(rc);
  EXPECT_TRUE(inc.JointCountMatrix().isApprox(batch.JointCountMatrix()));
  EXPECT_EQ(inc.num_pairs(), static_cast<int64_t>(rc.pairs.size()));
}

TEST(CountsTest, RejectsUnknownFeaturesAndTopics) {
  CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(2, 2, 2);
  const TopicId one[] = {1};
  const TopicId bad[] = {2};
  EXPECT_FALSE(counts.Add(Pair({2}, {0}), one).ok());
  EXPECT_FALSE(counts.Add(Pair({0}, {5}), one).ok());
  EXPECT_FALSE(counts.Add(Pair({0}, {0}), bad).ok());
  EXPECT_FALSE(counts.Add(Pair({0}, {0}), {}).ok());
}

TEST(CountsTest, RejectsRepeatedLabelAndLeavesCountsAlone) {
  CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(2, 2, 2);
  const TopicId twice[] = {1, 0, 1};
  EXPECT_EQ(counts.Add(Pair({0}, {0}), twice).code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_EQ(counts.num_pairs(), 0);
  EXPECT_EQ(counts.presence(1, 0, 0), 0);
}

TEST(SmoothingTest, AllZeroTwoByTwoBecomesUniform) {
  CoOccurrenceCounts counts =
      *LaplaceSmooth(*CoOccurrenceCounts::Create(1, 2, 2), 1.0);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_EQ(counts.count(0, i, j), 1.0);
  }
  EXPECT_EQ(counts.total(), 4.0);
  const Eigen::MatrixXd p = *PairGivenTopic(counts, 0);
  EXPECT_TRUE(p.isApproxToConstant(0.25));
}

TEST(SmoothingTest, AddsLambdaToObservedCell) {
  CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(1, 2, 2);
  const TopicId zero[] = {0};
  ASSERT_TRUE(counts.Add(Pair({0, 0, 0}, {1}), zero).ok());
  counts = *LaplaceSmooth(std::move(counts), 0.5);
  EXPECT_EQ(counts.count(0, 0, 1), 3.5);
  EXPECT_EQ(counts.presence(0, 0, 1), 1);
  EXPECT_EQ(counts.presence(0, 1, 1), 0);
}

TEST(SmoothingTest, RejectsNonPositiveAndDoubleSmoothing) {
  EXPECT_FALSE(LaplaceSmooth(*CoOccurrenceCounts::Create(1, 2, 2), 0.0).ok());
  EXPECT_FALSE(LaplaceSmooth(*CoOccurrenceCounts::Create(1, 2, 2), -1.0).ok());
  CoOccurrenceCounts once =
      *LaplaceSmooth(*CoOccurrenceCounts::Create(1, 2, 2), 1.0);
  EXPECT_FALSE(LaplaceSmooth(std::move(once), 1.0).ok());
}

TEST(SmoothingTest, PreservesOrdering) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
    const CoOccurrenceCounts raw = Build(rc);
    const CoOccurrenceCounts smooth = *LaplaceSmooth(Build(rc), 0.7);
    for (TopicId c = 0; c < rc.num_topics; ++c) {
      const Eigen::MatrixXd a = raw.CountMatrix(c);
      const Eigen::MatrixXd b = smooth.CountMatrix(c);
      for (int k = 0; k < a.size(); ++k) {
        for (int l = 0; l < a.size(); ++l) {
          if (a(k) <= a(l)) EXPECT_LE(b(k), b(l));
        }
      }
      EXPECT_GE(b.minCoeff(), 0.7);
    }
  }
}

TEST(EstimatorTest, SingleObservationIsDelta) {
  CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(1, 2, 3);
  const TopicId zero[] = {0};
  ASSERT_TRUE(counts.Add(Pair({0}, {0}), zero).ok());
  const Eigen::MatrixXd p = *PairGivenTopic(counts, 0);
  EXPECT_EQ(p(0, 0), 1.0);
  EXPECT_EQ(p.sum(), 1.0);
}

TEST(EstimatorTest, TopicPriorDirectRatio) {
  CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(2, 1, 1);
  const TopicId zero[] = {0};
  const TopicId one[] = {1};
  for (int k = 0; k < 3; ++k) ASSERT_TRUE(counts.Add(Pair({0}, {0}), zero).ok());
  ASSERT_TRUE(counts.Add(Pair({0}, {0}), one).ok());
  const std::vector<double> prior = *TopicPrior(counts);
  EXPECT_DOUBLE_EQ(prior[0], 0.75);
  EXPECT_DOUBLE_EQ(prior[1], 0.25);
}

TEST(EstimatorTest, SmoothedPriorMatchesClosedForm) {
  const int k = 3;
  const double lambda = 0.5;
  CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(2, k, k);
  const TopicId zero[] = {0};
  const TopicId one[] = {1};
  ASSERT_TRUE(counts.Add(Pair({0, 1}, {2}), zero).ok());
  ASSERT_TRUE(counts.Add(Pair({0}, {0, 0, 1}), one).ok());
  ASSERT_TRUE(counts.Add(Pair({2}, {2}), one).ok());
  const double n0 = 2.0, n1 = 4.0;
  counts = *LaplaceSmooth(std::move(counts), lambda);
  const std::vector<double> prior = *TopicPrior(counts);
  const double k2 = k * k;
  EXPECT_NEAR(prior[0], (n0 + lambda * k2) / (n0 + n1 + 2 * lambda * k2), kTol);
  EXPECT_NEAR(prior[1], (n1 + lambda * k2) / (n0 + n1 + 2 * lambda * k2), kTol);
}

TEST(EstimatorTest, UnsmoothedEmptyTopicFails) {
  const CoOccurrenceCounts counts = *CoOccurrenceCounts::Create(2, 2, 2);
  EXPECT_FALSE(PairGivenTopic(counts, 0).ok());
  EXPECT_FALSE(PairGivenSequence(counts).ok());
  EXPECT_FALSE(PairGivenTopic(counts, 7).ok());
}

TEST(EstimatorTest, RandomCorporaMatchOracle) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 60; ++trial) {
    const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
    const double lambda = trial % 2 == 0 ? 1.0 : 0.25;
    const CoOccurrenceCounts counts = *LaplaceSmooth(Build(rc), lambda);
    for (TopicId c = 0; c < rc.num_topics; ++c) {
      ExpectGridNear(*PairGivenTopic(counts, c),
                     oracle::PairGivenTopic(rc, c, lambda));
    }
    ExpectGridNear(*PairGivenSequence(counts),
                   oracle::PairGivenSequence(rc, lambda));
    const std::vector<double> prior = *TopicPrior(counts);
    const std::vector<double> want = oracle::TopicPrior(rc, lambda);
    for (TopicId c = 0; c < rc.num_topics; ++c) {
      EXPECT_NEAR(prior[c], want[c], kTol);
    }

    const TopicConditionalTable as_written =
        TopicGivenPair(counts, ConditionalMode::kAsWritten);
    const TopicConditionalTable bayes =
        TopicGivenPair(counts, ConditionalMode::kBayesRenormalized);
    for (TopicId c = 0; c < rc.num_topics; ++c) {
      ExpectGridNear(as_written.per_topic[c], oracle::ConditionalAsWritten(rc, c));
      ExpectGridNear(bayes.per_topic[c], oracle::ConditionalBayes(rc, c));
    }
  }
}

TEST(EstimatorTest, BayesConditionalSumsToOneOnObservedCells) {
  std::mt19937_64 rng(15);
  const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
  const CoOccurrenceCounts counts = Build(rc);
  const TopicConditionalTable table =
      TopicGivenPair(counts, ConditionalMode::kBayesRenormalized);
  for (const KeywordCell& cell : counts.ObservedCells()) {
    double sum = 0.0;
    for (const Eigen::MatrixXd& m : table.per_topic) sum += m(cell.input, cell.output);
    EXPECT_NEAR(sum, 1.0, kTol);
  }
}

TEST(EstimatorTest, ConditionalModeNamesRoundTrip) {
  for (ConditionalMode mode :
       {ConditionalMode::kAsWritten, ConditionalMode::kBayesRenormalized}) {
    EXPECT_EQ(*ParseConditionalMode(ConditionalModeName(mode)), mode);
  }
  EXPECT_FALSE(ParseConditionalMode("posterior").ok());
}

TEST(MixtureTest, MatchesOracleAndTotalProbability) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 60; ++trial) {
    const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
    const CoOccurrenceCounts counts = *LaplaceSmooth(Build(rc), 1.0);
    const Eigen::MatrixXd joint = *PairGivenSequence(counts);
    const TopicConditionalTable table =
        TopicGivenPair(counts, ConditionalMode::kBayesRenormalized);
    for (TopicId c = 0; c < rc.num_topics; ++c) {
      const double got = *MixtureProbability(table.per_topic[c], joint);
      EXPECT_NEAR(got,
                  oracle::Mixture(oracle::ConditionalBayes(rc, c),
                                  oracle::PairGivenSequence(rc, 1.0)),
                  kTol);
      EXPECT_GE(got, 0.0);
      EXPECT_LE(got, 1.0);
    }
    // A membership of one everywhere recovers the total mass.
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(rc.nx, rc.ny);
    EXPECT_NEAR(*MixtureProbability(ones, joint), 1.0, kTol);
  }
}

TEST(MixtureTest, ShapeMismatchFails) {
  EXPECT_FALSE(MixtureProbability(Eigen::MatrixXd::Ones(2, 2),
                                  Eigen::MatrixXd::Ones(2, 3))
                   .ok());
}

TEST(PublishedTest, ValidatesMass) {
  Eigen::MatrixXd m(1, 2);
  m << 0.5, 0.5;
  EXPECT_TRUE(PublishedDistribution::Create(m, 0, 0).ok());
  m << 0.6, 0.5;
  EXPECT_FALSE(PublishedDistribution::Create(m, 0, 0).ok());
  m << 1.5, -0.5;
  EXPECT_FALSE(PublishedDistribution::Create(m, 0, 0).ok());
}

TEST(PublishedTest, FromCountsEqualsPairGivenSequence) {
  std::mt19937_64 rng(17);
  const oracle::RandomCorpus rc = oracle::MakeRandomCorpus(rng);
  const CoOccurrenceCounts counts = *LaplaceSmooth(Build(rc), 1.0);
  const PublishedDistribution pub = *PublishedDistribution::FromCounts(counts, 3, 9);
  ExpectGridNear(pub.values(), oracle::PairGivenSequence(rc, 1.0));
  EXPECT_EQ(pub.proxy_id(), 3);
  EXPECT_EQ(pub.step(), 9);
}

TEST(PublishedTest, FromMassSnapshotSurvivesWriterCopy) {
  auto live = std::make_shared<Eigen::MatrixXd>(Eigen::MatrixXd::Ones(2, 2));
  const PublishedDistribution snap = *PublishedDistribution::FromMass(live, 4.0, 0, 1);
  EXPECT_DOUBLE_EQ(snap.at(0, 0), 0.25);
  EXPECT_FALSE(PublishedDistribution::FromMass(live, 0.0, 0, 1).ok());
}

TEST(FormatTest, TwelveSignificantDigits) {
  Eigen::MatrixXd m(2, 2);
  m << 1.0 / 3.0, 0.5, 0.0, 2.0 / 3.0;
  EXPECT_EQ(FormatDistributionCsv(m),
            "0.333333333333,0.5\n0,0.666666666667\n");
}

}  // namespace
}  // namespace groupid
