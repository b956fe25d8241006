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

#include "groupid/tokens.h"

#include <atomic>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "absl/container/flat_hash_set.h"

namespace groupid {
namespace {

const BlindSignatureScheme& Rsa() {
  static const auto* scheme = RsaBlindSignatureScheme::Generate(1024)->release();
  return *scheme;
}

const BlindSignatureScheme& Mock() {
  static const MockBlindSignatureScheme scheme(0x5eed1234abcdULL);
  return scheme;
}

class SchemeTest : public ::testing::TestWithParam<bool> {
 protected:
  const BlindSignatureScheme& scheme() const { return GetParam() ? Rsa() : Mock(); }
};

std::vector<SessionToken> SignedTokens(const BlindSignatureScheme& scheme,
                                       SpentRegistry& registry, int count,
                                       std::mt19937_64& rng) {
  auto tokens = MintAndBlind(scheme, registry, 0, 0, count, rng);
  EXPECT_TRUE(tokens.ok());
  for (SessionToken& t : *tokens) {
    auto blind = SignBlinded(scheme, *t.IssuerRequest());
    EXPECT_TRUE(blind.ok());
    EXPECT_TRUE(t.AcceptBlindSignature(scheme, *blind).ok());
  }
  return *std::move(tokens);
}

TEST_P(SchemeTest, MintOneIsBlinded) {
  SpentRegistry registry;
  std::mt19937_64 rng(1);
  auto tokens = MintAndBlind(scheme(), registry, 3, 0, 1, rng);
  ASSERT_TRUE(tokens.ok());
  ASSERT_EQ(tokens->size(), 1u);
  const SessionToken& t = (*tokens)[0];
  EXPECT_EQ(t.state(), TokenState::kBlinded);
  EXPECT_EQ(t.serial().size(), static_cast<size_t>(kSerialBytes));
  EXPECT_EQ(t.blinded_payload().size(),
            static_cast<size_t>(scheme().payload_bytes()));
  EXPECT_EQ(t.IssuerRequest()->find(t.serial()), std::string::npos);
  EXPECT_EQ(registry.IssuedInWindow(3, 0), 1);
}

TEST_P(SchemeTest, SameSerialTwoFactorsDiffer) {
  std::mt19937_64 rng(2);
  const std::string serial(kSerialBytes, 'x');
  auto a = scheme().Blind(serial, rng);
  auto b = scheme().Blind(serial, rng);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_NE(a->payload, b->payload);
}

TEST_P(SchemeTest, RoundTripVerifies) {
  SpentRegistry registry;
  std::mt19937_64 rng(3);
  for (const SessionToken& t : SignedTokens(scheme(), registry, 20, rng)) {
    EXPECT_EQ(t.state(), TokenState::kSigned);
    EXPECT_TRUE(scheme().Verify(t.serial(), t.signature()));
  }
}

TEST_P(SchemeTest, BitFlipsInvalidate) {
  SpentRegistry registry;
  std::mt19937_64 rng(4);
  for (const SessionToken& t : SignedTokens(scheme(), registry, 5, rng)) {
    for (size_t byte = 0; byte < t.serial().size(); ++byte) {
      for (int bit = 0; bit < 8; bit += 3) {
        std::string serial = t.serial();
        serial[byte] = static_cast<char>(serial[byte] ^ (1 << bit));
        EXPECT_FALSE(scheme().Verify(serial, t.signature()));
      }
    }
    std::string sig = t.signature();
    sig[sig.size() / 2] = static_cast<char>(sig[sig.size() / 2] ^ 1);
    EXPECT_FALSE(scheme().Verify(t.serial(), sig));
  }
}

TEST_P(SchemeTest, DoubleRedeemRejected) {
  SpentRegistry registry;
  std::mt19937_64 rng(5);
  std::vector<SessionToken> tokens = SignedTokens(scheme(), registry, 10, rng);
  for (SessionToken& t : tokens) {
    SessionToken copy = t;
    EXPECT_TRUE(registry.Redeem(scheme(), t));
    EXPECT_EQ(t.state(), TokenState::kRedeemed);
    EXPECT_FALSE(registry.Redeem(scheme(), t));
    EXPECT_FALSE(registry.Redeem(scheme(), copy));
    EXPECT_TRUE(registry.Contains(t.serial()));
  }
  EXPECT_EQ(registry.size(), tokens.size());
}

TEST_P(SchemeTest, UnsignedTokenRejected) {
  SpentRegistry registry;
  std::mt19937_64 rng(6);
  auto tokens = MintAndBlind(scheme(), registry, 0, 0, 1, rng);
  ASSERT_TRUE(tokens.ok());
  EXPECT_FALSE(registry.Redeem(scheme(), (*tokens)[0]));
  EXPECT_EQ(registry.size(), 0u);
}

TEST_P(SchemeTest, TranscriptsShareNoValues) {
  SpentRegistry registry(1000);
  std::mt19937_64 rng(7);
  absl::flat_hash_set<std::string> issuer, redemption;
  for (SessionToken& t : SignedTokens(scheme(), registry, 200, rng)) {
    issuer.insert(ToHex(t.blinded_payload()));
    redemption.insert(ToHex(t.serial()));
    redemption.insert(ToHex(t.signature()));
    ASSERT_TRUE(registry.Redeem(scheme(), t));
  }
  for (const std::string& v : issuer) EXPECT_FALSE(redemption.contains(v));
  EXPECT_EQ(issuer.size(), 200u);
}

INSTANTIATE_TEST_SUITE_P(Schemes, SchemeTest, ::testing::Bool(),
                         [](const auto& info) {
                           return info.param ? "Rsa" : "Mock";
                         });

TEST(TokensTest, WrongIssuerKeyRejected) {
  auto other = RsaBlindSignatureScheme::Generate(1024);
  ASSERT_TRUE(other.ok());
  SpentRegistry registry;
  std::mt19937_64 rng(8);
  for (SessionToken& t : SignedTokens(Rsa(), registry, 5, rng)) {
    EXPECT_FALSE((*other)->Verify(t.serial(), t.signature()));
    EXPECT_FALSE(registry.Redeem(**other, t));
  }
  const MockBlindSignatureScheme mock_other(42);
  for (SessionToken& t : SignedTokens(Mock(), registry, 5, rng)) {
    EXPECT_FALSE(mock_other.Verify(t.serial(), t.signature()));
  }
}

TEST(TokensTest, IssuanceLimitPerWindow) {
  SpentRegistry registry(10);
  std::mt19937_64 rng(9);
  EXPECT_TRUE(MintAndBlind(Mock(), registry, 1, 0, 10, rng).ok());
  EXPECT_FALSE(MintAndBlind(Mock(), registry, 1, 0, 1, rng).ok());
  EXPECT_TRUE(MintAndBlind(Mock(), registry, 1, 1, 10, rng).ok());
  EXPECT_TRUE(MintAndBlind(Mock(), registry, 2, 0, 10, rng).ok());
  EXPECT_FALSE(MintAndBlind(Mock(), registry, 3, 0, 11, rng).ok());
  EXPECT_FALSE(MintAndBlind(Mock(), registry, 3, 0, 0, rng).ok());
  EXPECT_EQ(registry.IssuedInWindow(1, 0), 10);
  EXPECT_EQ(registry.IssuedInWindow(3, 0), 0);
}

TEST(TokensTest, MalformedPayloadFails) {
  EXPECT_FALSE(SignBlinded(Rsa(), "short").ok());
  EXPECT_FALSE(SignBlinded(Mock(), "abc").ok());
}

TEST(TokensTest, HexRoundTrip) {
  const std::string raw("\x00\x01\xfe\xff", 4);
  EXPECT_EQ(ToHex(raw), "0001feff");
  EXPECT_EQ(*FromHex("0001feff"), raw);
  EXPECT_FALSE(FromHex("abc").ok());
  EXPECT_FALSE(FromHex("zz").ok());
}

TEST(TokensTest, DebugLineIsFixedWidth) {
  SpentRegistry registry;
  std::mt19937_64 rng(10);
  std::vector<SessionToken> tokens = SignedTokens(Mock(), registry, 3, rng);
  const size_t width = tokens[0].DebugLine().size();
  for (const SessionToken& t : tokens) {
    EXPECT_EQ(t.DebugLine().size(), width);
    EXPECT_EQ(t.DebugLine().rfind("signed ", 0), 0u);
  }
}

TEST(TokensTest, ConcurrentRedeemAcceptsEachSerialOnce) {
  SpentRegistry registry(1000);
  std::mt19937_64 rng(11);
  const std::vector<SessionToken> tokens = SignedTokens(Mock(), registry, 500, rng);
  std::atomic<int> accepted{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&] {
      for (SessionToken t : tokens) {
        if (registry.Redeem(Mock(), t)) ++accepted;
      }
    });
  }
  for (std::thread& t : threads) t.join();
  EXPECT_EQ(accepted.load(), 500);
  EXPECT_EQ(registry.size(), 500u);
}

}  // namespace
}  // namespace groupid
