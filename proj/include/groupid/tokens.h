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

#ifndef GROUPID_TOKENS_H_
#define GROUPID_TOKENS_H_

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "absl/container/flat_hash_map.h"
#include "absl/container/flat_hash_set.h"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace groupid {

inline constexpr int kSerialBytes = 16;
inline constexpr int kDefaultIssuanceLimit = 100;

// Raw payload bytes. Payloads cross the harness as fixed-width lowercase hex.
using Bytes = std::string;

std::string ToHex(absl::string_view bytes);
absl::StatusOr<Bytes> FromHex(absl::string_view hex);

struct BlindedMessage {
  Bytes payload;
  // Secret needed to unblind the issuer's signature.
  Bytes unblinding_secret;
};

// Chaum-style blind signature. The issuer only ever sees blinded payloads.
class BlindSignatureScheme {
 public:
  virtual ~BlindSignatureScheme() = default;

  virtual absl::StatusOr<BlindedMessage> Blind(absl::string_view serial,
                                               std::mt19937_64& rng) const = 0;
  virtual absl::StatusOr<Bytes> SignBlinded(absl::string_view payload) const = 0;
  virtual absl::StatusOr<Bytes> Unblind(absl::string_view blind_signature,
                                        absl::string_view secret) const = 0;
  virtual bool Verify(absl::string_view serial,
                      absl::string_view signature) const = 0;
  // Width in bytes of payloads and signatures.
  virtual int payload_bytes() const = 0;
};

// RSA blind signatures with a SHA-256 full-domain hash.
class RsaBlindSignatureScheme : public BlindSignatureScheme {
 public:
  static absl::StatusOr<std::unique_ptr<RsaBlindSignatureScheme>> Generate(
      int modulus_bits);
  ~RsaBlindSignatureScheme() override;

  absl::StatusOr<BlindedMessage> Blind(absl::string_view serial,
                                       std::mt19937_64& rng) const override;
  absl::StatusOr<Bytes> SignBlinded(absl::string_view payload) const override;
  absl::StatusOr<Bytes> Unblind(absl::string_view blind_signature,
                                absl::string_view secret) const override;
  bool Verify(absl::string_view serial,
              absl::string_view signature) const override;
  int payload_bytes() const override;

 private:
  struct Key;
  explicit RsaBlindSignatureScheme(std::unique_ptr<Key> key);

  std::unique_ptr<Key> key_;
};

// Non-cryptographic stand-in: multiplicative blinding modulo 2^61 - 1 with a
// secret issuer scalar. Deterministic and fast.
class MockBlindSignatureScheme : public BlindSignatureScheme {
 public:
  explicit MockBlindSignatureScheme(uint64_t issuer_secret);

  absl::StatusOr<BlindedMessage> Blind(absl::string_view serial,
                                       std::mt19937_64& rng) const override;
  absl::StatusOr<Bytes> SignBlinded(absl::string_view payload) const override;
  absl::StatusOr<Bytes> Unblind(absl::string_view blind_signature,
                                absl::string_view secret) const override;
  bool Verify(absl::string_view serial,
              absl::string_view signature) const override;
  int payload_bytes() const override { return 8; }

 private:
  uint64_t key_;
};

enum class TokenState { kMinted, kBlinded, kSigned, kRedeemed };

class SessionToken;
class SpentRegistry;

// Mints `count` fresh tokens for `user` within `window` and blinds them.
absl::StatusOr<std::vector<SessionToken>> MintAndBlind(
    const BlindSignatureScheme& scheme, SpentRegistry& registry, int user,
    int64_t window, int count, std::mt19937_64& rng);

class SessionToken {
 public:
  TokenState state() const { return state_; }
  const Bytes& serial() const { return serial_; }
  const Bytes& blinded_payload() const { return blinded_payload_; }
  const Bytes& signature() const { return signature_; }

  // What the user sends to the issuer. Never contains the serial.
  absl::StatusOr<Bytes> IssuerRequest() const;
  // Stores the issuer's answer, unblinds it and moves to kSigned.
  absl::Status AcceptBlindSignature(const BlindSignatureScheme& scheme,
                                    absl::string_view blind_signature);

  // One fixed-width hex line: state serial blinded signature.
  std::string DebugLine() const;

 private:
  friend absl::StatusOr<std::vector<SessionToken>> MintAndBlind(
      const BlindSignatureScheme&, SpentRegistry&, int, int64_t, int,
      std::mt19937_64&);
  friend class SpentRegistry;

  TokenState state_ = TokenState::kMinted;
  Bytes serial_;
  Bytes blinded_payload_;
  Bytes unblinding_secret_;
  Bytes signature_;
};

// Issuer-side database: redeemed serials and per-user issuance counters.
// Thread-safe; redeem is an atomic check-and-insert.
class SpentRegistry {
 public:
  explicit SpentRegistry(int issuance_limit = kDefaultIssuanceLimit)
      : issuance_limit_(issuance_limit) {}

  // Reserves `count` tokens for user in the window, or refuses.
  absl::Status ReserveIssuance(int user, int64_t window, int count);
  int IssuedInWindow(int user, int64_t window) const;

  // Accepts iff the token is signed, its signature verifies and its serial
  // has not been seen. On accept the token moves to kRedeemed.
  bool Redeem(const BlindSignatureScheme& scheme, SessionToken& token);

  size_t size() const;
  bool Contains(absl::string_view serial) const;

 private:
  mutable std::mutex mu_;
  int issuance_limit_;
  absl::flat_hash_set<Bytes> spent_;
  absl::flat_hash_map<std::pair<int, int64_t>, int> issued_;
};

// Issuer side: signs a blinded request.
absl::StatusOr<Bytes> SignBlinded(const BlindSignatureScheme& scheme,
                                  absl::string_view request);

}  // namespace groupid

#endif  // GROUPID_TOKENS_H_
