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

#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/rsa.h>
#include <openssl/sha.h>

#include <array>

#include "absl/strings/ascii.h"
#include "absl/strings/escaping.h"
#include "absl/strings/str_cat.h"

namespace groupid {
namespace {

constexpr uint64_t kMockPrime = (uint64_t{1} << 61) - 1;

struct BnDeleter {
  void operator()(BIGNUM* bn) const { BN_clear_free(bn); }
};
struct CtxDeleter {
  void operator()(BN_CTX* ctx) const { BN_CTX_free(ctx); }
};
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;
using CtxPtr = std::unique_ptr<BN_CTX, CtxDeleter>;

BnPtr NewBn() { return BnPtr(BN_new()); }

BnPtr BytesToBn(absl::string_view bytes) {
  return BnPtr(BN_bin2bn(reinterpret_cast<const unsigned char*>(bytes.data()),
                         static_cast<int>(bytes.size()), nullptr));
}

Bytes BnToBytes(const BIGNUM* bn, int width) {
  Bytes out(width, '\0');
  BN_bn2binpad(bn, reinterpret_cast<unsigned char*>(out.data()), width);
  return out;
}

Bytes RandomBytes(std::mt19937_64& rng, int n) {
  Bytes out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    uint64_t word = rng();
    for (int k = 0; k < 8 && static_cast<int>(out.size()) < n; ++k) {
      out.push_back(static_cast<char>(word & 0xff));
      word >>= 8;
    }
  }
  return out;
}

std::array<unsigned char, SHA256_DIGEST_LENGTH> Sha256(absl::string_view data,
                                                       uint32_t counter) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest;
  std::string buffer = {static_cast<char>(counter >> 24),
                        static_cast<char>(counter >> 16),
                        static_cast<char>(counter >> 8),
                        static_cast<char>(counter)};
  buffer.append(data.data(), data.size());
  SHA256(reinterpret_cast<const unsigned char*>(buffer.data()), buffer.size(),
         digest.data());
  return digest;
}

uint64_t MulMod(uint64_t a, uint64_t b) {
  return static_cast<uint64_t>(static_cast<unsigned __int128>(a) * b %
                               kMockPrime);
}

uint64_t PowMod(uint64_t base, uint64_t exp) {
  uint64_t result = 1;
  base %= kMockPrime;
  while (exp > 0) {
    if (exp & 1) result = MulMod(result, base);
    base = MulMod(base, base);
    exp >>= 1;
  }
  return result;
}

Bytes U64ToBytes(uint64_t v) {
  Bytes out(8, '\0');
  for (int k = 7; k >= 0; --k) {
    out[k] = static_cast<char>(v & 0xff);
    v >>= 8;
  }
  return out;
}

absl::StatusOr<uint64_t> BytesToU64(absl::string_view bytes) {
  if (bytes.size() != 8) {
    return absl::InvalidArgumentError(
        absl::StrCat("expected an 8-byte payload, got ", bytes.size()));
  }
  uint64_t v = 0;
  for (char ch : bytes) v = (v << 8) | static_cast<unsigned char>(ch);
  if (v == 0 || v >= kMockPrime) {
    return absl::InvalidArgumentError("payload out of range");
  }
  return v;
}

uint64_t MockHash(absl::string_view serial) {
  auto digest = Sha256(serial, 0);
  uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v = (v << 8) | digest[k];
  v %= kMockPrime;
  return v == 0 ? 1 : v;
}

}  // namespace

std::string ToHex(absl::string_view bytes) { return absl::BytesToHexString(bytes); }

absl::StatusOr<Bytes> FromHex(absl::string_view hex) {
  if (hex.size() % 2 != 0) {
    return absl::InvalidArgumentError("hex payload has odd length");
  }
  for (char ch : hex) {
    if (!absl::ascii_isxdigit(static_cast<unsigned char>(ch))) {
      return absl::InvalidArgumentError("payload is not hex");
    }
  }
  return absl::HexStringToBytes(hex);
}

struct RsaBlindSignatureScheme::Key {
  BnPtr n;
  BnPtr e;
  BnPtr d;
  int bytes = 0;

  // SHA-256 counter-mode expansion of the serial, reduced modulo n.
  BnPtr FullDomainHash(absl::string_view serial, BN_CTX* ctx) const {
    Bytes expanded;
    for (uint32_t counter = 0; static_cast<int>(expanded.size()) < bytes;
         ++counter) {
      auto digest = Sha256(serial, counter);
      expanded.append(reinterpret_cast<const char*>(digest.data()),
                      digest.size());
    }
    expanded.resize(bytes);
    BnPtr m = BytesToBn(expanded);
    BN_mod(m.get(), m.get(), n.get(), ctx);
    return m;
  }
};

RsaBlindSignatureScheme::RsaBlindSignatureScheme(std::unique_ptr<Key> key)
    : key_(std::move(key)) {}

RsaBlindSignatureScheme::~RsaBlindSignatureScheme() = default;

absl::StatusOr<std::unique_ptr<RsaBlindSignatureScheme>>
RsaBlindSignatureScheme::Generate(int modulus_bits) {
  if (modulus_bits < 512) {
    return absl::InvalidArgumentError("RSA modulus must be at least 512 bits");
  }
  EVP_PKEY* pkey = EVP_RSA_gen(static_cast<unsigned int>(modulus_bits));
  if (pkey == nullptr) {
    return absl::InternalError("RSA key generation failed");
  }
  auto key = std::make_unique<Key>();
  BIGNUM* n = nullptr;
  BIGNUM* e = nullptr;
  BIGNUM* d = nullptr;
  const bool ok = EVP_PKEY_get_bn_param(pkey, OSSL_PKEY_PARAM_RSA_N, &n) &&
                  EVP_PKEY_get_bn_param(pkey, OSSL_PKEY_PARAM_RSA_E, &e) &&
                  EVP_PKEY_get_bn_param(pkey, OSSL_PKEY_PARAM_RSA_D, &d);
  EVP_PKEY_free(pkey);
  key->n.reset(n);
  key->e.reset(e);
  key->d.reset(d);
  if (!ok) return absl::InternalError("could not read RSA key parameters");
  key->bytes = BN_num_bytes(key->n.get());
  return std::unique_ptr<RsaBlindSignatureScheme>(
      new RsaBlindSignatureScheme(std::move(key)));
}

int RsaBlindSignatureScheme::payload_bytes() const { return key_->bytes; }

absl::StatusOr<BlindedMessage> RsaBlindSignatureScheme::Blind(
    absl::string_view serial, std::mt19937_64& rng) const {
  CtxPtr ctx(BN_CTX_new());
  BnPtr m = key_->FullDomainHash(serial, ctx.get());
  BnPtr r_inv;
  BnPtr r;
  for (int attempt = 0; attempt < 64; ++attempt) {
    r = BytesToBn(RandomBytes(rng, key_->bytes));
    BN_mod(r.get(), r.get(), key_->n.get(), ctx.get());
    if (BN_is_zero(r.get()) || BN_is_one(r.get())) continue;
    r_inv.reset(BN_mod_inverse(nullptr, r.get(), key_->n.get(), ctx.get()));
    if (r_inv != nullptr) break;
  }
  if (r_inv == nullptr) {
    return absl::InternalError("could not draw an invertible blinding factor");
  }
  BnPtr re = NewBn();
  BN_mod_exp(re.get(), r.get(), key_->e.get(), key_->n.get(), ctx.get());
  BnPtr blinded = NewBn();
  BN_mod_mul(blinded.get(), m.get(), re.get(), key_->n.get(), ctx.get());
  return BlindedMessage{BnToBytes(blinded.get(), key_->bytes),
                        BnToBytes(r_inv.get(), key_->bytes)};
}

absl::StatusOr<Bytes> RsaBlindSignatureScheme::SignBlinded(
    absl::string_view payload) const {
  if (static_cast<int>(payload.size()) != key_->bytes) {
    return absl::InvalidArgumentError("blinded payload has the wrong width");
  }
  BnPtr x = BytesToBn(payload);
  if (BN_cmp(x.get(), key_->n.get()) >= 0 || BN_is_zero(x.get())) {
    return absl::InvalidArgumentError("blinded payload out of range");
  }
  CtxPtr ctx(BN_CTX_new());
  BnPtr s = NewBn();
  BN_mod_exp(s.get(), x.get(), key_->d.get(), key_->n.get(), ctx.get());
  return BnToBytes(s.get(), key_->bytes);
}

absl::StatusOr<Bytes> RsaBlindSignatureScheme::Unblind(
    absl::string_view blind_signature, absl::string_view secret) const {
  if (static_cast<int>(blind_signature.size()) != key_->bytes ||
      static_cast<int>(secret.size()) != key_->bytes) {
    return absl::InvalidArgumentError("signature or secret has the wrong width");
  }
  CtxPtr ctx(BN_CTX_new());
  BnPtr s_blind = BytesToBn(blind_signature);
  BnPtr r_inv = BytesToBn(secret);
  BnPtr s = NewBn();
  BN_mod_mul(s.get(), s_blind.get(), r_inv.get(), key_->n.get(), ctx.get());
  return BnToBytes(s.get(), key_->bytes);
}

bool RsaBlindSignatureScheme::Verify(absl::string_view serial,
                                     absl::string_view signature) const {
  if (static_cast<int>(signature.size()) != key_->bytes) return false;
  CtxPtr ctx(BN_CTX_new());
  BnPtr s = BytesToBn(signature);
  if (BN_cmp(s.get(), key_->n.get()) >= 0) return false;
  BnPtr recovered = NewBn();
  BN_mod_exp(recovered.get(), s.get(), key_->e.get(), key_->n.get(), ctx.get());
  BnPtr m = key_->FullDomainHash(serial, ctx.get());
  return BN_cmp(recovered.get(), m.get()) == 0;
}

MockBlindSignatureScheme::MockBlindSignatureScheme(uint64_t issuer_secret)
    : key_(issuer_secret % kMockPrime == 0 ? 1 : issuer_secret % kMockPrime) {}

absl::StatusOr<BlindedMessage> MockBlindSignatureScheme::Blind(
    absl::string_view serial, std::mt19937_64& rng) const {
  std::uniform_int_distribution<uint64_t> factor(2, kMockPrime - 1);
  const uint64_t r = factor(rng);
  const uint64_t blinded = MulMod(MockHash(serial), r);
  return BlindedMessage{U64ToBytes(blinded), U64ToBytes(r)};
}

absl::StatusOr<Bytes> MockBlindSignatureScheme::SignBlinded(
    absl::string_view payload) const {
  absl::StatusOr<uint64_t> x = BytesToU64(payload);
  if (!x.ok()) return x.status();
  return U64ToBytes(MulMod(*x, key_));
}

absl::StatusOr<Bytes> MockBlindSignatureScheme::Unblind(
    absl::string_view blind_signature, absl::string_view secret) const {
  absl::StatusOr<uint64_t> s = BytesToU64(blind_signature);
  if (!s.ok()) return s.status();
  absl::StatusOr<uint64_t> r = BytesToU64(secret);
  if (!r.ok()) return r.status();
  return U64ToBytes(MulMod(*s, PowMod(*r, kMockPrime - 2)));
}

bool MockBlindSignatureScheme::Verify(absl::string_view serial,
                                      absl::string_view signature) const {
  absl::StatusOr<uint64_t> s = BytesToU64(signature);
  return s.ok() && *s == MulMod(MockHash(serial), key_);
}

absl::StatusOr<Bytes> SessionToken::IssuerRequest() const {
  if (state_ != TokenState::kBlinded) {
    return absl::FailedPreconditionError("token is not in the blinded state");
  }
  return blinded_payload_;
}

absl::Status SessionToken::AcceptBlindSignature(
    const BlindSignatureScheme& scheme, absl::string_view blind_signature) {
  if (state_ != TokenState::kBlinded) {
    return absl::FailedPreconditionError("token is not in the blinded state");
  }
  absl::StatusOr<Bytes> sig = scheme.Unblind(blind_signature, unblinding_secret_);
  if (!sig.ok()) return sig.status();
  signature_ = *std::move(sig);
  unblinding_secret_.clear();
  state_ = TokenState::kSigned;
  return absl::OkStatus();
}

std::string SessionToken::DebugLine() const {
  static constexpr const char* kStates[] = {"minted", "blinded", "signed",
                                            "redeemed"};
  return absl::StrCat(kStates[static_cast<int>(state_)], " ", ToHex(serial_),
                      " ", ToHex(blinded_payload_), " ", ToHex(signature_));
}

absl::Status SpentRegistry::ReserveIssuance(int user, int64_t window,
                                            int count) {
  if (count < 1) {
    return absl::InvalidArgumentError("token count must be >= 1");
  }
  std::lock_guard<std::mutex> lock(mu_);
  int& issued = issued_[{user, window}];
  if (issued + count > issuance_limit_) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "user ", user, " would exceed ", issuance_limit_,
        " tokens in window ", window));
  }
  issued += count;
  return absl::OkStatus();
}

int SpentRegistry::IssuedInWindow(int user, int64_t window) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = issued_.find({user, window});
  return it == issued_.end() ? 0 : it->second;
}

bool SpentRegistry::Redeem(const BlindSignatureScheme& scheme,
                           SessionToken& token) {
  if (token.state_ != TokenState::kSigned) return false;
  if (!scheme.Verify(token.serial_, token.signature_)) return false;
  std::lock_guard<std::mutex> lock(mu_);
  if (!spent_.insert(token.serial_).second) return false;
  token.state_ = TokenState::kRedeemed;
  return true;
}

size_t SpentRegistry::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return spent_.size();
}

bool SpentRegistry::Contains(absl::string_view serial) const {
  std::lock_guard<std::mutex> lock(mu_);
  return spent_.contains(serial);
}

absl::StatusOr<std::vector<SessionToken>> MintAndBlind(
    const BlindSignatureScheme& scheme, SpentRegistry& registry, int user,
    int64_t window, int count, std::mt19937_64& rng) {
  if (absl::Status s = registry.ReserveIssuance(user, window, count); !s.ok()) {
    return s;
  }
  std::vector<SessionToken> tokens(count);
  for (SessionToken& token : tokens) {
    token.serial_ = RandomBytes(rng, kSerialBytes);
    absl::StatusOr<BlindedMessage> blinded = scheme.Blind(token.serial_, rng);
    if (!blinded.ok()) return blinded.status();
    token.blinded_payload_ = std::move(blinded->payload);
    token.unblinding_secret_ = std::move(blinded->unblinding_secret);
    token.state_ = TokenState::kBlinded;
  }
  return tokens;
}

absl::StatusOr<Bytes> SignBlinded(const BlindSignatureScheme& scheme,
                                  absl::string_view request) {
  return scheme.SignBlinded(request);
}

}  // namespace groupid
