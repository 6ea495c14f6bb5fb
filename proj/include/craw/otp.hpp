// Copyright 2026 The craw-gkm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// SAS one-time-password exchange.
//
//   registration:  server stores E(N1 ^ S)
//   challenge:     alpha = E(E(N2 ^ S)) ^ E(N1 ^ S)
//                  beta  = E(N2 ^ S)    ^ E(N1 ^ S)
//   verification:  X = beta ^ stored, accept iff alpha ^ E(X) == stored,
//                  then store X for the next session.
//
// The accepted credential X doubles as the source of the member's individual
// key: both sides compute f(X) locally, so the server neither generates nor
// ships an individual key.

#pragma once

#include <openssl/crypto.h>

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "craw/crypto.hpp"
#include "craw/node_code.hpp"

namespace craw {

struct AuthRecord {
  MemberId member;
  std::uint64_t session = 1;
  AuthHash stored_hash{};

  friend bool operator==(const AuthRecord&, const AuthRecord&) = default;
};

struct AuthChallenge {
  MemberId member;
  AuthHash alpha{};
  AuthHash beta{};

  /// Wire form: `member alpha-hex beta-hex`.
  std::string wire() const { return member + " " + to_hex(alpha) + " " + to_hex(beta); }

  static AuthChallenge parse(std::string_view wire) {
    auto a = wire.find(' ');
    auto b = a == std::string_view::npos ? a : wire.find(' ', a + 1);
    if (b == std::string_view::npos) throw FormatError("challenge needs three fields");
    AuthChallenge c;
    c.member = std::string(wire.substr(0, a));
    auto alpha = from_hex(wire.substr(a + 1, b - a - 1));
    auto beta = from_hex(wire.substr(b + 1));
    if (alpha.size() != kAuthHashWidth || beta.size() != kAuthHashWidth)
      throw FormatError("challenge hashes must be " + std::to_string(kAuthHashWidth) + " octets");
    std::copy(alpha.begin(), alpha.end(), c.alpha.begin());
    std::copy(beta.begin(), beta.end(), c.beta.begin());
    return c;
  }
};

struct AuthOutcome {
  bool accepted = false;
  AuthRecord record;                       // rolled record when accepted, input record otherwise
  std::optional<KeyMaterial> individual_key;
};

/// Individual key derived from an accepted session credential.
inline KeyMaterial individual_key_from_credential(const AuthHash& credential) { return hash_f_bytes(credential); }

/// Client side: password S, current nonce N_i, and the pending N_{i+1} of an
/// outstanding challenge. S never leaves this object.
class SasClient {
 public:
  SasClient(MemberId member, std::string_view password, Rng rng)
      : member_(std::move(member)), password_(normalize(password)), rng_(std::move(rng)) {
    rng_.fill(nonce_);
  }

  /// Rebuilds a client at a known nonce (tests, impostors).
  static SasClient restore(MemberId member, std::string_view password, const AuthHash& nonce, Rng rng) {
    SasClient c(std::move(member), password, std::move(rng));
    c.nonce_ = nonce;
    return c;
  }

  const MemberId& member() const { return member_; }
  const AuthHash& current_nonce() const { return nonce_; }
  bool has_pending() const { return pending_.has_value(); }

  /// E(N_i ^ S) for the current nonce: what the server should hold.
  AuthHash current_credential() const { return credential(nonce_); }

  AuthRecord registration() const { return AuthRecord{member_, 1, current_credential()}; }

  /// Draws a fresh N_{i+1} and builds (alpha, beta). A previous pending nonce
  /// is discarded.
  AuthChallenge make_challenge() {
    AuthHash next{};
    rng_.fill(next);
    pending_ = next;
    const AuthHash cur = credential(nonce_);
    const AuthHash nxt = credential(next);
    return AuthChallenge{member_, xor_hash(hash_E(nxt), cur), xor_hash(nxt, cur)};
  }

  /// Individual key the server will derive if the pending challenge is accepted.
  KeyMaterial pending_individual_key() const {
    if (!pending_) throw ProtocolError(member_ + " has no outstanding challenge");
    return individual_key_from_credential(credential(*pending_));
  }

  /// Server accepted: N_{i+1} becomes current.
  void confirm() {
    if (!pending_) throw ProtocolError(member_ + " has no outstanding challenge");
    nonce_ = *pending_;
    pending_.reset();
  }

  /// Server rejected: the pending nonce is dropped, the current one kept.
  void discard_pending() { pending_.reset(); }

 private:
  static AuthHash normalize(std::string_view password) {
    AuthHash s{};
    std::copy_n(password.begin(), std::min(password.size(), s.size()), s.begin());
    return s;
  }

  AuthHash credential(const AuthHash& nonce) const { return hash_E(xor_hash(nonce, password_)); }

  MemberId member_;
  AuthHash password_{};
  AuthHash nonce_{};
  std::optional<AuthHash> pending_;
  Rng rng_;
};

/// Server-side verification. A rejected challenge leaves the record untouched.
inline AuthOutcome verify(const AuthRecord& record, const AuthChallenge& challenge) {
  AuthOutcome out;
  out.record = record;
  if (challenge.member != record.member) return out;
  const AuthHash next = xor_hash(challenge.beta, record.stored_hash);
  const AuthHash recovered = xor_hash(challenge.alpha, hash_E(next));
  if (CRYPTO_memcmp(recovered.data(), record.stored_hash.data(), recovered.size()) != 0) return out;
  out.accepted = true;
  out.record.stored_hash = next;
  out.record.session = record.session + 1;
  out.individual_key = individual_key_from_credential(next);
  return out;
}

/// Registered verifiers keyed by member.
class CredentialStore {
 public:
  const AuthRecord& enroll(const AuthRecord& record) {
    auto [it, inserted] = records_.emplace(record.member, record);
    if (!inserted) throw ProtocolError("member " + record.member + " is already registered");
    return it->second;
  }

  const AuthRecord* find(const MemberId& m) const {
    auto it = records_.find(m);
    return it == records_.end() ? nullptr : &it->second;
  }

  void update(const AuthRecord& record) { records_.at(record.member) = record; }

 private:
  std::map<MemberId, AuthRecord> records_;
};

}  // namespace craw
