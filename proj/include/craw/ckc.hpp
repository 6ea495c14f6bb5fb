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

// CKC re-keying: the server refreshes the group key and members derive every
// affected middle-node key locally as f(group_key XOR node_code).
//
// Join:  AK' = f(AK); one unicast to the joiner carrying AK' and its position.
// Leave: AK' is fresh; one multicast per cover subtree (the siblings along the
//        departed leaf's root path), each sealed under that subtree's top key.

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "craw/crypto.hpp"
#include "craw/key_tree.hpp"
#include "craw/node_code.hpp"

namespace craw {

enum class IndividualKeySource {
  authentication,    // derived from the accepted OTP credential, no server work
  server_generated,  // drawn by the server and shipped over a secure channel
};

/// Plaintext of the join unicast.
struct JoinGrant {
  KeyMaterial group_key;
  NodeCode parent_code;  // empty when the joiner is the first member
  NodeCode leaf_code;
  std::uint64_t epoch = 0;

  Bytes serialize() const {
    Bytes out(group_key.bytes().begin(), group_key.bytes().end());
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(epoch >> (8 * i)));
    out.push_back(static_cast<std::uint8_t>(parent_code.length()));
    out.insert(out.end(), parent_code.str().begin(), parent_code.str().end());
    out.push_back(static_cast<std::uint8_t>(leaf_code.length()));
    out.insert(out.end(), leaf_code.str().begin(), leaf_code.str().end());
    return out;
  }

  static JoinGrant parse(std::span<const std::uint8_t> in) {
    JoinGrant g;
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > in.size()) throw FormatError("truncated join grant");
    };
    need(kKeyWidth + 8);
    g.group_key = KeyMaterial::from_span(in.subspan(0, kKeyWidth));
    pos = kKeyWidth;
    for (int i = 0; i < 8; ++i) g.epoch |= static_cast<std::uint64_t>(in[pos++]) << (8 * i);
    auto read_code = [&]() {
      need(1);
      std::size_t n = in[pos++];
      need(n);
      std::string s(in.begin() + static_cast<std::ptrdiff_t>(pos), in.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
      return NodeCode(std::move(s));
    };
    g.parent_code = read_code();
    g.leaf_code = read_code();
    if (pos != in.size()) throw FormatError("trailing bytes in join grant");
    return g;
  }
};

/// Cleartext metadata accompanying a join; lets members re-code and refresh.
struct JoinNotice {
  std::uint64_t epoch = 0;
  MemberId joiner;
  NodeCode joiner_code;
  NodeCode insertion;  // code of the new internal node (the split leaf's old code)
  MemberId occupant;
  NodeCode occupant_code;
};

/// Cleartext metadata accompanying a leave.
struct LeaveNotice {
  std::uint64_t epoch = 0;
  MemberId leaver;
  NodeCode leaver_code;
  NodeCode sibling_code;  // before promotion
};

struct CoverPayload {
  NodeCode cover_code;  // pre-promotion code of the cover subtree's top node
  Ciphertext sealed;    // the new group key
};

struct CkcJoinResult {
  Ciphertext unicast;
  JoinNotice notice;
  RekeyCounters counters;
};

struct CkcLeaveResult {
  std::vector<CoverPayload> payloads;
  LeaveNotice notice;
  RekeyCounters counters;
};

/// Server-side CKC tree for one area.
class CkcTree {
 public:
  explicit CkcTree(NodeCode root_code = NodeCode("1")) : tree_(std::move(root_code)) {}
  explicit CkcTree(BinaryKeyTree tree) : tree_(std::move(tree)) {}

  const BinaryKeyTree& structure() const { return tree_; }
  std::size_t size() const { return tree_.size(); }
  bool contains(const MemberId& m) const { return tree_.contains(m); }
  const KeyMaterial& group_key() const { return tree_.group_key(); }

  CkcJoinResult join(const MemberId& joiner, const KeyMaterial& individual, IndividualKeySource source, Rng& rng) {
    if (tree_.contains(joiner)) throw ProtocolError("duplicate member " + joiner);
    CkcJoinResult r;
    r.counters.individual_keys = source == IndividualKeySource::server_generated ? 1 : 0;
    r.counters.key_generations = 1 + r.counters.individual_keys;
    r.counters.encryptions = 1;
    r.counters.unicast_sends = 1;
    r.counters.rekey_cost = 1 + r.counters.individual_keys;

    JoinGrant grant;
    if (tree_.empty()) {
      tree_.place_first(joiner, individual);
      tree_.set_group_key(random_key(rng));
      grant.leaf_code = tree_.root_code();
    } else {
      const NodeCode at = tree_.insertion_leaf();
      if (at.length() + 1 > kKeyWidth) throw DomainError("tree depth would exceed key width");
      const MemberId occupant = *tree_.at(at).member;
      const char occ_digit = random_digit(rng);
      std::bitset<10> taken;
      taken.set(static_cast<std::size_t>(occ_digit - '0'));
      const char new_digit = random_digit(rng, taken);
      tree_.split_leaf(at, occ_digit, new_digit, joiner, individual);

      tree_.set_group_key(hash_f(tree_.group_key()));
      const KeyMaterial& ak = tree_.group_key();
      for (const auto& anc : tree_.ancestors(at.child(new_digit)))
        if (anc != tree_.root_code()) tree_.set_key(anc, hash_f_xor(ak, anc.str()));

      grant.parent_code = at;
      grant.leaf_code = at.child(new_digit);
      r.notice.insertion = at;
      r.notice.occupant = occupant;
      r.notice.occupant_code = at.child(occ_digit);
    }
    tree_.bump_epoch();
    grant.group_key = tree_.group_key();
    grant.epoch = tree_.epoch();
    r.unicast = encrypt(individual, grant.serialize());
    r.notice.epoch = tree_.epoch();
    r.notice.joiner = joiner;
    r.notice.joiner_code = grant.leaf_code;
    return r;
  }

  CkcLeaveResult leave(const MemberId& leaver, Rng& rng) {
    const NodeCode leaf = tree_.leaf_of(leaver);
    CkcLeaveResult r;
    r.notice.leaver = leaver;
    r.notice.leaver_code = leaf;
    if (leaf == tree_.root_code()) {
      tree_.remove_and_promote(leaver);
      tree_.bump_epoch();
      r.notice.epoch = tree_.epoch();
      return r;
    }

    std::vector<std::pair<NodeCode, KeyMaterial>> cover;
    for (NodeCode n = leaf; n != tree_.root_code(); n = n.parent()) {
      auto s = tree_.sibling(n);
      cover.emplace_back(s, tree_.key_at(s));
    }
    r.notice.sibling_code = cover.front().first;

    const KeyMaterial fresh = random_key(rng);
    const Promotion p = tree_.remove_and_promote(leaver);
    tree_.set_group_key(fresh);
    for (const auto& anc : tree_.ancestors(p.parent))
      if (anc != tree_.root_code()) tree_.set_key(anc, hash_f_xor(fresh, anc.str()));

    for (const auto& [code, key] : cover) r.payloads.push_back({code, encrypt(key, fresh.span())});
    tree_.bump_epoch();
    r.notice.epoch = tree_.epoch();
    r.counters.key_generations = 1;
    r.counters.encryptions = cover.size();
    r.counters.multicast_sends = cover.size();
    r.counters.rekey_cost = cover.size();
    return r;
  }

 private:
  BinaryKeyTree tree_;
};

/// A member's local CKC key store: its leaf code, individual key, group key and
/// the middle-node keys on its root path.
class CkcMemberView {
 public:
  CkcMemberView() = default;

  /// Builds the joiner's view from the join unicast.
  static CkcMemberView from_grant(MemberId member, NodeCode root_code, const KeyMaterial& individual,
                                  const Ciphertext& unicast) {
    auto plain = decrypt(individual, unicast);
    if (!plain) throw ProtocolError("join grant for " + member + " does not decrypt under its individual key");
    auto grant = JoinGrant::parse(*plain);
    if (!grant.parent_code.empty() && grant.leaf_code.parent() != grant.parent_code)
      throw ProtocolError("join grant leaf code is not a child of its parent code");
    CkcMemberView v;
    v.member_ = std::move(member);
    v.root_code_ = std::move(root_code);
    v.individual_ = individual;
    v.leaf_code_ = grant.leaf_code;
    v.group_key_ = grant.group_key;
    v.epoch_ = grant.epoch;
    for (std::size_t len = v.root_code_.length() + 1; len < v.leaf_code_.length(); ++len) {
      auto code = v.leaf_code_.prefix(len);
      v.middle_[code] = hash_f_xor(v.group_key_, code.str());
    }
    return v;
  }

  /// Test fixture hook: a view copied straight from a server tree.
  static CkcMemberView snapshot(const BinaryKeyTree& tree, const MemberId& m) {
    CkcMemberView v;
    v.member_ = m;
    v.root_code_ = tree.root_code();
    v.leaf_code_ = tree.leaf_of(m);
    v.individual_ = tree.at(v.leaf_code_).key;
    v.group_key_ = tree.group_key();
    v.epoch_ = tree.epoch();
    for (const auto& a : tree.ancestors(v.leaf_code_))
      if (a != v.root_code_) v.middle_[a] = tree.key_at(a);
    return v;
  }

  /// Returns false when the notice was already applied.
  bool apply_join(const JoinNotice& n) {
    if (n.epoch <= epoch_) return false;
    if (n.epoch != epoch_ + 1) throw ProtocolError(member_ + " missed an event before epoch " + std::to_string(n.epoch));
    if (n.joiner == member_) throw ProtocolError("joiner " + member_ + " must build its view from the grant");
    group_key_ = hash_f(group_key_);
    if (n.occupant == member_) {
      leaf_code_ = n.occupant_code;
    }
    for (std::size_t len = root_code_.length() + 1; len <= n.insertion.length(); ++len) {
      auto code = n.insertion.prefix(len);
      if (code.is_proper_prefix_of(leaf_code_)) middle_[code] = hash_f_xor(group_key_, code.str());
    }
    epoch_ = n.epoch;
    return true;
  }

  /// Returns false when the notice was already applied.
  bool apply_leave(const LeaveNotice& n, std::span<const CoverPayload> payloads) {
    if (n.epoch <= epoch_) return false;
    if (n.epoch != epoch_ + 1) throw ProtocolError(member_ + " missed an event before epoch " + std::to_string(n.epoch));
    if (n.leaver == member_) throw ProtocolError(member_ + " is the leaver");

    std::optional<KeyMaterial> fresh;
    for (const auto& p : payloads) {
      if (!p.cover_code.is_prefix_of(leaf_code_)) continue;
      const KeyMaterial& k = p.cover_code == leaf_code_ ? individual_ : middle_.at(p.cover_code);
      if (auto plain = decrypt(k, p.sealed); plain && plain->size() == kKeyWidth) {
        fresh = KeyMaterial::from_span(*plain);
        break;
      }
    }
    if (!fresh) throw ProtocolError("no cover payload decrypts for " + member_);

    const NodeCode parent = n.leaver_code.parent();
    if (n.sibling_code.is_prefix_of(leaf_code_)) {
      const std::size_t at = parent.length();
      std::map<NodeCode, KeyMaterial> moved;
      for (auto& [code, key] : middle_) {
        if (n.sibling_code.is_prefix_of(code))
          moved[code.without_digit_at(at)] = key;
        else if (code != parent)
          moved[code] = key;
      }
      middle_ = std::move(moved);
      leaf_code_ = leaf_code_.without_digit_at(at);
      middle_.erase(root_code_);
    }
    group_key_ = *fresh;
    for (std::size_t len = root_code_.length() + 1; len < parent.length(); ++len) {
      auto code = parent.prefix(len);
      if (code.is_proper_prefix_of(leaf_code_)) middle_[code] = hash_f_xor(group_key_, code.str());
    }
    epoch_ = n.epoch;
    return true;
  }

  const MemberId& member() const { return member_; }
  const NodeCode& leaf_code() const { return leaf_code_; }
  const NodeCode& root_code() const { return root_code_; }
  const KeyMaterial& individual_key() const { return individual_; }
  const KeyMaterial& group_key() const { return group_key_; }
  const std::map<NodeCode, KeyMaterial>& middle_keys() const { return middle_; }
  std::uint64_t epoch() const { return epoch_; }

  /// Every key on the path, by code: root -> group key, middles, leaf -> individual key.
  std::map<NodeCode, KeyMaterial> held_keys() const {
    std::map<NodeCode, KeyMaterial> out = middle_;
    out[root_code_] = group_key_;
    if (leaf_code_ != root_code_) out[leaf_code_] = individual_;
    return out;
  }

 private:
  MemberId member_;
  NodeCode root_code_;
  NodeCode leaf_code_;
  KeyMaterial individual_{};
  KeyMaterial group_key_{};
  std::map<NodeCode, KeyMaterial> middle_;
  std::uint64_t epoch_ = 0;
};

/// Lists every disagreement between a member view and the server tree; empty
/// means consistent.
inline std::vector<std::string> view_mismatches(const BinaryKeyTree& tree, const CkcMemberView& v) {
  std::vector<std::string> out;
  if (!tree.contains(v.member())) {
    out.push_back(v.member() + " is not in the tree");
    return out;
  }
  const auto& leaf = tree.leaf_of(v.member());
  if (leaf != v.leaf_code()) out.push_back(v.member() + ": leaf " + v.leaf_code().str() + " != " + leaf.str());
  if (v.group_key() != tree.group_key()) out.push_back(v.member() + ": group key differs");
  if (v.individual_key() != tree.at(leaf).key) out.push_back(v.member() + ": individual key differs");
  std::vector<NodeCode> expected;
  for (const auto& a : tree.ancestors(leaf))
    if (a != tree.root_code()) expected.push_back(a);
  std::vector<NodeCode> held;
  for (const auto& [code, key] : v.middle_keys()) held.push_back(code);
  if (held != expected) out.push_back(v.member() + ": held codes are not the path prefixes");
  for (const auto& [code, key] : v.middle_keys())
    if (tree.find(code) && tree.key_at(code) != key) out.push_back(v.member() + ": key at " + code.str() + " differs");
  return out;
}

}  // namespace craw
