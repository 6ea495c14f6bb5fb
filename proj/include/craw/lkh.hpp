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

// LKH baseline: every key on the changed path is regenerated by the server and
// delivered encrypted under child keys. Used for the overhead comparison and as
// the sound reference for the secrecy checks.
//
// Join:  the joiner's path keys (new parent node up to the root) are fresh. The
//        joiner gets them as a unicast chain, each under the key below it; every
//        changed key is also multicast once per level, sealed under both of its
//        children's keys.
// Leave: the departed leaf's parent is removed and its sibling promoted; the
//        remaining ancestors get fresh keys, each sealed under both children and
//        sent as one multicast per ciphertext.

#pragma once

#include <map>
#include <span>
#include <vector>

#include "craw/ckc.hpp"
#include "craw/crypto.hpp"
#include "craw/key_tree.hpp"

namespace craw {

struct LkhKeyDelivery {
  NodeCode target;  // node whose new key is carried
  NodeCode under;   // node whose key seals it
  Ciphertext sealed;
};

struct LkhJoinResult {
  std::vector<LkhKeyDelivery> unicast_chain;            // one unicast each, bottom-up
  std::vector<std::vector<LkhKeyDelivery>> multicasts;  // one message per changed level, bottom-up
  JoinNotice notice;
  RekeyCounters counters;
};

struct LkhLeaveResult {
  std::vector<LkhKeyDelivery> multicasts;  // one message per ciphertext, bottom-up
  LeaveNotice notice;
  RekeyCounters counters;
};

class LkhTree {
 public:
  explicit LkhTree(NodeCode root_code = NodeCode("1")) : tree_(std::move(root_code)) {}
  explicit LkhTree(BinaryKeyTree tree) : tree_(std::move(tree)) {}

  const BinaryKeyTree& structure() const { return tree_; }
  std::size_t size() const { return tree_.size(); }
  bool contains(const MemberId& m) const { return tree_.contains(m); }
  const KeyMaterial& group_key() const { return tree_.group_key(); }

  /// `individual` is always server-prepared in LKH; it is counted in
  /// individual_keys, not key_generations.
  LkhJoinResult join(const MemberId& joiner, const KeyMaterial& individual, Rng& rng) {
    if (tree_.contains(joiner)) throw ProtocolError("duplicate member " + joiner);
    LkhJoinResult r;
    r.counters.individual_keys = 1;
    if (tree_.empty()) {
      tree_.place_first(joiner, individual);
      tree_.set_group_key(random_key(rng));
      tree_.bump_epoch();
      r.unicast_chain.push_back({tree_.root_code(), tree_.root_code(), encrypt(individual, tree_.group_key().span())});
      r.counters.key_generations = 1;
      r.counters.encryptions = 1;
      r.counters.unicast_sends = 1;
      r.counters.rekey_cost = 2;
      r.notice = JoinNotice{tree_.epoch(), joiner, tree_.root_code(), {}, {}, {}};
      return r;
    }

    const NodeCode at = tree_.insertion_leaf();
    const MemberId occupant = *tree_.at(at).member;
    tree_.split_leaf(at, '0', '1', joiner, individual);
    const NodeCode joiner_code = at.child('1');

    // Changed nodes: the new internal node and all of its ancestors, bottom-up.
    std::vector<NodeCode> changed{at};
    auto anc = tree_.ancestors(at);
    changed.insert(changed.end(), anc.rbegin(), anc.rend());
    for (const auto& c : changed) tree_.set_key(c, random_key(rng));

    NodeCode below = joiner_code;
    for (const auto& c : changed) {
      r.unicast_chain.push_back({c, below, encrypt(tree_.key_at(below), tree_.key_at(c).span())});
      below = c;
    }
    for (const auto& c : changed) {
      std::vector<LkhKeyDelivery> msg;
      for (const auto& child : tree_.children(c))
        msg.push_back({c, child, encrypt(tree_.key_at(child), tree_.key_at(c).span())});
      r.multicasts.push_back(std::move(msg));
    }

    tree_.bump_epoch();
    r.notice = JoinNotice{tree_.epoch(), joiner, joiner_code, at, occupant, at.child('0')};
    const auto k = changed.size();
    r.counters.key_generations = k;
    r.counters.encryptions = 3 * k;
    r.counters.unicast_sends = k;
    r.counters.multicast_sends = k;
    r.counters.rekey_cost = k + 1;
    return r;
  }

  LkhLeaveResult leave(const MemberId& leaver, Rng& rng) {
    const NodeCode leaf = tree_.leaf_of(leaver);
    LkhLeaveResult r;
    r.notice.leaver = leaver;
    r.notice.leaver_code = leaf;
    if (leaf == tree_.root_code()) {
      tree_.remove_and_promote(leaver);
      tree_.bump_epoch();
      r.notice.epoch = tree_.epoch();
      return r;
    }
    r.notice.sibling_code = tree_.sibling(leaf);
    const std::size_t depth = tree_.depth(leaf);
    const Promotion p = tree_.remove_and_promote(leaver);

    std::vector<NodeCode> changed;
    auto anc = tree_.ancestors(p.parent);
    changed.assign(anc.rbegin(), anc.rend());
    if (changed.empty() && tree_.at(p.parent).is_leaf()) {
      // One member left: its leaf is the root, so it needs a fresh group key.
      tree_.set_group_key(random_key(rng));
      r.multicasts.push_back(
          {p.parent, p.parent, encrypt(tree_.at(p.parent).key, tree_.group_key().span())});
      r.counters.key_generations = 1;
    } else if (changed.empty()) {
      // The sibling subtree became the whole tree; its top key is the group key.
      tree_.set_group_key(tree_.at(p.parent).key);
    }
    for (const auto& c : changed) tree_.set_key(c, random_key(rng));
    for (const auto& c : changed)
      for (const auto& child : tree_.children(c))
        r.multicasts.push_back({c, child, encrypt(tree_.key_at(child), tree_.key_at(c).span())});

    tree_.bump_epoch();
    r.notice.epoch = tree_.epoch();
    r.counters.key_generations += changed.size();
    r.counters.encryptions = r.multicasts.size();
    r.counters.multicast_sends = r.multicasts.size();
    r.counters.rekey_cost = depth;
    return r;
  }

 private:
  BinaryKeyTree tree_;
};

/// A member's LKH key store: leaf code, individual key and every internal key on
/// its path (the root entry is the group key).
class LkhMemberView {
 public:
  LkhMemberView() = default;

  static LkhMemberView from_join(MemberId member, NodeCode root_code, const KeyMaterial& individual,
                                 const JoinNotice& notice, std::span<const LkhKeyDelivery> chain) {
    LkhMemberView v;
    v.member_ = std::move(member);
    v.root_code_ = std::move(root_code);
    v.individual_ = individual;
    v.leaf_code_ = notice.joiner_code;
    for (const auto& d : chain) {
      auto k = v.key_for(d.under);
      if (!k) throw ProtocolError("unicast chain for " + v.member_ + " skips " + d.under.str());
      auto plain = decrypt(*k, d.sealed);
      if (!plain) throw ProtocolError("unicast chain for " + v.member_ + " does not decrypt");
      if (d.target == v.leaf_code_)
        v.solo_group_key_ = KeyMaterial::from_span(*plain);
      else
        v.internal_[d.target] = KeyMaterial::from_span(*plain);
    }
    v.epoch_ = notice.epoch;
    return v;
  }

  static LkhMemberView snapshot(const BinaryKeyTree& tree, const MemberId& m) {
    LkhMemberView v;
    v.member_ = m;
    v.root_code_ = tree.root_code();
    v.leaf_code_ = tree.leaf_of(m);
    v.individual_ = tree.at(v.leaf_code_).key;
    v.epoch_ = tree.epoch();
    for (const auto& a : tree.ancestors(v.leaf_code_)) v.internal_[a] = tree.key_at(a);
    if (v.leaf_code_ == v.root_code_) v.solo_group_key_ = tree.group_key();
    return v;
  }

  bool apply_join(const JoinNotice& n, std::span<const std::vector<LkhKeyDelivery>> multicasts) {
    if (n.epoch <= epoch_) return false;
    if (n.epoch != epoch_ + 1) throw ProtocolError(member_ + " missed an event before epoch " + std::to_string(n.epoch));
    if (n.occupant == member_) {
      leaf_code_ = n.occupant_code;
      solo_group_key_.reset();
    }
    for (const auto& msg : multicasts)
      for (const auto& d : msg) absorb(d);
    epoch_ = n.epoch;
    return true;
  }

  bool apply_leave(const LeaveNotice& n, std::span<const LkhKeyDelivery> multicasts) {
    if (n.epoch <= epoch_) return false;
    if (n.epoch != epoch_ + 1) throw ProtocolError(member_ + " missed an event before epoch " + std::to_string(n.epoch));
    if (n.leaver == member_) throw ProtocolError(member_ + " is the leaver");
    const NodeCode parent = n.leaver_code.parent();
    if (n.sibling_code.is_prefix_of(leaf_code_)) {
      const std::size_t at = parent.length();
      std::map<NodeCode, KeyMaterial> moved;
      for (auto& [code, key] : internal_) {
        if (n.sibling_code.is_prefix_of(code))
          moved[code.without_digit_at(at)] = key;
        else if (code != parent)
          moved[code] = key;
      }
      internal_ = std::move(moved);
      leaf_code_ = leaf_code_.without_digit_at(at);
    }
    for (const auto& d : multicasts) absorb(d);
    if (leaf_code_ == root_code_) {
      if (multicasts.empty()) throw ProtocolError("sole member " + member_ + " received no group key");
    }
    epoch_ = n.epoch;
    return true;
  }

  const MemberId& member() const { return member_; }
  const NodeCode& leaf_code() const { return leaf_code_; }
  const KeyMaterial& individual_key() const { return individual_; }
  const std::map<NodeCode, KeyMaterial>& internal_keys() const { return internal_; }
  std::uint64_t epoch() const { return epoch_; }

  const KeyMaterial& group_key() const {
    if (solo_group_key_) return *solo_group_key_;
    return internal_.at(root_code_);
  }

  std::map<NodeCode, KeyMaterial> held_keys() const {
    std::map<NodeCode, KeyMaterial> out = internal_;
    out[root_code_] = group_key();
    if (leaf_code_ != root_code_) out[leaf_code_] = individual_;
    return out;
  }

 private:
  std::optional<KeyMaterial> key_for(const NodeCode& c) const {
    if (c == leaf_code_) return individual_;
    if (auto it = internal_.find(c); it != internal_.end()) return it->second;
    return std::nullopt;
  }

  void absorb(const LkhKeyDelivery& d) {
    if (!d.target.is_prefix_of(leaf_code_)) return;
    auto k = key_for(d.under);
    if (!k || !d.under.is_prefix_of(leaf_code_)) return;
    auto plain = decrypt(*k, d.sealed);
    if (!plain) return;
    auto fresh = KeyMaterial::from_span(*plain);
    if (d.target == leaf_code_)
      solo_group_key_ = fresh;  // sole member: the leaf is the root
    else
      internal_[d.target] = fresh;
  }

  MemberId member_;
  NodeCode root_code_;
  NodeCode leaf_code_;
  KeyMaterial individual_{};
  std::map<NodeCode, KeyMaterial> internal_;
  std::optional<KeyMaterial> solo_group_key_;
  std::uint64_t epoch_ = 0;
};

inline std::vector<std::string> view_mismatches(const BinaryKeyTree& tree, const LkhMemberView& v) {
  std::vector<std::string> out;
  if (!tree.contains(v.member())) {
    out.push_back(v.member() + " is not in the tree");
    return out;
  }
  const auto& leaf = tree.leaf_of(v.member());
  if (leaf != v.leaf_code()) out.push_back(v.member() + ": leaf " + v.leaf_code().str() + " != " + leaf.str());
  if (v.group_key() != tree.group_key()) out.push_back(v.member() + ": group key differs");
  if (v.individual_key() != tree.at(leaf).key) out.push_back(v.member() + ": individual key differs");
  std::vector<NodeCode> expected = tree.ancestors(leaf);
  std::vector<NodeCode> held;
  for (const auto& [code, key] : v.internal_keys()) held.push_back(code);
  if (held != expected) out.push_back(v.member() + ": held nodes are not the path");
  for (const auto& [code, key] : v.internal_keys())
    if (tree.find(code) && tree.key_at(code) != key) out.push_back(v.member() + ": key at " + code.str() + " differs");
  return out;
}

}  // namespace craw
