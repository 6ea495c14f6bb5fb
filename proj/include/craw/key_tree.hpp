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

// Structural core shared by the CKC and LKH trees: a binary key tree addressed
// by node codes, with shallowest-leaf insertion and sibling promotion on removal.

#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "craw/crypto.hpp"
#include "craw/node_code.hpp"
#include "json.hpp"

namespace craw {

struct TreeNode {
  KeyMaterial key;                // individual key at a leaf, auxiliary key otherwise
  std::optional<MemberId> member;  // set iff leaf
  bool is_leaf() const { return member.has_value(); }
};

/// What a removal did to the shape of the tree.
struct Promotion {
  NodeCode removed_leaf;
  NodeCode parent;   // code the sibling subtree now occupies
  NodeCode sibling;  // sibling's code before promotion
};

/// Layout entry used to restore a tree from a dump or a hand-built fixture.
struct NodeSpec {
  NodeCode code;
  std::optional<MemberId> member;
  KeyMaterial key;
};

class BinaryKeyTree {
 public:
  explicit BinaryKeyTree(NodeCode root_code = NodeCode("1")) : root_code_(std::move(root_code)) {
    if (root_code_.length() != 1) throw DomainError("root code must be a single digit");
  }

  /// Rebuilds a tree from explicit nodes. The root key of an internal root is
  /// ignored; `group_key` is authoritative.
  static BinaryKeyTree restore(NodeCode root_code, KeyMaterial group_key, const std::vector<NodeSpec>& nodes,
                               std::uint64_t epoch = 0) {
    BinaryKeyTree t;
    t.root_code_ = std::move(root_code);
    t.group_key_ = group_key;
    t.epoch_ = epoch;
    for (const auto& n : nodes) {
      if (!t.root_code_.is_prefix_of(n.code))
        throw FormatError("node " + n.code.str() + " is outside root " + t.root_code_.str());
      if (!t.nodes_.emplace(n.code, TreeNode{n.key, n.member}).second)
        throw FormatError("duplicate node " + n.code.str());
      if (n.member && !t.leaves_.emplace(*n.member, n.code).second)
        throw FormatError("member " + *n.member + " appears twice");
    }
    t.check_shape();
    return t;
  }

  const NodeCode& root_code() const { return root_code_; }
  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return leaves_.size(); }
  std::uint64_t epoch() const { return epoch_; }
  void bump_epoch() { ++epoch_; }

  const KeyMaterial& group_key() const { return group_key_; }
  void set_group_key(const KeyMaterial& k) { group_key_ = k; }

  bool contains(const MemberId& m) const { return leaves_.count(m) != 0; }

  const NodeCode& leaf_of(const MemberId& m) const {
    auto it = leaves_.find(m);
    if (it == leaves_.end()) throw ProtocolError("unknown member " + m);
    return it->second;
  }

  const std::map<MemberId, NodeCode>& leaves() const { return leaves_; }
  const std::map<NodeCode, TreeNode>& nodes() const { return nodes_; }

  const TreeNode* find(const NodeCode& c) const {
    auto it = nodes_.find(c);
    return it == nodes_.end() ? nullptr : &it->second;
  }

  const TreeNode& at(const NodeCode& c) const {
    auto* n = find(c);
    if (!n) throw ProtocolError("no node " + c.str());
    return *n;
  }

  /// Key currently protecting node `c`: the group key for an internal root.
  const KeyMaterial& key_at(const NodeCode& c) const {
    const auto& n = at(c);
    if (c == root_code_ && !n.is_leaf()) return group_key_;
    return n.key;
  }

  void set_key(const NodeCode& c, const KeyMaterial& k) {
    auto it = nodes_.find(c);
    if (it == nodes_.end()) throw ProtocolError("no node " + c.str());
    if (c == root_code_ && !it->second.is_leaf())
      group_key_ = k;
    else
      it->second.key = k;
  }

  std::size_t depth(const NodeCode& c) const { return c.length() - root_code_.length(); }

  std::vector<NodeCode> children(const NodeCode& c) const {
    std::vector<NodeCode> out;
    for (char d = '0'; d <= '9'; ++d) {
      auto child = c.child(d);
      if (nodes_.count(child)) out.push_back(child);
    }
    return out;
  }

  NodeCode sibling(const NodeCode& c) const {
    for (const auto& s : children(c.parent()))
      if (s != c) return s;
    throw ProtocolError("node " + c.str() + " has no sibling");
  }

  /// Proper ancestors of `c`, root first.
  std::vector<NodeCode> ancestors(const NodeCode& c) const {
    std::vector<NodeCode> out;
    for (std::size_t len = root_code_.length(); len < c.length(); ++len) out.push_back(c.prefix(len));
    return out;
  }

  /// Shallowest leaf; ties go to the lexicographically smallest code.
  NodeCode insertion_leaf() const {
    if (leaves_.empty()) throw ProtocolError("tree is empty");
    const NodeCode* best = nullptr;
    for (const auto& [m, code] : leaves_)
      if (!best || code.length() < best->length() || (code.length() == best->length() && code < *best)) best = &code;
    return *best;
  }

  void place_first(const MemberId& m, const KeyMaterial& individual) {
    if (!empty()) throw ProtocolError("tree is not empty");
    nodes_.emplace(root_code_, TreeNode{individual, m});
    leaves_.emplace(m, root_code_);
  }

  /// Turns leaf `at` into an internal node whose children are the former
  /// occupant (digit `occupant_digit`) and `joiner` (digit `joiner_digit`).
  void split_leaf(const NodeCode& at, char occupant_digit, char joiner_digit, const MemberId& joiner,
                  const KeyMaterial& joiner_key) {
    if (occupant_digit == joiner_digit) throw DomainError("sibling digits must differ");
    if (at.length() + 1 > kKeyWidth) throw DomainError("tree depth would exceed key width");
    if (contains(joiner)) throw ProtocolError("duplicate member " + joiner);
    auto it = nodes_.find(at);
    if (it == nodes_.end() || !it->second.is_leaf()) throw ProtocolError("split target " + at.str() + " is not a leaf");
    TreeNode occupant = it->second;
    it->second = TreeNode{KeyMaterial{}, std::nullopt};
    auto occ_code = at.child(occupant_digit);
    auto new_code = at.child(joiner_digit);
    nodes_.emplace(occ_code, occupant);
    nodes_.emplace(new_code, TreeNode{joiner_key, joiner});
    leaves_[*occupant.member] = occ_code;
    leaves_.emplace(joiner, new_code);
  }

  /// Deletes `m`'s leaf and its parent and moves the sibling subtree into the
  /// parent's position; every code under the sibling loses the digit at the
  /// promotion depth.
  Promotion remove_and_promote(const MemberId& m) {
    NodeCode leaf = leaf_of(m);
    if (leaf == root_code_) {
      nodes_.clear();
      leaves_.clear();
      return Promotion{leaf, leaf, leaf};
    }
    NodeCode parent = leaf.parent();
    NodeCode sib = sibling(leaf);
    nodes_.erase(leaf);
    leaves_.erase(m);
    nodes_.erase(parent);

    std::vector<std::pair<NodeCode, TreeNode>> moved;
    for (auto it = nodes_.lower_bound(sib); it != nodes_.end() && sib.is_prefix_of(it->first);)
    {
      moved.emplace_back(it->first.without_digit_at(parent.length()), std::move(it->second));
      it = nodes_.erase(it);
    }
    for (auto& [code, node] : moved) {
      if (node.member) leaves_[*node.member] = code;
      nodes_.emplace(code, std::move(node));
    }
    return Promotion{leaf, parent, sib};
  }

  /// Throws FormatError unless every internal node has exactly two children and
  /// leaves and members agree.
  void check_shape() const {
    for (const auto& [code, node] : nodes_) {
      if (code != root_code_ && !nodes_.count(code.parent()))
        throw FormatError("node " + code.str() + " has no parent");
      auto kids = children(code).size();
      if (node.is_leaf() && kids != 0) throw FormatError("leaf " + code.str() + " has children");
      if (!node.is_leaf() && kids != 2) throw FormatError("internal node " + code.str() + " is not binary");
    }
    if (!nodes_.empty() && !nodes_.count(root_code_)) throw FormatError("missing root");
  }

  /// One line per node, ordered by code: `code leaf|internal member fingerprint`.
  std::string dump() const {
    std::ostringstream os;
    os << "epoch " << epoch_ << "\n";
    if (!empty()) os << "group " << fingerprint(group_key_) << "\n";
    for (const auto& [code, node] : nodes_) {
      os << code << ' ' << (node.is_leaf() ? "leaf " + *node.member : std::string("internal -")) << ' '
         << fingerprint(key_at(code)) << "\n";
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["root"] = root_code_.str();
    j["epoch"] = epoch_;
    j["group_key"] = empty() ? "" : fingerprint(group_key_);
    auto& arr = j["nodes"] = nlohmann::json::array();
    for (const auto& [code, node] : nodes_) {
      arr.push_back({{"code", code.str()},
                     {"member", node.member ? *node.member : ""},
                     {"key", fingerprint(key_at(code))}});
    }
    return j;
  }

 private:
  NodeCode root_code_;
  std::map<NodeCode, TreeNode> nodes_;
  std::map<MemberId, NodeCode> leaves_;
  KeyMaterial group_key_{};
  std::uint64_t epoch_ = 0;
};

}  // namespace craw
