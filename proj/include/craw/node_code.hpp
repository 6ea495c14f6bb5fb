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

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

#include "craw/crypto.hpp"

namespace craw {

using MemberId = std::string;
using AreaId = std::string;

/// Digit string naming a key-tree node. A child's code is its parent's code plus
/// one digit, so the prefixes of a leaf code name every node on its root path.
class NodeCode {
 public:
  NodeCode() = default;
  explicit NodeCode(std::string digits) : digits_(std::move(digits)) {
    for (char c : digits_)
      if (c < '0' || c > '9') throw DomainError("node code '" + digits_ + "' contains a non-digit");
  }

  bool empty() const { return digits_.empty(); }
  std::size_t length() const { return digits_.size(); }
  const std::string& str() const { return digits_; }
  char last_digit() const { return digits_.back(); }

  NodeCode parent() const {
    if (digits_.size() <= 1) throw DomainError("code '" + digits_ + "' has no parent");
    return NodeCode(digits_.substr(0, digits_.size() - 1), Unchecked{});
  }

  NodeCode child(char digit) const {
    if (digit < '0' || digit > '9') throw DomainError("child digit must be decimal");
    return NodeCode(digits_ + digit, Unchecked{});
  }

  /// Prefix of this code with `len` digits.
  NodeCode prefix(std::size_t len) const { return NodeCode(digits_.substr(0, len), Unchecked{}); }

  bool is_prefix_of(const NodeCode& other) const {
    return digits_.size() <= other.digits_.size() && other.digits_.compare(0, digits_.size(), digits_) == 0;
  }
  bool is_proper_prefix_of(const NodeCode& other) const {
    return digits_.size() < other.digits_.size() && is_prefix_of(other);
  }

  /// Removes the digit at `index`; used when a subtree is promoted one level.
  NodeCode without_digit_at(std::size_t index) const {
    std::string d = digits_;
    d.erase(index, 1);
    return NodeCode(std::move(d), Unchecked{});
  }

  KeyMaterial encoded() const { return encode_code(digits_); }

  friend bool operator==(const NodeCode&, const NodeCode&) = default;
  friend auto operator<=>(const NodeCode&, const NodeCode&) = default;
  friend std::ostream& operator<<(std::ostream& os, const NodeCode& c) { return os << c.digits_; }

 private:
  struct Unchecked {};
  NodeCode(std::string digits, Unchecked) : digits_(std::move(digits)) {}
  std::string digits_;
};

/// Per-event re-keying overhead as counted by the key server.
struct RekeyCounters {
  std::uint64_t key_generations = 0;
  std::uint64_t encryptions = 0;
  std::uint64_t unicast_sends = 0;
  std::uint64_t multicast_sends = 0;
  // Individual keys the server had to prepare for a joiner (0 when the key comes
  // from the authentication exchange).
  std::uint64_t individual_keys = 0;
  // Join: keys delivered to the joiner plus a server-prepared individual key.
  // Leave: key-tree levels above the departed leaf whose keys are replaced.
  std::uint64_t rekey_cost = 0;

  RekeyCounters& operator+=(const RekeyCounters& o) {
    key_generations += o.key_generations;
    encryptions += o.encryptions;
    unicast_sends += o.unicast_sends;
    multicast_sends += o.multicast_sends;
    individual_keys += o.individual_keys;
    rekey_cost += o.rekey_cost;
    return *this;
  }
  friend bool operator==(const RekeyCounters&, const RekeyCounters&) = default;
};

}  // namespace craw
