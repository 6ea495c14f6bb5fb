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

// Small drivers that keep a server tree and every member's local view in step,
// shared by the unit and acceptance suites.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "craw/ckc.hpp"
#include "craw/lkh.hpp"

namespace craw::testing {

inline std::string member_name(int i) { return "u" + std::to_string(i); }

class CkcHarness {
 public:
  explicit CkcHarness(std::uint64_t seed, IndividualKeySource source = IndividualKeySource::authentication)
      : rng_(seed), source_(source) {}

  CkcJoinResult join(const MemberId& m) {
    auto individual = random_key(rng_);
    auto r = tree_.join(m, individual, source_, rng_);
    for (auto& [id, v] : views_) v.apply_join(r.notice);
    views_[m] = CkcMemberView::from_grant(m, tree_.structure().root_code(), individual, r.unicast);
    return r;
  }

  CkcLeaveResult leave(const MemberId& m) {
    auto r = tree_.leave(m, rng_);
    departed_[m] = views_.at(m);
    views_.erase(m);
    for (auto& [id, v] : views_) v.apply_leave(r.notice, r.payloads);
    return r;
  }

  std::vector<std::string> mismatches() const {
    std::vector<std::string> out;
    for (const auto& [id, v] : views_) {
      auto mm = view_mismatches(tree_.structure(), v);
      out.insert(out.end(), mm.begin(), mm.end());
    }
    if (views_.size() != tree_.size()) out.push_back("view count differs from tree size");
    return out;
  }

  CkcTree& tree() { return tree_; }
  const std::map<MemberId, CkcMemberView>& views() const { return views_; }
  const std::map<MemberId, CkcMemberView>& departed() const { return departed_; }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  IndividualKeySource source_;
  CkcTree tree_;
  std::map<MemberId, CkcMemberView> views_;
  std::map<MemberId, CkcMemberView> departed_;
};

class LkhHarness {
 public:
  explicit LkhHarness(std::uint64_t seed) : rng_(seed) {}

  LkhJoinResult join(const MemberId& m) {
    auto individual = random_key(rng_);
    auto r = tree_.join(m, individual, rng_);
    for (auto& [id, v] : views_) v.apply_join(r.notice, r.multicasts);
    views_[m] = LkhMemberView::from_join(m, tree_.structure().root_code(), individual, r.notice, r.unicast_chain);
    return r;
  }

  LkhLeaveResult leave(const MemberId& m) {
    auto r = tree_.leave(m, rng_);
    departed_[m] = views_.at(m);
    views_.erase(m);
    for (auto& [id, v] : views_) v.apply_leave(r.notice, r.multicasts);
    return r;
  }

  std::vector<std::string> mismatches() const {
    std::vector<std::string> out;
    for (const auto& [id, v] : views_) {
      auto mm = view_mismatches(tree_.structure(), v);
      out.insert(out.end(), mm.begin(), mm.end());
    }
    if (views_.size() != tree_.size()) out.push_back("view count differs from tree size");
    return out;
  }

  LkhTree& tree() { return tree_; }
  const std::map<MemberId, LkhMemberView>& views() const { return views_; }
  const std::map<MemberId, LkhMemberView>& departed() const { return departed_; }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  LkhTree tree_;
  std::map<MemberId, LkhMemberView> views_;
  std::map<MemberId, LkhMemberView> departed_;
};

inline std::uint64_t log2_exact(std::uint64_t n) {
  std::uint64_t k = 0;
  while ((std::uint64_t{1} << k) < n) ++k;
  return k;
}

}  // namespace craw::testing
