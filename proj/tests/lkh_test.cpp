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

#include <gtest/gtest.h>

#include "craw/lkh.hpp"
#include "support.hpp"

namespace craw {
namespace {

using testing::LkhHarness;
using testing::log2_exact;
using testing::member_name;

TEST(LkhJoin, EighthMemberCounters) {
  LkhHarness h(1);
  for (int i = 1; i <= 7; ++i) h.join(member_name(i));
  auto r = h.join("u8");
  EXPECT_EQ(r.counters, (RekeyCounters{3, 9, 3, 3, 1, 4}));
  EXPECT_EQ(r.unicast_chain.size(), 3u);
  EXPECT_EQ(r.multicasts.size(), 3u);
  EXPECT_TRUE(h.mismatches().empty());
}

TEST(LkhJoin, SecondMemberCounters) {
  LkhHarness h(2);
  h.join("u1");
  auto r = h.join("u2");
  EXPECT_EQ(r.counters, (RekeyCounters{1, 3, 1, 1, 1, 2}));
  EXPECT_TRUE(h.mismatches().empty());
}

TEST(LkhJoin, JoinerSeesNoOldKey) {
  LkhHarness h(3);
  for (int i = 1; i <= 7; ++i) h.join(member_name(i));
  auto old = h.tree().group_key();
  h.join("u8");
  for (const auto& [code, key] : h.views().at("u8").held_keys()) EXPECT_NE(key, old);
  EXPECT_NE(h.tree().group_key(), old);
}

TEST(LkhJoin, DuplicateRejected) {
  LkhHarness h(4);
  h.join("u1");
  EXPECT_THROW(h.join("u1"), ProtocolError);
}

TEST(LkhLeave, BalancedTreesRegenerateAncestors) {
  for (std::uint64_t n : {4u, 8u, 16u, 32u}) {
    LkhHarness h(10 + n);
    for (std::uint64_t i = 1; i <= n; ++i) h.join(member_name(static_cast<int>(i)));
    const auto k = log2_exact(n);
    auto r = h.leave("u2");
    EXPECT_EQ(r.counters.key_generations, k - 1) << n;
    EXPECT_EQ(r.counters.encryptions, 2 * (k - 1)) << n;
    EXPECT_EQ(r.counters.multicast_sends, 2 * (k - 1)) << n;
    EXPECT_EQ(r.counters.unicast_sends, 0u);
    EXPECT_EQ(r.counters.rekey_cost, k);
    EXPECT_TRUE(h.mismatches().empty());
  }
}

TEST(LkhLeave, DownToEmpty) {
  LkhHarness h(5);
  for (int i = 1; i <= 3; ++i) h.join(member_name(i));
  h.leave("u1");
  EXPECT_TRUE(h.mismatches().empty());
  h.leave("u3");
  EXPECT_TRUE(h.mismatches().empty());
  EXPECT_EQ(h.tree().structure().leaf_of("u2"), NodeCode("1"));
  h.leave("u2");
  EXPECT_EQ(h.tree().size(), 0u);
  h.join("u4");
  EXPECT_TRUE(h.mismatches().empty());
}

TEST(LkhConsistency, RandomSequencesWithForwardSecrecy) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    LkhHarness h(seed);
    Rng choice(seed + 99);
    std::vector<MemberId> present;
    int next_id = 1;
    for (int s = 0; s < 30; ++s) {
      if (present.empty() || (present.size() < 64 && choice.uniform(3) != 0)) {
        present.push_back(member_name(next_id++));
        h.join(present.back());
      } else {
        auto idx = choice.uniform(present.size());
        auto leaver = present[idx];
        present.erase(present.begin() + static_cast<std::ptrdiff_t>(idx));
        auto r = h.leave(leaver);
        // Nothing the leaver held opens the new keys.
        for (const auto& [code, key] : h.departed().at(leaver).held_keys())
          for (const auto& d : r.multicasts) ASSERT_FALSE(decrypt(key, d.sealed)) << seed;
        if (!present.empty()) {
          for (const auto& [code, key] : h.departed().at(leaver).held_keys()) ASSERT_NE(key, h.tree().group_key());
        }
      }
      auto mm = h.mismatches();
      ASSERT_TRUE(mm.empty()) << "seed " << seed << " step " << s << ": " << mm.front();
    }
  }
}

}  // namespace
}  // namespace craw
