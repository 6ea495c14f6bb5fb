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

#include <set>

#include "craw/ckc.hpp"
#include "support.hpp"

namespace craw {
namespace {

using testing::CkcHarness;
using testing::log2_exact;
using testing::member_name;

struct Fixture {
  BinaryKeyTree tree;
  std::map<std::string, KeyMaterial> keys;  // by label
};

// Seven members in area B with u7 alone under the node coded 157; u8's join
// splits u7's leaf (code 1578).
Fixture seven_member_area(Rng& rng) {
  Fixture f;
  auto k = [&](const std::string& label) { return f.keys[label] = random_key(rng); };
  std::vector<NodeSpec> nodes = {
      {NodeCode("15"), std::nullopt, {}},
      {NodeCode("153"), std::nullopt, k("K14")},
      {NodeCode("1531"), std::nullopt, k("K12")},
      {NodeCode("15311"), "u1", k("K1")},
      {NodeCode("15312"), "u2", k("K2")},
      {NodeCode("1534"), std::nullopt, k("K34")},
      {NodeCode("15341"), "u3", k("K3")},
      {NodeCode("15342"), "u4", k("K4")},
      {NodeCode("157"), std::nullopt, k("K58")},
      {NodeCode("1572"), std::nullopt, k("K56")},
      {NodeCode("15721"), "u5", k("K5")},
      {NodeCode("15722"), "u6", k("K6")},
      {NodeCode("1578"), "u7", k("K7")},
  };
  f.tree = BinaryKeyTree::restore(NodeCode("15"), k("AK"), nodes);
  return f;
}

// Eight members in area A; u8 and u7 share the node coded 157.
Fixture eight_member_area(Rng& rng) {
  Fixture f;
  auto k = [&](const std::string& label) { return f.keys[label] = random_key(rng); };
  std::vector<NodeSpec> nodes = {
      {NodeCode("1"), std::nullopt, {}},
      {NodeCode("12"), std::nullopt, k("K14")},
      {NodeCode("121"), std::nullopt, k("K12")},
      {NodeCode("1211"), "u1", k("K1")},
      {NodeCode("1212"), "u2", k("K2")},
      {NodeCode("124"), std::nullopt, k("K34")},
      {NodeCode("1241"), "u3", k("K3")},
      {NodeCode("1242"), "u4", k("K4")},
      {NodeCode("15"), std::nullopt, k("K58")},
      {NodeCode("153"), std::nullopt, k("K56")},
      {NodeCode("1531"), "u5", k("K5")},
      {NodeCode("1532"), "u6", k("K6")},
      {NodeCode("157"), std::nullopt, k("K78")},
      {NodeCode("1571"), "u7", k("K7")},
      {NodeCode("1578"), "u8", k("K8")},
  };
  f.tree = BinaryKeyTree::restore(NodeCode("1"), k("AK"), nodes);
  return f;
}

TEST(CkcJoin, WalkthroughEightJoinsSevenMemberArea) {
  Rng rng(11);
  auto fx = seven_member_area(rng);
  CkcTree server(fx.tree);
  std::map<MemberId, CkcMemberView> views;
  for (int i = 1; i <= 7; ++i) views[member_name(i)] = CkcMemberView::snapshot(fx.tree, member_name(i));
  auto before = views;

  const auto k8 = random_key(rng);
  auto r = server.join("u8", k8, IndividualKeySource::authentication, rng);

  // The unicast carries AK'_G = f(AK_G) and the position code 1578.
  auto plain = decrypt(k8, r.unicast);
  ASSERT_TRUE(plain);
  auto grant = JoinGrant::parse(*plain);
  const auto ak2 = hash_f(fx.keys["AK"]);
  EXPECT_EQ(grant.group_key, ak2);
  EXPECT_EQ(grant.parent_code, NodeCode("1578"));
  EXPECT_EQ(grant.leaf_code.parent(), NodeCode("1578"));

  // Server-side middle keys match the member-side formulas.
  EXPECT_EQ(server.structure().key_at(NodeCode("157")), hash_f_xor(ak2, "157"));
  EXPECT_EQ(server.structure().key_at(NodeCode("1578")), hash_f_xor(ak2, "1578"));
  EXPECT_EQ(server.structure().key_at(NodeCode("153")), fx.keys["K14"]);

  EXPECT_EQ(r.counters, (RekeyCounters{1, 1, 1, 0, 0, 1}));
  EXPECT_EQ(r.notice.insertion, NodeCode("1578"));
  EXPECT_EQ(r.notice.occupant, "u7");

  for (auto& [id, v] : views) EXPECT_TRUE(v.apply_join(r.notice));
  views["u8"] = CkcMemberView::from_grant("u8", NodeCode("15"), k8, r.unicast);
  for (const auto& [id, v] : views) EXPECT_TRUE(view_mismatches(server.structure(), v).empty()) << id;

  // u5..u8 hold K'_{5,8}; u7 and u8 hold K_{7,8}.
  for (auto id : {"u5", "u6", "u7", "u8"}) EXPECT_EQ(views[id].middle_keys().at(NodeCode("157")), hash_f_xor(ak2, "157"));
  for (auto id : {"u7", "u8"}) EXPECT_EQ(views[id].middle_keys().at(NodeCode("1578")), hash_f_xor(ak2, "1578"));

  // u1 is off the insertion path: only the group key moves.
  EXPECT_EQ(views["u1"].middle_keys(), before["u1"].middle_keys());
  EXPECT_NE(views["u1"].group_key(), before["u1"].group_key());

  // u7: group key, K'_{5,8} changed and K_{7,8} added.
  int changed = views["u7"].group_key() != before["u7"].group_key() ? 1 : 0;
  for (const auto& [code, key] : views["u7"].middle_keys()) {
    auto it = before["u7"].middle_keys().find(code);
    if (it == before["u7"].middle_keys().end() || it->second != key) ++changed;
  }
  EXPECT_EQ(changed, 3);
  EXPECT_EQ(views["u7"].leaf_code().parent(), NodeCode("1578"));
}

TEST(CkcJoin, ServerGeneratedIndividualKeyCountsTwoGenerations) {
  CkcHarness h(12, IndividualKeySource::server_generated);
  for (int i = 1; i <= 7; ++i) h.join(member_name(i));
  auto r = h.join("u8");
  EXPECT_EQ(r.counters, (RekeyCounters{2, 1, 1, 0, 1, 2}));
}

TEST(CkcJoin, NoticeAppliedTwiceIsNoOp) {
  Rng rng(13);
  auto fx = seven_member_area(rng);
  CkcTree server(fx.tree);
  auto v = CkcMemberView::snapshot(fx.tree, "u7");
  auto r = server.join("u8", random_key(rng), IndividualKeySource::authentication, rng);
  ASSERT_TRUE(v.apply_join(r.notice));
  auto once = v.held_keys();
  EXPECT_FALSE(v.apply_join(r.notice));
  EXPECT_EQ(v.held_keys(), once);
}

TEST(CkcJoin, Errors) {
  Rng rng(14);
  CkcTree t;
  t.join("u1", random_key(rng), IndividualKeySource::authentication, rng);
  EXPECT_THROW(t.join("u1", random_key(rng), IndividualKeySource::authentication, rng), ProtocolError);

  // Leaves already at key-width depth: one more split would overflow the code encoding.
  std::string root(kKeyWidth - 1, '1');
  auto deep = BinaryKeyTree::restore(NodeCode(root), random_key(rng),
                                     {{NodeCode(root), std::nullopt, {}},
                                      {NodeCode(root + "1"), "a", random_key(rng)},
                                      {NodeCode(root + "2"), "b", random_key(rng)}});
  CkcTree deep_tree(deep);
  EXPECT_THROW(deep_tree.join("c", random_key(rng), IndividualKeySource::authentication, rng), DomainError);
}

TEST(CkcJoin, JoinerCannotReachPreviousGroupKey) {
  Rng rng(15);
  auto fx = seven_member_area(rng);
  CkcTree server(fx.tree);
  const auto old_ak = server.group_key();
  auto content = encrypt(old_ak, Bytes{1, 2, 3});
  const auto k8 = random_key(rng);
  auto r = server.join("u8", k8, IndividualKeySource::authentication, rng);
  auto v = CkcMemberView::from_grant("u8", NodeCode("15"), k8, r.unicast);
  for (const auto& [code, key] : v.held_keys()) {
    EXPECT_NE(key, old_ak);
    EXPECT_FALSE(decrypt(key, content));
    EXPECT_FALSE(decrypt(hash_f(key), content));
  }
}

TEST(CkcLeave, WalkthroughEightLeavesEightMemberArea) {
  Rng rng(16);
  auto fx = eight_member_area(rng);
  CkcTree server(fx.tree);
  std::map<MemberId, CkcMemberView> views;
  for (int i = 1; i <= 8; ++i) views[member_name(i)] = CkcMemberView::snapshot(fx.tree, member_name(i));
  auto before = views;

  auto r = server.leave("u8", rng);
  ASSERT_EQ(r.payloads.size(), 3u);
  std::set<NodeCode> cover;
  for (const auto& p : r.payloads) cover.insert(p.cover_code);
  EXPECT_EQ(cover, (std::set<NodeCode>{NodeCode("1571"), NodeCode("153"), NodeCode("12")}));
  EXPECT_EQ(r.counters, (RekeyCounters{1, 3, 0, 3, 0, 3}));

  // Each part decrypts with its top key: K_7, K_{5,6}, K_{1,4}.
  const auto ak2 = server.group_key();
  for (const auto& p : r.payloads) {
    const auto& key = p.cover_code == NodeCode("12") ? fx.keys["K14"]
                      : p.cover_code == NodeCode("153") ? fx.keys["K56"]
                                                         : fx.keys["K7"];
    auto plain = decrypt(key, p.sealed);
    ASSERT_TRUE(plain);
    EXPECT_EQ(KeyMaterial::from_span(*plain), ak2);
  }

  // u7 is promoted into 157; the affected middle node is recomputed from AK'.
  EXPECT_EQ(server.structure().leaf_of("u7"), NodeCode("157"));
  EXPECT_EQ(server.structure().key_at(NodeCode("15")), hash_f_xor(ak2, "15"));

  // The leaver's keys open none of the payloads.
  for (const auto& [code, key] : views["u8"].held_keys())
    for (const auto& p : r.payloads) EXPECT_FALSE(decrypt(key, p.sealed));
  EXPECT_THROW(views["u8"].apply_leave(r.notice, r.payloads), ProtocolError);

  views.erase("u8");
  for (auto& [id, v] : views) EXPECT_TRUE(v.apply_leave(r.notice, r.payloads));
  for (const auto& [id, v] : views) EXPECT_TRUE(view_mismatches(server.structure(), v).empty()) << id;

  // u1..u4 share only the root with the leaver.
  for (auto id : {"u1", "u2", "u3", "u4"}) EXPECT_EQ(views[id].middle_keys(), before[id].middle_keys());
  EXPECT_EQ(views["u7"].middle_keys().at(NodeCode("15")), hash_f_xor(ak2, "15"));
}

TEST(CkcLeave, LastMemberEmptiesTree) {
  CkcHarness h(17);
  h.join("u1");
  auto r = h.leave("u1");
  EXPECT_TRUE(r.payloads.empty());
  EXPECT_EQ(h.tree().size(), 0u);
  EXPECT_THROW(h.tree().leave("u1", h.rng()), ProtocolError);
}

TEST(CkcLeave, TwoToOnePromotesIntoRoot) {
  CkcHarness h(18);
  h.join("u1");
  h.join("u2");
  auto r = h.leave("u1");
  EXPECT_EQ(r.payloads.size(), 1u);
  EXPECT_EQ(h.tree().structure().leaf_of("u2"), NodeCode("1"));
  EXPECT_TRUE(h.mismatches().empty());
  h.join("u3");
  EXPECT_TRUE(h.mismatches().empty());
}

TEST(CkcCounters, BalancedTreesFollowTableFormulas) {
  for (std::uint64_t n : {4u, 8u, 16u, 32u}) {
    CkcHarness h(100 + n);
    for (std::uint64_t i = 1; i < n; ++i) h.join(member_name(static_cast<int>(i)));
    auto j = h.join(member_name(static_cast<int>(n)));
    EXPECT_EQ(j.counters, (RekeyCounters{1, 1, 1, 0, 0, 1})) << n;
    for (const auto& [m, code] : h.tree().structure().leaves()) EXPECT_EQ(h.tree().structure().depth(code), log2_exact(n));
    auto l = h.leave(member_name(3));
    const auto k = log2_exact(n);
    EXPECT_EQ(l.counters, (RekeyCounters{1, k, 0, k, 0, k})) << n;
    EXPECT_TRUE(h.mismatches().empty());
  }
}

TEST(CkcConsistency, JoinsUpToThirtyThree) {
  CkcHarness h(19);
  for (int n = 1; n <= 33; ++n) {
    h.join(member_name(n));
    ASSERT_TRUE(h.mismatches().empty()) << "n=" << n;
    h.tree().structure().check_shape();
  }
}

TEST(CkcConsistency, RandomSequencesProperty) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    CkcHarness h(seed);
    Rng choice(seed * 7919 + 1);
    std::vector<MemberId> present;
    int next_id = 1;
    const int steps = 10 + static_cast<int>(choice.uniform(30));
    for (int s = 0; s < steps; ++s) {
      bool do_join = present.empty() || (present.size() < 64 && choice.uniform(3) != 0);
      if (do_join) {
        auto m = member_name(next_id++);
        h.join(m);
        present.push_back(m);
      } else {
        auto idx = choice.uniform(present.size());
        h.leave(present[idx]);
        present.erase(present.begin() + static_cast<std::ptrdiff_t>(idx));
      }
      auto mm = h.mismatches();
      ASSERT_TRUE(mm.empty()) << "seed " << seed << " step " << s << ": " << mm.front();
      for (const auto& [id, v] : h.views()) {
        for (const auto& [code, key] : v.held_keys()) ASSERT_TRUE(code.is_prefix_of(v.leaf_code()));
        ASSERT_EQ(v.held_keys().size(), h.tree().structure().depth(v.leaf_code()) + 1);
      }
    }
  }
}

TEST(CkcDump, DeterministicAndOrdered) {
  CkcHarness a(20), b(20);
  for (int i = 1; i <= 5; ++i) {
    a.join(member_name(i));
    b.join(member_name(i));
  }
  EXPECT_EQ(a.tree().structure().dump(), b.tree().structure().dump());
  auto j = a.tree().structure().to_json();
  EXPECT_EQ(j["nodes"].size(), 9u);
  EXPECT_EQ(j["root"], "1");
}

}  // namespace
}  // namespace craw
