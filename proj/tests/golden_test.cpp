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

#include <filesystem>

#include "craw/report.hpp"
#include "craw/scenario.hpp"
#include "craw/simkit.hpp"

namespace craw {
namespace {

const std::filesystem::path kGolden = std::filesystem::path(CRAW_SOURCE_DIR) / "tests" / "golden";

SimResult run_golden(const std::string& name) {
  auto s = load_scenario((kGolden / (name + ".json")).string());
  Simulator sim(s, s.schemes.front(), {true});
  return sim.run();
}

SimResult simulate_json(const nlohmann::json& j) {
  auto s = parse_scenario(j);
  Simulator sim(s, s.schemes.front());
  return sim.run();
}

class GoldenTrace : public ::testing::TestWithParam<std::string> {};

TEST_P(GoldenTrace, MessageShapesMatch) {
  const auto r = run_golden(GetParam());
  EXPECT_EQ(r.trace.shapes(), detail::read_file(kGolden / (GetParam() + ".trace")));
  EXPECT_TRUE(r.consistency_failures.empty());
}

TEST_P(GoldenTrace, FullTraceIsDeterministic) {
  const auto a = run_golden(GetParam());
  const auto b = run_golden(GetParam());
  EXPECT_EQ(a.trace.text(), b.trace.text());
  EXPECT_EQ(a.ledger.csv(), b.ledger.csv());
  EXPECT_EQ(a.main_list.to_json(), b.main_list.to_json());
}

INSTANTIATE_TEST_SUITE_P(Procedures, GoldenTrace, ::testing::Values("join", "leave", "move"));

TEST(GoldenTrace, SeedChangesPayloadsNotShapes) {
  auto j = read_json_file((kGolden / "move.json").string());
  const auto base = simulate_json(j);
  j["seed"] = 12;
  const auto other = simulate_json(j);
  EXPECT_EQ(base.trace.shapes(), other.trace.shapes());
  EXPECT_NE(base.trace.text(), other.trace.text());
}

}  // namespace
}  // namespace craw
