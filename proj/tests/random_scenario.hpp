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

// Random but valid scenarios: up to 32 members in up to 3 areas, a mix of
// joins, leaves and moves with occasional forged authentication.

#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craw/scenario.hpp"

namespace craw::testing {

struct RandomScenarioLimits {
  int max_members = 32;
  int max_areas = 3;
  int min_events = 10;
  int max_events = 30;
  double forge_rate = 0.05;
};

inline nlohmann::json random_scenario_json(std::uint64_t seed, Scheme scheme, const RandomScenarioLimits& lim = {}) {
  Rng rng = Rng::derive(seed, "scenario-shape");
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform(static_cast<std::uint64_t>(hi - lo + 1))); };
  auto chance = [&](double p) { return static_cast<double>(rng.uniform(1000000)) < p * 1e6; };

  const int n_areas = pick(1, lim.max_areas);
  const int n_members = pick(2, lim.max_members);
  nlohmann::json j;
  j["schema"] = kScenarioSchema;
  j["name"] = "random-" + std::to_string(seed);
  j["group"] = "g";
  j["seed"] = seed;
  j["scheme"] = scheme_name(scheme);
  j["delays"] = {{"t_probe", 0.001}, {"t_reauth", 0.002},  {"t_reassoc", 0.004}, {"t_auth_ordinary", 0.001},
                 {"t_keygen", 0.003}, {"t_keydist", 0.001}, {"frame_interval", 0.05}};
  j["eavesdrop"] = false;

  std::vector<std::string> ids;
  j["members"] = nlohmann::json::array();
  for (int i = 1; i <= n_members; ++i) {
    ids.push_back("m" + std::to_string(i));
    j["members"].push_back({{"id", ids.back()}, {"password", "pw" + std::to_string(seed) + "-" + std::to_string(i)},
                            {"registered", !chance(0.05)}});
  }
  std::vector<std::string> areas;
  for (int a = 0; a < n_areas; ++a) areas.push_back(std::string(1, static_cast<char>('A' + a)));

  std::map<std::string, std::string> where;
  j["areas"] = nlohmann::json::array();
  std::vector<std::vector<std::string>> rosters(areas.size());
  for (int i = 0; i < n_members; ++i) {
    if (!j["members"][static_cast<std::size_t>(i)]["registered"].get<bool>() || chance(0.4)) continue;
    auto a = rng.uniform(areas.size());
    rosters[a].push_back(ids[static_cast<std::size_t>(i)]);
    where[ids[static_cast<std::size_t>(i)]] = areas[a];
  }
  for (std::size_t a = 0; a < areas.size(); ++a) j["areas"].push_back({{"id", areas[a]}, {"members", rosters[a]}});

  const int n_events = pick(lim.min_events, lim.max_events);
  double t = 0.02;
  j["events"] = nlohmann::json::array();
  for (int e = 0; e < n_events; ++e, t += 0.02) {
    const auto& m = ids[rng.uniform(ids.size())];
    const bool registered = j["members"][std::stoul(m.substr(1)) - 1]["registered"].get<bool>();
    const bool forge = chance(lim.forge_rate);
    auto it = where.find(m);
    if (it == where.end()) {
      const auto& a = areas[rng.uniform(areas.size())];
      j["events"].push_back({{"time", t}, {"op", "join"}, {"member", m}, {"area", a}, {"forge", forge}});
      if (registered && !forge) where[m] = a;
    } else if (areas.size() > 1 && rng.uniform(2) == 0) {
      std::string to;
      do to = areas[rng.uniform(areas.size())];
      while (to == it->second);
      j["events"].push_back({{"time", t}, {"op", "move"}, {"member", m}, {"from", it->second}, {"to", to}, {"forge", forge}});
      if (!forge) it->second = to;
    } else {
      j["events"].push_back({{"time", t}, {"op", "leave"}, {"member", m}, {"area", it->second}});
      where.erase(it);
    }
  }
  j["horizon"] = t + 1.0;
  return j;
}

inline Scenario random_scenario(std::uint64_t seed, Scheme scheme, const RandomScenarioLimits& lim = {}) {
  return parse_scenario(random_scenario_json(seed, scheme, lim));
}

}  // namespace craw::testing
