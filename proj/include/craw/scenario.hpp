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

// Scenario files: JSON with a versioned schema field.
//
// {
//   "schema": "craw-scenario/1",
//   "name": "handoff", "group": "g1", "seed": 7,
//   "scheme": "ckc_craw"            or  "schemes": ["ckc_craw", "lkh"],
//   "horizon": 3.0,
//   "delays": {"t_probe": 0.0195167, ...},
//   "trace_frames": false, "eavesdrop": true,
//   "members": [{"id": "u1", "password": "pw1", "registered": true}, ...],
//   "areas": [{"id": "A", "members": ["u1", ...]}, ...],
//   "events": [{"time": 1.0, "op": "join", "member": "u9", "area": "A"},
//              {"time": 2.0, "op": "move", "member": "u1", "from": "A", "to": "B", "forge": false},
//              {"time": 3.0, "op": "leave", "member": "u2", "area": "A"}]
// }

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "craw/simkit.hpp"

namespace craw {

inline constexpr std::string_view kScenarioSchema = "craw-scenario/1";

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback, bool required = false) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw ValidationError(path + key, "is required");
    return fallback;
  }
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(path + key, "has the wrong type");
  }
}

inline std::string index_path(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]."; }

}  // namespace detail

/// Applies `key=value` overrides; keys are dotted paths (`delays.t_probe`,
/// `seed`). Values are parsed as JSON when possible, else taken as strings.
inline void apply_override(nlohmann::json& j, std::string_view spec) {
  auto eq = spec.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ValidationError(std::string(spec), "override must be key=value");
  std::string key(spec.substr(0, eq));
  std::string raw(spec.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string pointer = "/" + key;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  try {
    j[nlohmann::json::json_pointer(pointer)] = value;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(key, std::string("cannot override: ") + e.what());
  }
}

/// Parses and validates. Throws ValidationError naming the offending field.
inline Scenario parse_scenario(const nlohmann::json& j) {
  using detail::field;
  if (!j.is_object()) throw ValidationError("$", "scenario must be a JSON object");
  const auto schema = field<std::string>(j, "schema", "", "", true);
  if (schema != kScenarioSchema) throw ValidationError("schema", "unsupported schema '" + schema + "'");

  Scenario s;
  s.name = field<std::string>(j, "name", "", "scenario");
  s.group = field<std::string>(j, "group", "", "g");
  if (s.group.empty()) throw ValidationError("group", "must not be empty");
  if (j.contains("seed") && !(j["seed"].is_number_integer() && j["seed"] >= 0)) throw ValidationError("seed", "must be a non-negative integer");
  s.seed = field<std::uint64_t>(j, "seed", "", 1);

  if (j.contains("scheme") && j.contains("schemes")) throw ValidationError("schemes", "give either scheme or schemes");
  std::vector<std::string> scheme_names;
  if (j.contains("schemes"))
    scheme_names = field<std::vector<std::string>>(j, "schemes", "", {});
  else
    scheme_names = {field<std::string>(j, "scheme", "", "ckc_craw")};
  if (scheme_names.empty()) throw ValidationError("schemes", "must not be empty");
  s.schemes.clear();
  for (std::size_t i = 0; i < scheme_names.size(); ++i) {
    auto k = parse_scheme(scheme_names[i]);
    if (!k) throw ValidationError("schemes[" + std::to_string(i) + "]", "unknown scheme '" + scheme_names[i] + "'");
    if (std::find(s.schemes.begin(), s.schemes.end(), *k) != s.schemes.end())
      throw ValidationError("schemes[" + std::to_string(i) + "]", "duplicate scheme");
    s.schemes.push_back(*k);
  }

  const double horizon = field<double>(j, "horizon", "", 0.0, true);
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon", "must be positive");
  s.horizon = SimTime::from_seconds(horizon);

  if (j.contains("delays")) {
    const auto& d = j["delays"];
    if (!d.is_object()) throw ValidationError("delays", "must be an object");
    static const std::set<std::string> known{"t_probe", "t_reauth", "t_reassoc", "t_auth_ordinary",
                                             "t_keygen", "t_keydist", "frame_interval"};
    for (const auto& [k, v] : d.items())
      if (!known.count(k)) throw ValidationError("delays." + k, "unknown delay");
    s.delays.t_probe = field<double>(d, "t_probe", "delays.", s.delays.t_probe);
    s.delays.t_reauth = field<double>(d, "t_reauth", "delays.", s.delays.t_reauth);
    s.delays.t_reassoc = field<double>(d, "t_reassoc", "delays.", s.delays.t_reassoc);
    s.delays.t_auth_ordinary = field<double>(d, "t_auth_ordinary", "delays.", s.delays.t_auth_ordinary);
    s.delays.t_keygen = field<double>(d, "t_keygen", "delays.", s.delays.t_keygen);
    s.delays.t_keydist = field<double>(d, "t_keydist", "delays.", s.delays.t_keydist);
    s.delays.frame_interval = field<double>(d, "frame_interval", "delays.", s.delays.frame_interval);
  }
  s.delays.check();
  s.trace_frames = field<bool>(j, "trace_frames", "", false);
  s.eavesdrop = field<bool>(j, "eavesdrop", "", true);

  std::map<MemberId, bool> registered;
  const auto members = field<nlohmann::json>(j, "members", "", nlohmann::json::array());
  if (!members.is_array()) throw ValidationError("members", "must be an array");
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto p = detail::index_path("members", i);
    if (!members[i].is_object()) throw ValidationError(p.substr(0, p.size() - 1), "must be an object");
    MemberDecl m{field<std::string>(members[i], "id", p, "", true), field<std::string>(members[i], "password", p, "", true),
                 field<bool>(members[i], "registered", p, true)};
    if (m.id.empty() || m.id.find(' ') != std::string::npos) throw ValidationError(p + "id", "must be non-empty without spaces");
    if (registered.count(m.id)) throw ValidationError(p + "id", "duplicate member '" + m.id + "'");
    registered[m.id] = m.registered;
    s.members.push_back(std::move(m));
  }

  std::map<AreaId, std::set<MemberId>> occupancy;  // replayed membership for event checks
  std::map<MemberId, AreaId> where;
  const auto areas = field<nlohmann::json>(j, "areas", "", nlohmann::json::array());
  if (!areas.is_array()) throw ValidationError("areas", "must be an array");
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const auto p = detail::index_path("areas", i);
    if (!areas[i].is_object()) throw ValidationError(p.substr(0, p.size() - 1), "must be an object");
    AreaDecl a{field<std::string>(areas[i], "id", p, "", true), field<std::vector<std::string>>(areas[i], "members", p, {})};
    if (a.id.empty() || a.id.find(' ') != std::string::npos) throw ValidationError(p + "id", "must be non-empty without spaces");
    if (occupancy.count(a.id)) throw ValidationError(p + "id", "duplicate area '" + a.id + "'");
    occupancy[a.id];
    for (std::size_t k = 0; k < a.members.size(); ++k) {
      const auto mp = p + "members[" + std::to_string(k) + "]";
      const auto& m = a.members[k];
      if (!registered.count(m)) throw ValidationError(mp, "unknown member '" + m + "'");
      if (!registered[m]) throw ValidationError(mp, "roster member '" + m + "' must be registered");
      if (where.count(m)) throw ValidationError(mp, "member '" + m + "' is already placed in area " + where[m]);
      where[m] = a.id;
      occupancy[a.id].insert(m);
    }
    s.areas.push_back(std::move(a));
  }

  const auto events = field<nlohmann::json>(j, "events", "", nlohmann::json::array());
  if (!events.is_array()) throw ValidationError("events", "must be an array");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto p = detail::index_path("events", i);
    const auto& e = events[i];
    if (!e.is_object()) throw ValidationError(p.substr(0, p.size() - 1), "must be an object");
    ScriptedOp op;
    const double t = field<double>(e, "time", p, 0.0, true);
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError(p + "time", "must be non-negative");
    op.time = SimTime::from_seconds(t);
    if (op.time > s.horizon) throw ValidationError(p + "time", "is beyond the horizon");
    const auto kind = field<std::string>(e, "op", p, "", true);
    op.member = field<std::string>(e, "member", p, "", true);
    if (!registered.count(op.member)) throw ValidationError(p + "member", "unknown member '" + op.member + "'");
    op.forge = field<bool>(e, "forge", p, false);
    auto known_area = [&](const std::string& key) {
      auto a = field<std::string>(e, key, p, "", true);
      if (!occupancy.count(a)) throw ValidationError(p + key, "unknown area '" + a + "'");
      return a;
    };
    if (kind == "join") {
      op.kind = OpKind::join;
      op.area = known_area("area");
    } else if (kind == "leave") {
      op.kind = OpKind::leave;
      op.area = known_area("area");
    } else if (kind == "move") {
      op.kind = OpKind::move;
      op.from = known_area("from");
      op.to = known_area("to");
      if (op.from == op.to) throw ValidationError(p + "to", "move must name two distinct areas");
    } else {
      throw ValidationError(p + "op", "unknown op '" + kind + "'");
    }
    if (!s.events.empty() && op.time < s.events.back().time)
      throw ValidationError(p + "time", "events must be listed in time order");
    s.events.push_back(op);
  }

  // Replay the script in order; each operation must be legal where it stands.
  // Operations that fail authentication leave membership unchanged.
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& op = s.events[i];
    const auto p = detail::index_path("events", i);
    const bool will_pass = registered.at(op.member) && !op.forge;
    switch (op.kind) {
      case OpKind::join:
        if (where.count(op.member)) throw ValidationError(p + "member", op.member + " is already in area " + where[op.member]);
        if (will_pass) where[op.member] = op.area;
        break;
      case OpKind::leave:
        if (!where.count(op.member) || where[op.member] != op.area)
          throw ValidationError(p + "area", op.member + " is not in area " + op.area);
        where.erase(op.member);
        break;
      case OpKind::move:
        if (!where.count(op.member) || where[op.member] != op.from)
          throw ValidationError(p + "from", op.member + " is not in area " + op.from);
        if (will_pass) where[op.member] = op.to;
        break;
    }
  }
  return s;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path, "cannot read file");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError(path, "not valid JSON");
  return j;
}

inline Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {}) {
  auto j = read_json_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return parse_scenario(j);
}

}  // namespace craw
