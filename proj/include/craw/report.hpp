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

// Run outputs (metrics.csv, trace.log, mainlist.json, ledger.json, report.txt)
// and the cross-run comparison. report.txt is rendered from ledger.json alone
// so it can be regenerated byte for byte.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craw/scenario.hpp"
#include "craw/simkit.hpp"

namespace craw {

inline constexpr std::string_view kRekeyCostDefinition =
    "re-keying cost = keys the server must generate and deliver for the event; "
    "join: keys delivered to the joiner plus a server-prepared individual key "
    "(0 when it comes from authentication); leave: key-tree levels above the "
    "departed leaf whose keys are replaced";

namespace detail {

inline std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}
inline std::string lpad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}
inline std::string num(std::uint64_t v) { return std::to_string(v); }
inline std::string secs(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.7f", v);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("failed writing " + p.string());
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }
inline std::uint64_t log2_floor(std::size_t n) {
  std::uint64_t k = 0;
  while ((std::size_t{1} << (k + 1)) <= n) ++k;
  return k;
}

}  // namespace detail

inline std::string render_report(const MetricsLedger& l) {
  using namespace detail;
  std::ostringstream o;
  o << "scenario " << l.scenario << "  scheme " << scheme_name(l.scheme) << "\n";
  o << kRekeyCostDefinition << "\n\n";

  o << "counters per event\n";
  o << pad("id", 4) << pad("time", 12) << "  " << lpad("kind", 11) << lpad("area", 8) << pad("n", 4) << pad("keygen", 8)
    << pad("enc", 6) << pad("unicast", 9) << pad("multicast", 11) << pad("indiv", 7) << pad("cost", 6) << "\n";
  for (const auto& e : l.events) {
    const auto& r = e.record;
    const auto& c = r.counters;
    o << pad(num(e.id), 4) << pad(r.time.str(), 12) << "  " << lpad(r.kind, 11) << lpad(r.area, 8)
      << pad(num(r.group_size), 4) << pad(num(c.key_generations), 8) << pad(num(c.encryptions), 6)
      << pad(num(c.unicast_sends), 9) << pad(num(c.multicast_sends), 11) << pad(num(c.individual_keys), 7)
      << pad(num(c.rekey_cost), 6) << "\n";
  }
  o << "\ncounters by kind\n";
  for (const auto& [kind, c] : l.aggregates())
    o << "  " << lpad(kind, 11) << " keygen " << c.key_generations << "  enc " << c.encryptions << "  unicast "
      << c.unicast_sends << "  multicast " << c.multicast_sends << "  indiv " << c.individual_keys << "  cost "
      << c.rekey_cost << "\n";

  const auto& d = l.delays;
  o << "\ntiming\n";
  o << "  delays (s): probe " << secs(d.t_probe) << "  reauth " << secs(d.t_reauth) << "  reassoc "
    << secs(d.t_reassoc) << "  auth_ordinary " << secs(d.t_auth_ordinary) << "  keygen " << secs(d.t_keygen)
    << "  keydist " << secs(d.t_keydist) << "  frame_interval " << secs(d.frame_interval) << "\n";
  const SimTime craw = join_setup_time(d, JoinMode::craw), ordinary = join_setup_time(d, JoinMode::ordinary);
  o << "  join setup model: craw = reauth = " << craw.str() << " s; ordinary = auth_ordinary + keygen + keydist = "
    << ordinary.str() << " s; delta = " << (ordinary - craw).str() << " s\n";
  o << "  hand-off model: probe + reauth + reassoc = " << handoff_time(d).str() << " s\n";
  o << "  join setups\n";
  if (l.joins.empty()) o << "    none\n";
  for (const auto& j : l.joins)
    o << "    " << lpad(j.member, 8) << lpad(j.area, 8) << "start " << j.start.str() << "  setup " << j.duration().str()
      << " s  " << (j.accepted ? "accepted" : "rejected") << "\n";
  o << "  hand-offs\n";
  if (l.handoffs.empty()) o << "    none\n";
  for (const auto& h : l.handoffs)
    o << "    " << lpad(h.member, 8) << h.from << " -> " << h.to << "  probe " << h.probe.str() << "  reauth "
      << h.reauth.str() << "  keyprep " << h.keyprep.str() << "  reassoc " << h.reassoc.str() << "  total "
      << h.total().str() << " s  " << (h.accepted ? "completed" : "rejected") << "\n";
  if (!l.in_progress.empty()) {
    o << "  in progress at horizon:";
    for (const auto& m : l.in_progress) o << " " << m;
    o << "\n";
  }

  o << "\nframes (expected / delivered / after-leave seen / after-leave decrypted)\n";
  for (const auto& [m, f] : l.frames)
    o << "  " << lpad(m, 8) << f.expected << " / " << f.delivered << " / " << f.after_leave_seen << " / "
      << f.after_leave_decrypted << "\n";

  o << "\nfiles: metrics.csv trace.log mainlist.json ledger.json\n";
  return o.str();
}

/// Writes one run's bundle into `dir` (created if needed).
inline void write_run(const std::filesystem::path& dir, const SimResult& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  detail::write_file(dir / "metrics.csv", r.ledger.csv());
  detail::write_file(dir / "trace.log", r.trace.text());
  detail::write_file(dir / "mainlist.json", r.main_list.to_json().dump(2) + "\n");
  detail::write_file(dir / "ledger.json", r.ledger.to_json().dump(2) + "\n");
  detail::write_file(dir / "report.txt", render_report(r.ledger));
}

inline MetricsLedger load_ledger(const std::filesystem::path& dir) {
  auto text = detail::read_file(dir / "ledger.json");
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError((dir / "ledger.json").string() + " is not valid JSON");
  return MetricsLedger::from_json(j);
}

/// Run directories under `dir`: itself if it holds a ledger, else its
/// per-scheme subdirectories.
inline std::vector<std::filesystem::path> run_dirs(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "ledger.json")) return {dir};
  std::vector<std::filesystem::path> out;
  for (auto s : {Scheme::ckc_craw, Scheme::ckc_plain, Scheme::lkh}) {
    auto sub = dir / std::string(scheme_name(s));
    if (std::filesystem::exists(sub / "ledger.json")) out.push_back(sub);
  }
  if (out.empty()) throw Error("no run found in " + dir.string());
  return out;
}

struct LabeledLedger {
  std::string label;
  MetricsLedger ledger;
};

/// Side-by-side counters and timings. All runs must replay the same scenario
/// events; deltas are against the first run.
inline std::string compare_report(const std::vector<LabeledLedger>& runs) {
  using namespace detail;
  if (runs.empty()) throw ValidationError("runs", "nothing to compare");
  const auto& base = runs.front().ledger;
  std::vector<std::string> problems;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& l = runs[i].ledger;
    if (l.scenario != base.scenario)
      problems.push_back(runs[i].label + ": scenario " + l.scenario + " != " + base.scenario);
    if (l.events.size() != base.events.size()) {
      problems.push_back(runs[i].label + ": " + num(l.events.size()) + " events != " + num(base.events.size()));
      continue;
    }
    for (std::size_t k = 0; k < l.events.size(); ++k) {
      const auto& a = base.events[k].record;
      const auto& b = l.events[k].record;
      if (a.kind != b.kind || a.area != b.area || a.member != b.member || a.group_size != b.group_size)
        problems.push_back(runs[i].label + ": event " + num(k + 1) + " is " + b.kind + " " + b.member + "@" + b.area +
                           " but " + a.kind + " " + a.member + "@" + a.area + " in " + runs.front().label);
    }
  }
  if (!problems.empty()) {
    std::string msg = "incompatible runs:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError("runs", msg);
  }

  std::ostringstream o;
  o << "scenario " << base.scenario << "\n";
  for (std::size_t i = 0; i < runs.size(); ++i)
    o << "  [" << i << "] " << runs[i].label << " (" << scheme_name(runs[i].ledger.scheme) << ")\n";
  o << kRekeyCostDefinition << "\n\n";

  o << "per event: keygen/enc/unicast/multicast cost, then cost delta vs [0]\n";
  for (std::size_t k = 0; k < base.events.size(); ++k) {
    const auto& r = base.events[k].record;
    o << pad(num(k + 1), 4) << "  " << lpad(r.kind, 11) << lpad(r.area, 8) << "n=" << lpad(num(r.group_size), 4);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& c = runs[i].ledger.events[k].record.counters;
      o << " [" << i << "] " << c.key_generations << "/" << c.encryptions << "/" << c.unicast_sends << "/"
        << c.multicast_sends << " " << c.rekey_cost;
    }
    o << "  |";
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const auto d = static_cast<long long>(runs[i].ledger.events[k].record.counters.rekey_cost) -
                     static_cast<long long>(r.counters.rekey_cost);
      o << " " << (d > 0 ? "+" : "") << d;
    }
    o << "\n";
  }

  o << "\ntotals: keygen/enc/unicast/multicast cost\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto t = runs[i].ledger.aggregates()["total"];
    o << "  [" << i << "] " << t.key_generations << "/" << t.encryptions << "/" << t.unicast_sends << "/"
      << t.multicast_sends << " " << t.rekey_cost << "\n";
  }

  o << "\ntiming (s)\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& l = runs[i].ledger;
    SimTime join_sum, hand_sum;
    std::size_t joins = 0, hands = 0;
    for (const auto& j : l.joins)
      if (j.accepted) join_sum += j.duration(), ++joins;
    for (const auto& h : l.handoffs)
      if (h.accepted) hand_sum += h.total(), ++hands;
    o << "  [" << i << "] join setup total " << join_sum.str() << " over " << joins << "; hand-off total "
      << hand_sum.str() << " over " << hands;
    if (i > 0) {
      SimTime bj, bh;
      for (const auto& j : base.joins)
        if (j.accepted) bj += j.duration();
      for (const auto& h : base.handoffs)
        if (h.accepted) bh += h.total();
      o << "; delta join " << (join_sum - bj).str() << ", hand-off " << (hand_sum - bh).str();
    }
    o << "\n";
  }

  // Join cost 1 for CRAW against log2 n + 1 for LKH; leave cost log2 n for both.
  bool any = false;
  std::ostringstream rel;
  for (std::size_t k = 0; k < base.events.size(); ++k) {
    const auto& r = base.events[k].record;
    if (!power_of_two(r.group_size) || (r.kind != "join" && r.kind != "leave")) continue;
    const auto lg = log2_floor(r.group_size);
    for (const auto& run : runs) {
      std::optional<std::uint64_t> expect;
      if (r.kind == "join" && run.ledger.scheme == Scheme::ckc_craw) expect = 1;
      if (r.kind == "join" && run.ledger.scheme == Scheme::lkh) expect = lg + 1;
      if (r.kind == "leave" && run.ledger.scheme != Scheme::ckc_plain) expect = lg;
      if (!expect) continue;
      const auto got = run.ledger.events[k].record.counters.rekey_cost;
      any = true;
      rel << "  " << lpad(r.kind, 6) << " n=" << lpad(num(r.group_size), 4) << lpad(std::string(scheme_name(run.ledger.scheme)), 10)
          << "cost " << got << ", expected " << *expect << (got == *expect ? "  ok" : "  MISMATCH") << "\n";
    }
  }
  if (any) o << "\nre-keying cost relation (craw join 1, lkh join log2 n + 1, leave log2 n)\n" << rel.str();
  return o.str();
}

}  // namespace craw
