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

// Deterministic discrete-event engine: runs a scripted scenario against the
// protocol actors with modeled delays and collects a metrics ledger.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craw/entities.hpp"
#include "craw/trace.hpp"

namespace craw {

/// Modeled delays in seconds.
struct DelayConfig {
  double t_probe = 0.0195167;
  double t_reauth = 0.002517;  // OTP authentication, at join and at hand-off
  double t_reassoc = 0.924;
  double t_auth_ordinary = 0.000237;  // authentication time of an ordinary join
  double t_keygen = 0.939;            // individual key preparation
  double t_keydist = 0.0;             // individual key delivery
  double frame_interval = 0.01;       // 0 disables content frames

  friend bool operator==(const DelayConfig&, const DelayConfig&) = default;

  void check() const {
    const std::pair<const char*, double> fields[] = {
        {"t_probe", t_probe},   {"t_reauth", t_reauth}, {"t_reassoc", t_reassoc},          {"t_auth_ordinary", t_auth_ordinary},
        {"t_keygen", t_keygen}, {"t_keydist", t_keydist}, {"frame_interval", frame_interval}};
    for (const auto& [name, v] : fields)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string("delays.") + name, "must be a finite non-negative number");
  }

  PhaseDelays phases(Scheme s) const {
    return {SimTime::from_seconds(t_probe),
            SimTime::from_seconds(individual_key_from_auth(s) ? t_reauth : t_auth_ordinary),
            SimTime::from_seconds(t_keygen), SimTime::from_seconds(t_keydist), SimTime::from_seconds(t_reassoc)};
  }

  nlohmann::json to_json() const {
    return {{"t_probe", t_probe},   {"t_reauth", t_reauth},   {"t_reassoc", t_reassoc},          {"t_auth_ordinary", t_auth_ordinary},
            {"t_keygen", t_keygen}, {"t_keydist", t_keydist}, {"frame_interval", frame_interval}};
  }
};

enum class JoinMode { craw, ordinary };

/// Join setup under the delay model: authentication only for CRAW; for an
/// ordinary join, authentication plus individual key generation and delivery.
inline SimTime join_setup_time(const DelayConfig& d, JoinMode mode) {
  if (mode == JoinMode::craw) return SimTime::from_seconds(d.t_reauth);
  return SimTime::from_seconds(d.t_auth_ordinary) + SimTime::from_seconds(d.t_keygen) +
         SimTime::from_seconds(d.t_keydist);
}

/// Hand-off total of a completed episode as realized on the timeline.
inline SimTime handoff_time(const HandoffRecord& h) {
  if (!h.accepted) throw ProtocolError("hand-off of " + h.member + " did not complete");
  return h.total();
}

/// Configured hand-off total for a CRAW move: probe + re-authentication + re-association.
inline SimTime handoff_time(const DelayConfig& d) {
  return SimTime::from_seconds(d.t_probe) + SimTime::from_seconds(d.t_reauth) + SimTime::from_seconds(d.t_reassoc);
}

// -------------------------------------------------------------- event queue

class EventQueue {
 public:
  SimTime now() const { return now_; }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  SimTime next_time() const { return heap_.top().time; }

  void schedule(SimTime t, std::function<void()> fn) {
    if (t < now_) throw ProtocolError("event scheduled at " + t.str() + " before now " + now_.str());
    heap_.push({t, seq_++, std::move(fn)});
  }

  /// Runs the earliest event.
  void step() {
    Item it = heap_.top();
    heap_.pop();
    now_ = it.time;
    it.fn();
  }

 private:
  struct Item {
    SimTime time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<Item, std::vector<Item>, Later> heap_;
  std::uint64_t seq_ = 0;
  SimTime now_;
};

// ------------------------------------------------------------------ ledger

struct LedgerEvent {
  std::uint64_t id = 0;
  RekeyRecord record;
};

inline nlohmann::json counters_json(const RekeyCounters& c) {
  return {{"keygen", c.key_generations}, {"enc", c.encryptions},        {"unicast", c.unicast_sends},
          {"multicast", c.multicast_sends}, {"individual_keys", c.individual_keys}, {"rekey_cost", c.rekey_cost}};
}

inline RekeyCounters counters_from_json(const nlohmann::json& j) {
  RekeyCounters c;
  c.key_generations = j.at("keygen").get<std::uint64_t>();
  c.encryptions = j.at("enc").get<std::uint64_t>();
  c.unicast_sends = j.at("unicast").get<std::uint64_t>();
  c.multicast_sends = j.at("multicast").get<std::uint64_t>();
  c.individual_keys = j.at("individual_keys").get<std::uint64_t>();
  c.rekey_cost = j.at("rekey_cost").get<std::uint64_t>();
  return c;
}

inline constexpr std::string_view kMetricsHeader = "event_id,time,kind,scheme,area,keygen,enc,unicast,multicast";

/// Per-event counters, timings and frame statistics of one run.
class MetricsLedger {
 public:
  std::string scenario;
  Scheme scheme = Scheme::ckc_craw;
  DelayConfig delays;
  std::vector<LedgerEvent> events;
  std::vector<JoinSetupRecord> joins;
  std::vector<HandoffRecord> handoffs;
  std::map<MemberId, FrameStats> frames;
  std::vector<MemberId> in_progress;  // members still mid-procedure at the horizon

  void add(const RekeyRecord& r) { events.push_back({events.size() + 1, r}); }

  /// Sums by event kind plus "total".
  std::map<std::string, RekeyCounters> aggregates() const {
    std::map<std::string, RekeyCounters> out;
    out["total"];
    for (const auto& e : events) {
      out[e.record.kind] += e.record.counters;
      out["total"] += e.record.counters;
    }
    return out;
  }

  std::string csv() const {
    std::string out(kMetricsHeader);
    out += "\n";
    for (const auto& e : events) {
      const auto& r = e.record;
      out += std::to_string(e.id) + "," + r.time.str() + "," + r.kind + "," + std::string(scheme_name(scheme)) + "," +
             r.area + "," + std::to_string(r.counters.key_generations) + "," + std::to_string(r.counters.encryptions) +
             "," + std::to_string(r.counters.unicast_sends) + "," + std::to_string(r.counters.multicast_sends) + "\n";
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["scenario"] = scenario;
    j["scheme"] = scheme_name(scheme);
    j["delays"] = delays.to_json();
    j["events"] = nlohmann::json::array();
    for (const auto& e : events)
      j["events"].push_back({{"id", e.id},
                             {"time_us", e.record.time.micros()},
                             {"kind", e.record.kind},
                             {"area", e.record.area},
                             {"member", e.record.member},
                             {"group_size", e.record.group_size},
                             {"counters", counters_json(e.record.counters)}});
    j["joins"] = nlohmann::json::array();
    for (const auto& s : joins)
      j["joins"].push_back({{"member", s.member},
                            {"area", s.area},
                            {"start_us", s.start.micros()},
                            {"done_us", s.done.micros()},
                            {"accepted", s.accepted}});
    j["handoffs"] = nlohmann::json::array();
    for (const auto& h : handoffs)
      j["handoffs"].push_back({{"member", h.member},
                               {"from", h.from},
                               {"to", h.to},
                               {"start_us", h.start.micros()},
                               {"probe_us", h.probe.micros()},
                               {"reauth_us", h.reauth.micros()},
                               {"keyprep_us", h.keyprep.micros()},
                               {"reassoc_us", h.reassoc.micros()},
                               {"accepted", h.accepted}});
    j["frames"] = nlohmann::json::object();
    for (const auto& [m, f] : frames)
      j["frames"][m] = {{"expected", f.expected},
                        {"delivered", f.delivered},
                        {"after_leave_seen", f.after_leave_seen},
                        {"after_leave_decrypted", f.after_leave_decrypted}};
    j["in_progress"] = in_progress;
    return j;
  }

  static MetricsLedger from_json(const nlohmann::json& j) {
    MetricsLedger l;
    try {
      l.scenario = j.at("scenario").get<std::string>();
      auto s = parse_scheme(j.at("scheme").get<std::string>());
      if (!s) throw FormatError("unknown scheme in ledger");
      l.scheme = *s;
      const auto& d = j.at("delays");
      l.delays = {d.at("t_probe"), d.at("t_reauth"), d.at("t_reassoc"), d.at("t_auth_ordinary"),
                  d.at("t_keygen"), d.at("t_keydist"), d.at("frame_interval")};
      auto us = [](const nlohmann::json& v) { return SimTime::from_micros(v.get<std::int64_t>()); };
      for (const auto& e : j.at("events"))
        l.events.push_back({e.at("id").get<std::uint64_t>(),
                            {us(e.at("time_us")), e.at("kind").get<std::string>(), e.at("area").get<std::string>(),
                             e.at("member").get<std::string>(), e.at("group_size").get<std::size_t>(),
                             counters_from_json(e.at("counters"))}});
      for (const auto& s2 : j.at("joins"))
        l.joins.push_back({s2.at("member").get<std::string>(), s2.at("area").get<std::string>(), us(s2.at("start_us")),
                           us(s2.at("done_us")), s2.at("accepted").get<bool>()});
      for (const auto& h : j.at("handoffs"))
        l.handoffs.push_back({h.at("member").get<std::string>(), h.at("from").get<std::string>(),
                              h.at("to").get<std::string>(), us(h.at("start_us")), us(h.at("probe_us")),
                              us(h.at("reauth_us")), us(h.at("keyprep_us")), us(h.at("reassoc_us")),
                              h.at("accepted").get<bool>()});
      for (const auto& [m, f] : j.at("frames").items())
        l.frames[m] = {f.at("expected"), f.at("delivered"), f.at("after_leave_seen"), f.at("after_leave_decrypted")};
      l.in_progress = j.at("in_progress").get<std::vector<MemberId>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("ledger: ") + e.what());
    }
    return l;
  }
};

// ---------------------------------------------------------------- scenario

struct MemberDecl {
  MemberId id;
  std::string password;
  bool registered = true;
};

struct AreaDecl {
  AreaId id;
  std::vector<MemberId> members;  // initial roster, placed silently at time 0
};

struct Scenario {
  std::string name = "scenario";
  std::string group = "g";
  std::uint64_t seed = 1;
  std::vector<Scheme> schemes{Scheme::ckc_craw};
  SimTime horizon = SimTime::from_seconds(1.0);
  DelayConfig delays;
  bool trace_frames = false;
  bool eavesdrop = true;  // departed members try to open later frames of areas they left
  std::vector<MemberDecl> members;
  std::vector<AreaDecl> areas;
  std::vector<ScriptedOp> events;
};

struct SimOptions {
  bool check_consistency = false;  // compare every view with its tree after each event
};

struct SimResult {
  MetricsLedger ledger;
  TraceLog trace;
  MainList main_list;
  std::vector<std::string> consistency_failures;
  std::size_t operations_started = 0;
};

/// One run of a scenario under one scheme.
class Simulator : private NetworkObserver {
 public:
  Simulator(Scenario scenario, Scheme scheme, SimOptions options = {})
      : scenario_(std::move(scenario)), scheme_(scheme), options_(options) {
    scenario_.delays.check();
    net_ = std::make_unique<Network>(scenario_.group, scheme_, scenario_.seed, scenario_.delays.phases(scheme_),
                                     [this](SimTime t, std::function<void()> fn) { queue_.schedule(t, std::move(fn)); });
    net_->add_observer(this);
  }

  /// Extra observers (analysis); must be added before run().
  void add_observer(NetworkObserver* o) { net_->add_observer(o); }

  const SimResult& run() {
    if (ran_) throw ProtocolError("simulator already ran");
    ran_ = true;
    result_.ledger.scenario = scenario_.name;
    result_.ledger.scheme = scheme_;
    result_.ledger.delays = scenario_.delays;

    for (const auto& a : scenario_.areas) net_->add_area(a.id);
    for (const auto& m : scenario_.members) net_->add_member(m.id, m.password, m.registered);
    for (const auto& a : scenario_.areas)
      for (const auto& m : a.members) net_->bootstrap(m, a.id, SimTime());

    for (const auto& op : scenario_.events)
      queue_.schedule(op.time, [this, op] {
        ++result_.operations_started;
        net_->submit(op, op.time);
      });
    const SimTime interval = SimTime::from_seconds(scenario_.delays.frame_interval);
    if (interval > SimTime() && !scenario_.areas.empty()) schedule_frame(interval, interval, 1);

    while (!queue_.empty() && queue_.next_time() <= scenario_.horizon) {
      queue_.step();
      if (options_.check_consistency)
        for (auto& s : net_->mismatches()) result_.consistency_failures.push_back(queue_.now().str() + " " + s);
    }

    for (const auto& [id, mm] : net_->members()) {
      result_.ledger.frames[id] = mm.frames;
      if (mm.phase != MemberPhase::detached && mm.phase != MemberPhase::connected) result_.ledger.in_progress.push_back(id);
    }
    result_.main_list = net_->main_list();
    return result_;
  }

  const Network& network() const { return *net_; }
  const SimResult& result() const { return result_; }

 private:
  void schedule_frame(SimTime at, SimTime interval, std::uint64_t seq) {
    if (at > scenario_.horizon) return;
    queue_.schedule(at, [this, at, interval, seq] {
      net_->frame_tick(at, seq, scenario_.trace_frames, scenario_.eavesdrop);
      schedule_frame(at + interval, interval, seq + 1);
    });
  }

  void message(const ProtocolMessage& m) override { result_.trace.push(m); }
  void rekey(const RekeyRecord& r) override { result_.ledger.add(r); }
  void join_setup(const JoinSetupRecord& j) override { result_.ledger.joins.push_back(j); }
  void handoff(const HandoffRecord& h) override { result_.ledger.handoffs.push_back(h); }

  Scenario scenario_;
  Scheme scheme_;
  SimOptions options_;
  EventQueue queue_;
  std::unique_ptr<Network> net_;
  SimResult result_;
  bool ran_ = false;
};

}  // namespace craw
