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

// Protocol actors: the main server with its main list, one wireless server per
// area, and mobile members. Procedures are split into timed phases; a caller
// supplies the scheduler and the phase delays.

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "craw/ckc.hpp"
#include "craw/lkh.hpp"
#include "craw/otp.hpp"
#include "craw/trace.hpp"

namespace craw {

enum class Scheme { ckc_craw, ckc_plain, lkh };

inline constexpr std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ckc_craw: return "ckc_craw";
    case Scheme::ckc_plain: return "ckc_plain";
    case Scheme::lkh: return "lkh";
  }
  return "?";
}

inline std::optional<Scheme> parse_scheme(std::string_view s) {
  for (auto k : {Scheme::ckc_craw, Scheme::ckc_plain, Scheme::lkh})
    if (scheme_name(k) == s) return k;
  return std::nullopt;
}

/// CRAW takes the individual key from the authentication exchange; the other
/// schemes generate and ship one ("ordinary" join).
inline bool individual_key_from_auth(Scheme s) { return s == Scheme::ckc_craw; }

// ---------------------------------------------------------------- main list

enum class MemberStatus { registered, active, moving, left };

inline constexpr std::string_view status_name(MemberStatus s) {
  switch (s) {
    case MemberStatus::registered: return "registered";
    case MemberStatus::active: return "active";
    case MemberStatus::moving: return "moving";
    case MemberStatus::left: return "left";
  }
  return "?";
}

struct MainListEntry {
  MemberId member;
  std::string group;
  AuthRecord auth;
  AreaId last_area;  // empty until the first join
  MemberStatus status = MemberStatus::registered;
  std::uint64_t service_accounting = 0;  // content frames delivered
  SimTime last_update;

  nlohmann::json to_json() const {
    return {{"member", member},
            {"group", group},
            {"last_area", last_area},
            {"status", status_name(status)},
            {"service_accounting", service_accounting},
            {"last_update", last_update.str()},
            {"auth", {{"session", auth.session}, {"verifier", to_hex(auth.stored_hash)}}}};
  }
};

inline bool status_transition_allowed(MemberStatus from, MemberStatus to) {
  using S = MemberStatus;
  if (from == to) return to != S::registered;
  return (from == S::registered && to == S::active) || (from == S::active && to == S::moving) ||
         (from == S::moving && to == S::active) || (from == S::active && to == S::left) ||
         (from == S::left && to == S::active);
}

/// Keyed store of member records for one group.
class MainList {
 public:
  explicit MainList(std::string group = "g") : group_(std::move(group)) {}

  const std::string& group() const { return group_; }

  /// A miss is an ordinary outcome.
  std::optional<MainListEntry> lookup(const MemberId& m) const {
    auto it = entries_.find(m);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Overwrites by member id. Status changes must follow the allowed transitions.
  void store(const MainListEntry& e) {
    if (e.group != group_) throw ProtocolError("entry for group " + e.group + " stored in list of " + group_);
    auto it = entries_.find(e.member);
    if (it != entries_.end() && !status_transition_allowed(it->second.status, e.status))
      throw ProtocolError("main list: " + e.member + " cannot go from " + std::string(status_name(it->second.status)) +
                          " to " + std::string(status_name(e.status)));
    entries_[e.member] = e;
  }

  void enroll(const AuthRecord& record, SimTime t) {
    if (entries_.count(record.member)) throw ProtocolError("member " + record.member + " is already registered");
    MainListEntry e;
    e.member = record.member;
    e.group = group_;
    e.auth = record;
    e.last_update = t;
    entries_[e.member] = e;
  }

  const std::map<MemberId, MainListEntry>& entries() const { return entries_; }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [id, e] : entries_) arr.push_back(e.to_json());
    return {{"group", group_}, {"entries", arr}};
  }

 private:
  std::string group_;
  std::map<MemberId, MainListEntry> entries_;
};

// ------------------------------------------------------ scheme-neutral keys

/// One ciphertext on the air. `under` and `carried` are ground truth for
/// analysis only; they are never read by protocol code.
struct Sealed {
  Ciphertext ct;
  KeyMaterial under;
  std::optional<KeyMaterial> carried;
};

struct AirMessage {
  MessageKind kind{};
  std::string dst;
  std::vector<Sealed> parts;

  std::string fingerprint() const {
    Bytes all;
    for (const auto& p : parts) {
      auto s = p.ct.serialize();
      all.insert(all.end(), s.begin(), s.end());
    }
    return craw::fingerprint(all);
  }
};

struct AreaRekey {
  RekeyCounters counters;
  std::vector<AirMessage> unicasts;    // to the joiner, in send order
  std::vector<AirMessage> multicasts;  // to the area, in send order
  std::uint64_t epoch = 0;             // area epoch after the event
  std::variant<CkcJoinResult, CkcLeaveResult, LkhJoinResult, LkhLeaveResult> detail;
};

namespace detail {

inline std::optional<KeyMaterial> carried_key(const KeyMaterial& under, const Ciphertext& ct) {
  auto plain = decrypt(under, ct);
  if (!plain) throw ProtocolError("internal: ciphertext does not open under its sealing key");
  if (plain->size() == kKeyWidth) return KeyMaterial::from_span(*plain);
  return JoinGrant::parse(*plain).group_key;
}

inline Sealed seal_record(const KeyMaterial& under, const Ciphertext& ct) { return {ct, under, carried_key(under, ct)}; }

}  // namespace detail

/// Server-side key tree of one area under the configured scheme.
class AreaKeys {
 public:
  explicit AreaKeys(Scheme scheme) : scheme_(scheme) {
    if (scheme == Scheme::lkh)
      tree_ = LkhTree();
    else
      tree_ = CkcTree();
  }

  Scheme scheme() const { return scheme_; }
  const BinaryKeyTree& structure() const {
    return std::visit([](const auto& t) -> const BinaryKeyTree& { return t.structure(); }, tree_);
  }
  std::size_t size() const { return structure().size(); }
  bool contains(const MemberId& m) const { return structure().contains(m); }
  const KeyMaterial& group_key() const { return structure().group_key(); }

  AreaRekey join(const MemberId& m, const KeyMaterial& individual, Rng& rng) {
    AreaRekey r;
    if (auto* ckc = std::get_if<CkcTree>(&tree_)) {
      const auto source = individual_key_from_auth(scheme_) ? IndividualKeySource::authentication
                                                            : IndividualKeySource::server_generated;
      auto j = ckc->join(m, individual, source, rng);
      r.counters = j.counters;
      r.unicasts.push_back({MessageKind::key_unicast, m, {detail::seal_record(individual, j.unicast)}});
      r.detail = std::move(j);
    } else {
      auto& lkh = std::get<LkhTree>(tree_);
      auto j = lkh.join(m, individual, rng);
      const auto& t = lkh.structure();
      r.counters = j.counters;
      for (const auto& d : j.unicast_chain)
        r.unicasts.push_back({MessageKind::key_unicast, m, {detail::seal_record(t.key_at(d.under), d.sealed)}});
      for (const auto& level : j.multicasts) {
        AirMessage msg{MessageKind::key_multicast, "", {}};
        for (const auto& d : level) msg.parts.push_back(detail::seal_record(t.key_at(d.under), d.sealed));
        r.multicasts.push_back(std::move(msg));
      }
      r.detail = std::move(j);
    }
    r.epoch = structure().epoch();
    return r;
  }

  AreaRekey leave(const MemberId& m, Rng& rng) {
    AreaRekey r;
    if (auto* ckc = std::get_if<CkcTree>(&tree_)) {
      const BinaryKeyTree before = ckc->structure();
      auto l = ckc->leave(m, rng);
      r.counters = l.counters;
      for (const auto& p : l.payloads)
        r.multicasts.push_back({MessageKind::key_multicast, "", {detail::seal_record(before.key_at(p.cover_code), p.sealed)}});
      r.detail = std::move(l);
    } else {
      auto& lkh = std::get<LkhTree>(tree_);
      auto l = lkh.leave(m, rng);
      const auto& t = lkh.structure();
      r.counters = l.counters;
      for (const auto& d : l.multicasts)
        r.multicasts.push_back({MessageKind::key_multicast, "", {detail::seal_record(t.key_at(d.under), d.sealed)}});
      r.detail = std::move(l);
    }
    r.epoch = structure().epoch();
    return r;
  }

 private:
  Scheme scheme_;
  std::variant<CkcTree, LkhTree> tree_;
};

/// Member-side key store for one area.
class MemberKeys {
 public:
  MemberKeys() = default;

  static MemberKeys from_join(const MemberId& m, const NodeCode& root, const KeyMaterial& individual,
                              const AreaRekey& r) {
    MemberKeys k;
    if (const auto* j = std::get_if<CkcJoinResult>(&r.detail))
      k.view_ = CkcMemberView::from_grant(m, root, individual, j->unicast);
    else
      k.view_ = LkhMemberView::from_join(m, root, individual, std::get<LkhJoinResult>(r.detail).notice,
                                         std::get<LkhJoinResult>(r.detail).unicast_chain);
    return k;
  }

  /// Existing member's reaction to a join or leave in its area.
  bool apply(const AreaRekey& r) {
    return std::visit(
        [&](auto& v) -> bool {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, CkcMemberView>) {
            if (const auto* j = std::get_if<CkcJoinResult>(&r.detail)) return v.apply_join(j->notice);
            const auto& l = std::get<CkcLeaveResult>(r.detail);
            return v.apply_leave(l.notice, l.payloads);
          } else {
            if (const auto* j = std::get_if<LkhJoinResult>(&r.detail)) return v.apply_join(j->notice, j->multicasts);
            const auto& l = std::get<LkhLeaveResult>(r.detail);
            return v.apply_leave(l.notice, l.multicasts);
          }
        },
        view_);
  }

  const KeyMaterial& group_key() const {
    return std::visit([](const auto& v) -> const KeyMaterial& { return v.group_key(); }, view_);
  }
  std::map<NodeCode, KeyMaterial> held_keys() const {
    return std::visit([](const auto& v) { return v.held_keys(); }, view_);
  }
  const NodeCode& leaf_code() const {
    return std::visit([](const auto& v) -> const NodeCode& { return v.leaf_code(); }, view_);
  }
  std::vector<std::string> mismatches(const BinaryKeyTree& tree) const {
    return std::visit([&](const auto& v) { return view_mismatches(tree, v); }, view_);
  }

 private:
  std::variant<CkcMemberView, LkhMemberView> view_;
};

// ------------------------------------------------------------------ actors

struct AreaWirelessServer {
  AreaId id;
  AreaKeys keys;
  Rng rng;
  std::set<MemberId> present;
  std::set<MemberId> pending_handoffs;  // members moving out, awaiting the ack
};

enum class MemberPhase { detached, joining, connected, probing, reauthenticating, reassociating };

inline constexpr std::string_view phase_name(MemberPhase p) {
  switch (p) {
    case MemberPhase::detached: return "detached";
    case MemberPhase::joining: return "joining";
    case MemberPhase::connected: return "connected";
    case MemberPhase::probing: return "probing";
    case MemberPhase::reauthenticating: return "reauthenticating";
    case MemberPhase::reassociating: return "reassociating";
  }
  return "?";
}

struct FrameStats {
  std::uint64_t expected = 0;   // frames sent by the area the member listened to
  std::uint64_t delivered = 0;  // of those, decrypted
  std::uint64_t after_leave_seen = 0;       // frames of areas it had left
  std::uint64_t after_leave_decrypted = 0;  // of those, opened with any key it kept
};

struct MobileMember {
  MemberId id;
  SasClient client;
  std::map<AreaId, MemberKeys> views;
  std::map<AreaId, MemberKeys> departed;  // last view of each area it left
  std::optional<AreaId> attached;         // area whose content it decrypts
  MemberPhase phase = MemberPhase::detached;
  FrameStats frames;
};

enum class OpKind { join, leave, move };

inline constexpr std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::join: return "join";
    case OpKind::leave: return "leave";
    case OpKind::move: return "move";
  }
  return "?";
}

struct ScriptedOp {
  SimTime time;
  OpKind kind{};
  MemberId member;
  AreaId area;  // join / leave
  AreaId from;  // move
  AreaId to;    // move
  bool forge = false;  // send a corrupted (alpha, beta)
};

struct PhaseDelays {
  SimTime probe;
  SimTime auth;
  SimTime keygen;
  SimTime keydist;
  SimTime reassoc;
};

struct RekeyRecord {
  SimTime time;
  std::string kind;  // join, leave, move_join, move_leave
  AreaId area;
  MemberId member;
  std::size_t group_size = 0;  // area members after a join, before a leave
  RekeyCounters counters;
};

struct JoinSetupRecord {
  MemberId member;
  AreaId area;
  SimTime start;
  SimTime done;
  bool accepted = false;
  SimTime duration() const { return done - start; }
};

struct HandoffRecord {
  MemberId member;
  AreaId from;
  AreaId to;
  SimTime start;
  SimTime probe;
  SimTime reauth;
  SimTime keyprep;
  SimTime reassoc;
  bool accepted = false;
  SimTime total() const { return probe + reauth + keyprep + reassoc; }
};

/// Ciphertext observed on the air in one area.
struct AirRecord {
  SimTime time;
  AreaId area;
  std::uint64_t epoch = 0;  // area epoch when sent
  MemberId addressee;       // empty for area-wide traffic
  MessageKind kind{};
  Sealed sealed;
};

class NetworkObserver {
 public:
  virtual ~NetworkObserver() = default;
  virtual void message(const ProtocolMessage&) {}
  virtual void rekey(const RekeyRecord&) {}
  virtual void join_setup(const JoinSetupRecord&) {}
  virtual void handoff(const HandoffRecord&) {}
  virtual void air(const AirRecord&) {}
  virtual void keys_held(const MemberId&, const AreaId&, const std::map<NodeCode, KeyMaterial>&) {}
  virtual void membership(const MemberId&, const AreaId&, std::uint64_t, bool /*joined*/) {}
  virtual void area_state(const AreaId&, const BinaryKeyTree&) {}
};

/// All actors of one group plus the join / leave / move procedures.
class Network {
 public:
  using Schedule = std::function<void(SimTime, std::function<void()>)>;

  Network(std::string group, Scheme scheme, std::uint64_t seed, PhaseDelays delays, Schedule schedule)
      : main_(std::move(group)), scheme_(scheme), seed_(seed), delays_(delays), schedule_(std::move(schedule)) {}

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void add_observer(NetworkObserver* o) { observers_.push_back(o); }

  void add_area(const AreaId& a) {
    if (areas_.count(a)) throw ProtocolError("duplicate area " + a);
    areas_.emplace(a, AreaWirelessServer{a, AreaKeys(scheme_), Rng::derive(seed_, "area:" + a), {}, {}});
  }

  /// Creates the member; `registered` members get a main-list record.
  void add_member(const MemberId& m, std::string_view password, bool registered) {
    if (members_.count(m)) throw ProtocolError("duplicate member " + m);
    auto& mm = members_.emplace(m, MobileMember{m, SasClient(m, password, Rng::derive(seed_, "member:" + m)), {}, {}, {}, MemberPhase::detached, {}}).first->second;
    if (registered) main_.enroll(mm.client.registration(), SimTime());
  }

  /// Initial roster placement: a complete join with no trace and no counters.
  void bootstrap(const MemberId& m, const AreaId& a, SimTime t) {
    auto& mm = member(m);
    auto ch = mm.client.make_challenge();
    auto entry = main_.lookup(m);
    if (!entry) throw ProtocolError("bootstrap member " + m + " is not registered");
    auto out = verify(entry->auth, ch);
    if (!out.accepted) throw ProtocolError("bootstrap authentication failed for " + m);
    mm.client.confirm();
    complete_join(t, m, a, out, *out.individual_key, "", true);
  }

  /// Runs `op` now or, if the member is mid-procedure, once it is free.
  void submit(const ScriptedOp& op, SimTime now) {
    auto& mm = member(op.member);
    if (busy(mm)) {
      queued_[op.member].push_back(op);
      return;
    }
    start(op, now);
  }

  /// One content frame per non-empty area.
  void frame_tick(SimTime t, std::uint64_t seq, bool trace_frames, bool eavesdrop) {
    for (auto& [aid, area] : areas_) {
      if (area.keys.size() == 0) continue;
      const std::string body = "frame " + aid + " " + std::to_string(seq);
      const Bytes plain(body.begin(), body.end());
      const auto& gk = area.keys.group_key();
      Sealed s{encrypt(gk, plain), gk, std::nullopt};
      if (trace_frames) send(t, MessageKind::content_frame, aws_name(aid), area_cast_name(aid), s.ct.fingerprint());
      for (auto* o : observers_) o->air({t, aid, area.keys.structure().epoch(), "", MessageKind::content_frame, s});
      for (auto& [mid, mm] : members_) {
        if (mm.attached == aid) {
          ++mm.frames.expected;
          auto it = mm.views.find(aid);
          if (it != mm.views.end()) {
            auto p = decrypt(it->second.group_key(), s.ct);
            if (p && *p == plain) ++mm.frames.delivered;
          }
        } else if (eavesdrop && !mm.views.count(aid)) {
          auto d = mm.departed.find(aid);
          if (d == mm.departed.end()) continue;
          ++mm.frames.after_leave_seen;
          for (const auto& [code, key] : d->second.held_keys()) {
            if (decrypt(key, s.ct)) {
              ++mm.frames.after_leave_decrypted;
              break;
            }
          }
        }
      }
    }
  }

  /// Empty when every member view agrees with its area tree.
  std::vector<std::string> mismatches() const {
    std::vector<std::string> out;
    for (const auto& [aid, area] : areas_) {
      const auto& tree = area.keys.structure();
      std::set<MemberId> leaves;
      for (const auto& [m, code] : tree.leaves()) leaves.insert(m);
      if (leaves != area.present) out.push_back("area " + aid + ": tree leaves differ from present members");
      for (const auto& m : area.present) {
        const auto& mm = members_.at(m);
        auto it = mm.views.find(aid);
        if (it == mm.views.end()) {
          out.push_back(m + " has no view of area " + aid);
          continue;
        }
        for (auto& s : it->second.mismatches(tree)) out.push_back(aid + ": " + s);
      }
    }
    return out;
  }

  Scheme scheme() const { return scheme_; }
  const MainList& main_list() const { return main_; }
  const std::map<AreaId, AreaWirelessServer>& areas() const { return areas_; }
  const AreaWirelessServer& area(const AreaId& a) const {
    auto it = areas_.find(a);
    if (it == areas_.end()) throw ProtocolError("unknown area " + a);
    return it->second;
  }
  const std::map<MemberId, MobileMember>& members() const { return members_; }
  const MobileMember& member_state(const MemberId& m) const {
    auto it = members_.find(m);
    if (it == members_.end()) throw ProtocolError("unknown member " + m);
    return it->second;
  }
  bool idle() const {
    for (const auto& [m, mm] : members_)
      if (busy(mm)) return false;
    return true;
  }

 private:
  static bool busy(const MobileMember& mm) {
    return mm.phase != MemberPhase::detached && mm.phase != MemberPhase::connected;
  }

  MobileMember& member(const MemberId& m) {
    auto it = members_.find(m);
    if (it == members_.end()) throw ProtocolError("unknown member " + m);
    return it->second;
  }
  AreaWirelessServer& area_mut(const AreaId& a) {
    auto it = areas_.find(a);
    if (it == areas_.end()) throw ProtocolError("unknown area " + a);
    return it->second;
  }

  void send(SimTime t, MessageKind k, std::string src, std::string dst, std::string payload = "-") {
    ProtocolMessage msg{t, k, std::move(src), std::move(dst), std::move(payload)};
    for (auto* o : observers_) o->message(msg);
  }

  void start(const ScriptedOp& op, SimTime now) {
    switch (op.kind) {
      case OpKind::join: return start_join(op, now);
      case OpKind::leave: return do_leave(op, now);
      case OpKind::move: return start_move(op, now);
    }
  }

  /// Called when a procedure ends; runs the member's next queued operation.
  void finished(const MemberId& m, SimTime t) {
    auto it = queued_.find(m);
    if (it == queued_.end() || it->second.empty()) return;
    ScriptedOp next = it->second.front();
    it->second.pop_front();
    schedule_(t, [this, next, t] { submit(next, t); });
  }

  void update_entry(SimTime t, const MemberId& m, MemberStatus status, const AreaId& area,
                    const std::optional<AuthRecord>& auth = std::nullopt) {
    auto e = *main_.lookup(m);
    e.status = status;
    if (!area.empty()) e.last_area = area;
    if (auth) e.auth = *auth;
    e.service_accounting = members_.at(m).frames.delivered;
    e.last_update = t;
    main_.store(e);
  }

  void broadcast_rekey(SimTime t, const AreaId& a, const MemberId& subject, const AreaRekey& r, bool silent) {
    for (const auto& u : r.unicasts) {
      if (!silent) send(t, u.kind, aws_name(a), u.dst, u.fingerprint());
      for (const auto& p : u.parts)
        for (auto* o : observers_) o->air({t, a, r.epoch, subject, u.kind, p});
    }
    for (const auto& mc : r.multicasts) {
      if (!silent) send(t, mc.kind, aws_name(a), area_cast_name(a), mc.fingerprint());
      for (const auto& p : mc.parts)
        for (auto* o : observers_) o->air({t, a, r.epoch, "", mc.kind, p});
    }
  }

  void report_area(const AreaId& a) {
    const auto& area = areas_.at(a);
    for (auto* o : observers_) {
      o->area_state(a, area.keys.structure());
      for (const auto& m : area.present) o->keys_held(m, a, members_.at(m).views.at(a).held_keys());
    }
  }

  // ---- join

  void start_join(const ScriptedOp& op, SimTime t0) {
    auto& mm = member(op.member);
    if (!mm.views.empty()) throw ProtocolError(op.member + " is already in an area");
    const auto aws = aws_name(op.area);
    area_mut(op.area);
    mm.phase = MemberPhase::joining;
    send(t0, MessageKind::igmp_connect, op.member, aws);
    send(t0, MessageKind::igmp_connect, aws, main_server_name());
    send(t0, MessageKind::join_request, op.member, aws);
    send(t0, MessageKind::mainlist_query, aws, main_server_name());
    auto entry = main_.lookup(op.member);
    send(t0, MessageKind::mainlist_response, main_server_name(), aws, entry ? "found" : "miss");
    auto ch = mm.client.make_challenge();
    if (op.forge) ch.alpha[0] ^= 0x01;
    send(t0, MessageKind::auth_challenge, op.member, aws, fingerprint(std::span(
        reinterpret_cast<const std::uint8_t*>(ch.wire().data()), ch.wire().size())));
    schedule_(t0 + delays_.auth, [this, op, ch, t0] { join_authenticated(op, ch, t0, t0 + delays_.auth); });
  }

  void join_authenticated(const ScriptedOp& op, const AuthChallenge& ch, SimTime t0, SimTime t) {
    auto& mm = member(op.member);
    const auto aws = aws_name(op.area);
    auto entry = main_.lookup(op.member);
    AuthOutcome out;
    if (entry) out = verify(entry->auth, ch);
    send(t, MessageKind::auth_result, aws, op.member, out.accepted ? "accepted" : "rejected");
    if (!out.accepted) {
      mm.client.discard_pending();
      mm.phase = MemberPhase::detached;
      for (auto* o : observers_) o->join_setup({op.member, op.area, t0, t, false});
      finished(op.member, t);
      return;
    }
    mm.client.confirm();
    if (individual_key_from_auth(scheme_)) {
      complete_join(t, op.member, op.area, out, *out.individual_key, "join", false, t0);
      return;
    }
    prepare_individual_key(t, op.member, op.area, out, [this, op, out, t0](SimTime tk, const KeyMaterial& ik) {
      complete_join(tk, op.member, op.area, out, ik, "join", false, t0);
    });
  }

  /// Ordinary schemes: the server draws an individual key and ships it under
  /// the session key of the accepted authentication.
  void prepare_individual_key(SimTime t, const MemberId& m, const AreaId& a, const AuthOutcome& out,
                              std::function<void(SimTime, const KeyMaterial&)> next) {
    const auto aws = aws_name(a);
    send(t, MessageKind::individual_keygen, aws, aws);
    const SimTime t_gen = t + delays_.keygen;
    schedule_(t_gen, [this, m, a, out, next, t_gen, aws] {
      const KeyMaterial ik = random_key(area_mut(a).rng);
      const auto& session = *out.individual_key;
      Sealed s{encrypt(session, ik.span()), session, ik};
      send(t_gen, MessageKind::individual_key_delivery, aws, m, s.ct.fingerprint());
      for (auto* o : observers_) o->air({t_gen, a, area_mut(a).keys.structure().epoch(), m, MessageKind::individual_key_delivery, s});
      const SimTime t_del = t_gen + delays_.keydist;
      schedule_(t_del, [next, t_del, ik] { next(t_del, ik); });
    });
  }

  void complete_join(SimTime t, const MemberId& m, const AreaId& a, const AuthOutcome& out, const KeyMaterial& ik,
                     const std::string& kind, bool silent, SimTime t0 = SimTime()) {
    auto& mm = member(m);
    auto& area = area_mut(a);
    auto r = area.keys.join(m, ik, area.rng);
    for (const auto& other : area.present) member(other).views.at(a).apply(r);
    broadcast_rekey(t, a, m, r, silent);
    mm.views[a] = MemberKeys::from_join(m, area.keys.structure().root_code(), ik, r);
    mm.departed.erase(a);
    area.present.insert(m);
    for (auto* o : observers_) o->membership(m, a, r.epoch, true);
    report_area(a);
    if (!silent)
      for (auto* o : observers_) o->rekey({t, kind, a, m, area.keys.size(), r.counters});
    if (kind == "move_join") return;  // the move procedure finishes the bookkeeping

    mm.attached = a;
    mm.phase = MemberPhase::connected;
    update_entry(t, m, MemberStatus::active, a, out.record);
    if (silent) return;
    send(t, MessageKind::mainlist_update, aws_name(a), main_server_name(), "active");
    send(t, MessageKind::content_frame, main_server_name(), aws_name(a), "start");
    for (auto* o : observers_) o->join_setup({m, a, t0, t, true});
    finished(m, t);
  }

  // ---- leave

  void do_leave(const ScriptedOp& op, SimTime t) {
    auto& mm = member(op.member);
    auto& area = area_mut(op.area);
    if (!area.present.count(op.member)) throw ProtocolError(op.member + " is not in area " + op.area);
    const auto aws = aws_name(op.area);
    send(t, MessageKind::leave_request, op.member, aws);
    send(t, MessageKind::leave_request, aws, main_server_name());
    update_entry(t, op.member, MemberStatus::left, op.area);
    send(t, MessageKind::mainlist_update, aws, main_server_name(), "left");
    mm.attached.reset();
    mm.phase = MemberPhase::detached;
    area_leave(t, op.member, op.area, "leave");
    finished(op.member, t);
  }

  void area_leave(SimTime t, const MemberId& m, const AreaId& a, const std::string& kind) {
    auto& mm = member(m);
    auto& area = area_mut(a);
    const std::size_t before = area.keys.size();
    auto r = area.keys.leave(m, area.rng);
    area.present.erase(m);
    mm.departed[a] = mm.views.at(a);
    mm.views.erase(a);
    for (const auto& other : area.present) member(other).views.at(a).apply(r);
    broadcast_rekey(t, a, "", r, false);
    for (auto* o : observers_) {
      o->membership(m, a, r.epoch, false);
      o->rekey({t, kind, a, m, before, r.counters});
    }
    report_area(a);
  }

  // ---- move

  void start_move(const ScriptedOp& op, SimTime t0) {
    auto& mm = member(op.member);
    if (!area_mut(op.from).present.count(op.member)) throw ProtocolError(op.member + " is not in area " + op.from);
    if (area_mut(op.to).present.count(op.member)) throw ProtocolError(op.member + " is already in area " + op.to);
    mm.phase = MemberPhase::probing;
    const SimTime t1 = t0 + delays_.probe;
    schedule_(t1, [this, op, t0, t1] { move_request(op, t0, t1); });
  }

  void move_request(const ScriptedOp& op, SimTime t0, SimTime t1) {
    auto& mm = member(op.member);
    mm.phase = MemberPhase::reauthenticating;
    const auto from = aws_name(op.from), to = aws_name(op.to);
    send(t1, MessageKind::handoff_leave, op.member, from);
    auto ch = mm.client.make_challenge();
    if (op.forge) ch.alpha[0] ^= 0x01;
    const std::string wire = ch.wire();
    send(t1, MessageKind::handoff_join, op.member, to,
         fingerprint(std::span(reinterpret_cast<const std::uint8_t*>(wire.data()), wire.size())));
    area_mut(op.from).pending_handoffs.insert(op.member);
    update_entry(t1, op.member, MemberStatus::moving, op.from);
    send(t1, MessageKind::mainlist_update, from, main_server_name(), "moving");
    send(t1, MessageKind::mainlist_query, to, main_server_name());
    auto entry = main_.lookup(op.member);
    send(t1, MessageKind::mainlist_response, main_server_name(), to, entry ? "found" : "miss");
    const SimTime t2 = t1 + delays_.auth;
    schedule_(t2, [this, op, ch, t0, t1, t2] { move_authenticated(op, ch, t0, t1, t2); });
  }

  void move_authenticated(const ScriptedOp& op, const AuthChallenge& ch, SimTime t0, SimTime t1, SimTime t2) {
    auto& mm = member(op.member);
    auto entry = main_.lookup(op.member);
    AuthOutcome out;
    if (entry) out = verify(entry->auth, ch);
    send(t2, MessageKind::auth_result, aws_name(op.to), op.member, out.accepted ? "accepted" : "rejected");
    HandoffRecord rec{op.member, op.from, op.to, t0, t1 - t0, t2 - t1, {}, {}, false};
    if (!out.accepted) {
      mm.client.discard_pending();
      area_mut(op.from).pending_handoffs.erase(op.member);
      update_entry(t2, op.member, MemberStatus::active, op.from);
      send(t2, MessageKind::mainlist_update, aws_name(op.from), main_server_name(), "active");
      mm.phase = MemberPhase::connected;
      for (auto* o : observers_) o->handoff(rec);
      finished(op.member, t2);
      return;
    }
    mm.client.confirm();
    mm.phase = MemberPhase::reassociating;
    auto reassociate = [this, op, out, rec](SimTime tk, const KeyMaterial& ik) mutable {
      rec.keyprep = tk - (rec.start + rec.probe + rec.reauth);
      const SimTime t3 = tk + delays_.reassoc;
      rec.reassoc = t3 - tk;
      schedule_(t3, [this, op, out, rec, ik, t3] { move_complete(op, out, ik, rec, t3); });
    };
    if (individual_key_from_auth(scheme_))
      reassociate(t2, *out.individual_key);
    else
      prepare_individual_key(t2, op.member, op.to, out, reassociate);
  }

  void move_complete(const ScriptedOp& op, const AuthOutcome& out, const KeyMaterial& ik, HandoffRecord rec, SimTime t) {
    auto& mm = member(op.member);
    complete_join(t, op.member, op.to, out, ik, "move_join", false);
    mm.attached = op.to;
    update_entry(t, op.member, MemberStatus::active, op.to, out.record);
    send(t, MessageKind::mainlist_update, aws_name(op.to), main_server_name(), "active");
    send(t, MessageKind::area_join_ack, aws_name(op.to), aws_name(op.from));
    area_mut(op.from).pending_handoffs.erase(op.member);
    area_leave(t, op.member, op.from, "move_leave");
    send(t, MessageKind::content_frame, main_server_name(), aws_name(op.to), "start");
    rec.accepted = true;
    for (auto* o : observers_) o->handoff(rec);
    mm.phase = MemberPhase::connected;
    finished(op.member, t);
  }

  MainList main_;
  Scheme scheme_;
  std::uint64_t seed_;
  PhaseDelays delays_;
  Schedule schedule_;
  std::vector<NetworkObserver*> observers_;
  std::map<AreaId, AreaWirelessServer> areas_;
  std::map<MemberId, MobileMember> members_;
  std::map<MemberId, std::deque<ScriptedOp>> queued_;
};

}  // namespace craw
