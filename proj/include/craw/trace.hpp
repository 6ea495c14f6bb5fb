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

// Simulated time and the protocol message trace.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "craw/error.hpp"

namespace craw {

/// Fixed-point simulated time in microseconds.
class SimTime {
 public:
  constexpr SimTime() = default;
  static constexpr SimTime from_micros(std::int64_t us) { return SimTime(us); }
  static SimTime from_seconds(double s) {
    if (!std::isfinite(s)) throw DomainError("time must be finite");
    return SimTime(std::llround(s * 1e6));
  }

  constexpr std::int64_t micros() const { return us_; }
  double seconds() const { return static_cast<double>(us_) / 1e6; }

  /// Seconds with exactly six decimals.
  std::string str() const {
    const std::int64_t a = us_ < 0 ? -us_ : us_;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%s%lld.%06lld", us_ < 0 ? "-" : "", static_cast<long long>(a / 1000000),
                  static_cast<long long>(a % 1000000));
    return buf;
  }

  constexpr SimTime operator+(SimTime o) const { return SimTime(us_ + o.us_); }
  constexpr SimTime operator-(SimTime o) const { return SimTime(us_ - o.us_); }
  SimTime& operator+=(SimTime o) {
    us_ += o.us_;
    return *this;
  }
  friend constexpr bool operator==(SimTime, SimTime) = default;
  friend constexpr auto operator<=>(SimTime, SimTime) = default;
  friend std::ostream& operator<<(std::ostream& os, SimTime t) { return os << t.str(); }

 private:
  constexpr explicit SimTime(std::int64_t us) : us_(us) {}
  std::int64_t us_ = 0;
};

enum class MessageKind {
  igmp_connect,
  join_request,
  mainlist_query,
  mainlist_response,
  auth_challenge,
  auth_result,
  individual_keygen,
  individual_key_delivery,
  key_unicast,
  key_multicast,
  leave_request,
  handoff_leave,
  handoff_join,
  area_join_ack,
  mainlist_update,
  content_frame,
};

inline constexpr std::string_view kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::igmp_connect: return "igmp_connect";
    case MessageKind::join_request: return "join_request";
    case MessageKind::mainlist_query: return "mainlist_query";
    case MessageKind::mainlist_response: return "mainlist_response";
    case MessageKind::auth_challenge: return "auth_challenge";
    case MessageKind::auth_result: return "auth_result";
    case MessageKind::individual_keygen: return "individual_keygen";
    case MessageKind::individual_key_delivery: return "individual_key_delivery";
    case MessageKind::key_unicast: return "key_unicast";
    case MessageKind::key_multicast: return "key_multicast";
    case MessageKind::leave_request: return "leave_request";
    case MessageKind::handoff_leave: return "handoff_leave";
    case MessageKind::handoff_join: return "handoff_join";
    case MessageKind::area_join_ack: return "area_join_ack";
    case MessageKind::mainlist_update: return "mainlist_update";
    case MessageKind::content_frame: return "content_frame";
  }
  return "?";
}

inline std::optional<MessageKind> parse_kind(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(MessageKind::content_frame); ++i) {
    auto k = static_cast<MessageKind>(i);
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

/// Actor names used as src/dst.
inline std::string main_server_name() { return "main"; }
inline std::string aws_name(std::string_view area) { return "aws:" + std::string(area); }
inline std::string area_cast_name(std::string_view area) { return "area:" + std::string(area); }

struct ProtocolMessage {
  SimTime time;
  MessageKind kind{};
  std::string src;
  std::string dst;
  std::string payload;  // fingerprint or short status token; "-" when empty

  /// `time kind src dst payload`
  std::string line() const {
    return time.str() + " " + std::string(kind_name(kind)) + " " + src + " " + dst + " " +
           (payload.empty() ? "-" : payload);
  }
  /// The same without time and payload; what golden files pin.
  std::string shape() const { return std::string(kind_name(kind)) + " " + src + " " + dst; }
};

class TraceLog {
 public:
  void push(ProtocolMessage m) { messages_.push_back(std::move(m)); }
  const std::vector<ProtocolMessage>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  void clear() { messages_.clear(); }

  std::string text() const {
    std::string out;
    for (const auto& m : messages_) out += m.line() + "\n";
    return out;
  }
  std::string shapes() const {
    std::string out;
    for (const auto& m : messages_) out += m.shape() + "\n";
    return out;
  }

 private:
  std::vector<ProtocolMessage> messages_;
};

}  // namespace craw
