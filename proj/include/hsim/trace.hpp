// Copyright 2026 The hsim Authors
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

// Actors, fault records and the device event trace. Every observable step
// a device takes lands in the trace; reports and audits are built from it.

#pragma once

#include <optional>
#include <variant>

#include "hsim/common.hpp"

namespace hsim {

enum class Actor : uint8_t {
  UserlandProcess,
  NormalKernel,
  SecureMonitor,
  BpmpCore,
  TsecCore,
  ExternalUsbHost,
};

inline const char* to_string(Actor a) {
  switch (a) {
    case Actor::UserlandProcess: return "userland";
    case Actor::NormalKernel: return "kernel";
    case Actor::SecureMonitor: return "secmon";
    case Actor::BpmpCore: return "bpmp";
    case Actor::TsecCore: return "tsec";
    case Actor::ExternalUsbHost: return "usb-host";
  }
  return "?";
}

inline bool is_secure(Actor a) { return a == Actor::SecureMonitor; }

enum class ErrKind : uint8_t {
  // Platform and core faults.
  UnmappedAccess,
  AccessDenied,
  InvalidOpcode,
  StackUnderflow,
  FuelExhausted,
  CoreHalt,
  ControlFlowEscape,
  // IPC and service errors.
  BadMessage,
  PortNotFound,
  InvalidSession,
  NotInitialized,
  SessionLimitReached,
  OutOfRange,
  UnknownTitle,
  NoSuchProcess,
  ServiceUnavailable,
  // Boot, secure monitor and TSEC errors.
  RejectedOversize,
  NotInRcm,
  MacMismatch,
  BadImage,
  NotAsleep,
  NotBooted,
  UnknownProfile,
  UnknownSmc,
  FeatureDisabled,
  WrongMode,
  TagMismatch,
};

inline const char* to_string(ErrKind k) {
  switch (k) {
    case ErrKind::UnmappedAccess: return "UnmappedAccess";
    case ErrKind::AccessDenied: return "AccessDenied";
    case ErrKind::InvalidOpcode: return "InvalidOpcode";
    case ErrKind::StackUnderflow: return "StackUnderflow";
    case ErrKind::FuelExhausted: return "FuelExhausted";
    case ErrKind::CoreHalt: return "CoreHalt";
    case ErrKind::ControlFlowEscape: return "ControlFlowEscape";
    case ErrKind::BadMessage: return "BadMessage";
    case ErrKind::PortNotFound: return "PortNotFound";
    case ErrKind::InvalidSession: return "InvalidSession";
    case ErrKind::NotInitialized: return "NotInitialized";
    case ErrKind::SessionLimitReached: return "SessionLimitReached";
    case ErrKind::OutOfRange: return "OutOfRange";
    case ErrKind::UnknownTitle: return "UnknownTitle";
    case ErrKind::NoSuchProcess: return "NoSuchProcess";
    case ErrKind::ServiceUnavailable: return "ServiceUnavailable";
    case ErrKind::RejectedOversize: return "RejectedOversize";
    case ErrKind::NotInRcm: return "NotInRcm";
    case ErrKind::MacMismatch: return "MacMismatch";
    case ErrKind::BadImage: return "BadImage";
    case ErrKind::NotAsleep: return "NotAsleep";
    case ErrKind::NotBooted: return "NotBooted";
    case ErrKind::UnknownProfile: return "UnknownProfile";
    case ErrKind::UnknownSmc: return "UnknownSmc";
    case ErrKind::FeatureDisabled: return "FeatureDisabled";
    case ErrKind::WrongMode: return "WrongMode";
    case ErrKind::TagMismatch: return "TagMismatch";
  }
  return "?";
}

/// One failed operation. `addr` is set for memory-shaped faults; `detail`
/// is human-oriented and must never carry secret bytes (audited).
struct Fault {
  ErrKind kind = ErrKind::UnmappedAccess;
  Actor actor = Actor::UserlandProcess;
  std::optional<uint32_t> addr;
  std::string detail;

  std::string render() const {
    std::string s = to_string(kind);
    s += " actor=";
    s += to_string(actor);
    if (addr) {
      s += " addr=";
      s += hex32(*addr);
    }
    if (!detail.empty()) {
      s += " (";
      s += detail;
      s += ")";
    }
    return s;
  }
};

/// Minimal expected/result type: a value or a Fault.
template <typename T>
class Result {
 public:
  Result(T v) : v_(std::move(v)) {}       // NOLINT: implicit by design
  Result(Fault f) : v_(std::move(f)) {}   // NOLINT: implicit by design

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }
  const T& value() const { return std::get<T>(v_); }
  T& value() { return std::get<T>(v_); }
  const Fault& fault() const { return std::get<Fault>(v_); }

 private:
  std::variant<T, Fault> v_;
};

struct Unit {};
using Status = Result<Unit>;

inline Status ok_status() { return Status(Unit{}); }

enum class EventKind : uint8_t {
  MemRead,
  MemWrite,
  PmcWrite,
  SeOp,
  Exec,
  Trap,
  Stage,
  Service,
  Smc,
  TsecOp,
  FaultEvent,
  Note,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::MemRead: return "mem-read";
    case EventKind::MemWrite: return "mem-write";
    case EventKind::PmcWrite: return "pmc-write";
    case EventKind::SeOp: return "se-op";
    case EventKind::Exec: return "exec";
    case EventKind::Trap: return "trap";
    case EventKind::Stage: return "stage";
    case EventKind::Service: return "service";
    case EventKind::Smc: return "smc";
    case EventKind::TsecOp: return "tsec-op";
    case EventKind::FaultEvent: return "fault";
    case EventKind::Note: return "note";
  }
  return "?";
}

struct Event {
  uint64_t seq = 0;
  EventKind kind = EventKind::Note;
  Actor actor = Actor::UserlandProcess;
  std::optional<uint32_t> addr;
  std::string detail;

  std::string render() const {
    std::string s = std::to_string(seq);
    s += " ";
    s += to_string(kind);
    s += " ";
    s += to_string(actor);
    if (addr) {
      s += " ";
      s += hex32(*addr);
    }
    if (!detail.empty()) {
      s += " ";
      s += detail;
    }
    return s;
  }
};

class Trace {
 public:
  void emit(EventKind kind, Actor actor, std::optional<uint32_t> addr,
            std::string detail) {
    events_.push_back(
        Event{next_seq_++, kind, actor, addr, std::move(detail)});
  }

  void note(std::string detail) {
    emit(EventKind::Note, Actor::SecureMonitor, std::nullopt,
         std::move(detail));
  }

  const std::vector<Event>& events() const { return events_; }
  void clear() { events_.clear(); next_seq_ = 0; }

 private:
  std::vector<Event> events_;
  uint64_t next_seq_ = 0;
};

}  // namespace hsim
