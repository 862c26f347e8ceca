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

// Micro-ISA execution. Cores fetch through the same policed memory path as
// every other access, so a core's reach is exactly its actor's reach.

#pragma once

#include <functional>
#include <span>

#include "hsim/device.hpp"

namespace hsim {

struct StepResult {
  enum class Kind { Retired, Trapped, Faulted, Halted } kind;
  // Trapped:
  bool smc = false;
  int trap_imm = 0;
  // Faulted:
  std::optional<Fault> fault;
};

inline StepResult step(Device& dev, CpuCore& core) {
  if (core.halted) return {StepResult::Kind::Halted};

  auto faulted = [&](Fault f) {
    core.halted = true;
    return StepResult{StepResult::Kind::Faulted, false, 0, std::move(f)};
  };

  auto fetched = dev.mem_read(core.actor, core.pc, 4);
  if (!fetched.ok()) return faulted(fetched.fault());
  isa::Instr ins = isa::decode(fetched.value().data());
  if (!isa::valid_opcode(ins.op))
    return faulted(dev.fail(ErrKind::InvalidOpcode, core.actor, core.pc,
                            "opcode " + std::to_string(ins.op)));

  auto& r = core.regs;
  uint32_t next = core.pc + 4;
  int32_t simm = ins.imm;

  switch (ins.op) {
    case isa::kLdi:
      r[ins.rd] = static_cast<uint32_t>(simm);
      break;
    case isa::kMov:
      r[ins.rd] = r[ins.rs];
      break;
    case isa::kLd: {
      auto v = dev.read_u32(core.actor, r[ins.rs] + static_cast<uint32_t>(simm));
      if (!v.ok()) return faulted(v.fault());
      r[ins.rd] = v.value();
      break;
    }
    case isa::kSt: {
      auto s = dev.write_u32(core.actor, r[ins.rd] + static_cast<uint32_t>(simm),
                             r[ins.rs]);
      if (!s.ok()) return faulted(s.fault());
      break;
    }
    case isa::kAdd:
      r[ins.rd] += r[ins.rs];
      break;
    case isa::kSub:
      r[ins.rd] -= r[ins.rs];
      break;
    case isa::kCmp:
      core.zflag = r[ins.rd] == r[ins.rs];
      break;
    case isa::kBr:
      next = core.pc + 4 + static_cast<uint32_t>(simm * 4);
      break;
    case isa::kBeq:
      if (core.zflag) next = core.pc + 4 + static_cast<uint32_t>(simm * 4);
      break;
    case isa::kCall: {
      auto s = dev.write_u32(core.actor, core.sp - 4, core.pc + 4);
      if (!s.ok()) return faulted(s.fault());
      core.sp -= 4;
      next = r[ins.rs];
      break;
    }
    case isa::kRet: {
      if (core.sp == core.stack_sentinel)
        return faulted(dev.fail(ErrKind::StackUnderflow, core.actor, core.pc,
                                "RET at stack top"));
      auto v = dev.read_u32(core.actor, core.sp);
      if (!v.ok()) return faulted(v.fault());
      core.sp += 4;
      next = v.value();
      break;
    }
    case isa::kCopy: {
      // dst = rd's register, src = rs's register, length = r7, no bounds
      // check of any kind: whatever the actor can reach, COPY moves.
      uint32_t len = r[7];
      if (len != 0) {
        auto src = dev.mem_read(core.actor, r[ins.rs], len);
        if (!src.ok()) return faulted(src.fault());
        auto s = dev.mem_write(core.actor, r[ins.rd], src.value());
        if (!s.ok()) return faulted(s.fault());
      }
      break;
    }
    case isa::kHalt:
      core.halted = true;
      core.pc = next;
      return {StepResult::Kind::Halted};
    case isa::kSvc:
    case isa::kSmc:
      core.pc = next;
      dev.trace.emit(EventKind::Trap, core.actor, core.pc - 4,
                     std::string(ins.op == isa::kSmc ? "smc" : "svc") + " " +
                         std::to_string(simm));
      return {StepResult::Kind::Trapped, ins.op == isa::kSmc,
              static_cast<int>(simm), std::nullopt};
    default:
      return faulted(dev.fail(ErrKind::InvalidOpcode, core.actor, core.pc,
                              "opcode " + std::to_string(ins.op)));
  }

  core.pc = next;
  return {StepResult::Kind::Retired};
}

struct RunResult {
  enum class End { Halted, Faulted, FuelExhausted } end = End::Halted;
  std::optional<Fault> fault;
  uint64_t steps = 0;
  // Set the first time the pc leaves the watched code ranges. Execution
  // continues: escaped control flow runs whatever it landed on.
  bool escaped = false;
  uint32_t escape_pc = 0;
};

using AddrRange = std::pair<uint32_t, uint32_t>;  // [first, second)
using TrapHandler = std::function<void(Device&, CpuCore&, bool smc, int imm)>;

inline RunResult run(Device& dev, CpuCore& core, uint64_t fuel = kDefaultFuel,
                     std::span<const AddrRange> watch = {},
                     const TrapHandler& on_trap = nullptr) {
  RunResult out;
  auto in_watch = [&](uint32_t pc) {
    for (const auto& [lo, hi] : watch)
      if (pc >= lo && pc < hi) return true;
    return false;
  };
  while (true) {
    if (core.halted) {
      out.end = RunResult::End::Halted;
      return out;
    }
    if (out.steps >= fuel) {
      out.end = RunResult::End::FuelExhausted;
      out.fault = dev.fail(ErrKind::FuelExhausted, core.actor, core.pc,
                           "after " + std::to_string(out.steps) + " steps");
      core.halted = true;
      return out;
    }
    StepResult sr = step(dev, core);
    ++out.steps;
    switch (sr.kind) {
      case StepResult::Kind::Halted:
        out.end = RunResult::End::Halted;
        return out;
      case StepResult::Kind::Faulted:
        out.end = RunResult::End::Faulted;
        out.fault = sr.fault;
        return out;
      case StepResult::Kind::Trapped:
        if (on_trap) on_trap(dev, core, sr.smc, sr.trap_imm);
        break;
      case StepResult::Kind::Retired:
        break;
    }
    if (!watch.empty() && !out.escaped && !core.halted && !in_watch(core.pc)) {
      out.escaped = true;
      out.escape_pc = core.pc;
      dev.trace.emit(EventKind::Exec, core.actor, core.pc,
                     "control left program image");
    }
  }
}

}  // namespace hsim
