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

// The firmware micro-ISA: fifteen fixed-width instructions, an assembler
// and a disassembler. Execution lives with the device (cpu.hpp); this
// header is pure encoding and has no device dependencies.
//
// Every instruction is one 4-byte unit: [opcode][rd][rs][imm8], with imm8
// signed. Branch displacements are relative to the address after the
// branch, in units of 4 bytes.

#pragma once

#include <map>
#include <stdexcept>

#include "hsim/common.hpp"
#include "hsim/trace.hpp"

namespace hsim::isa {

enum Opcode : uint8_t {
  kLdi = 0x01,   // LDI rd, imm8        rd := sign_extend(imm8)
  kMov = 0x02,   // MOV rd, rs          rd := rs
  kLd = 0x03,    // LD rd, [rs+imm8]    rd := mem32[rs+imm8]
  kSt = 0x04,    // ST [rd+imm8], rs    mem32[rd+imm8] := rs
  kAdd = 0x05,   // ADD rd, rs          rd := rd + rs
  kSub = 0x06,   // SUB rd, rs          rd := rd - rs
  kCmp = 0x07,   // CMP rd, rs          zflag := (rd == rs)
  kBr = 0x08,    // BR imm8             pc := pc + 4 + imm8*4
  kBeq = 0x09,   // BEQ imm8            branch when zflag
  kCall = 0x0A,  // CALL rs             mem32[sp-4] := pc+4; sp -= 4; pc := rs
  kRet = 0x0B,   // RET                 pc := mem32[sp]; sp += 4
  kCopy = 0x0C,  // COPY rd, rs         mem[rd .. rd+r7) := mem[rs .. rs+r7)
  kHalt = 0x0D,  // HALT
  kSvc = 0x0E,   // SVC imm8            trap to the kernel services
  kSmc = 0x0F,   // SMC imm8            trap to the secure monitor
};

struct Instr {
  uint8_t op = 0;
  uint8_t rd = 0;
  uint8_t rs = 0;
  int8_t imm = 0;

  std::array<uint8_t, 4> encode() const {
    return {op, rd, rs, static_cast<uint8_t>(imm)};
  }
};

inline Instr decode(const uint8_t unit[4]) {
  return Instr{unit[0], unit[1], unit[2], static_cast<int8_t>(unit[3])};
}

inline bool valid_opcode(uint8_t op) { return op >= kLdi && op <= kSmc; }

/// Registers touched per opcode must stay below this.
inline constexpr unsigned kNumRegs = 8;

struct Program {
  uint32_t origin = 0;
  Bytes bytes;

  uint32_t end() const { return origin + static_cast<uint32_t>(bytes.size()); }
  bool contains(uint32_t addr) const { return addr >= origin && addr < end(); }
};

struct AsmError : std::runtime_error {
  explicit AsmError(const std::string& m) : std::runtime_error(m) {}
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline long parse_int(std::string_view tok, int line) {
  std::string t(tok);
  try {
    size_t used = 0;
    long v = std::stol(t, &used, 0);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw AsmError("line " + std::to_string(line) + ": bad number '" + t + "'");
  }
}

inline uint8_t parse_reg(std::string_view tok, int line) {
  if (tok.size() == 2 && tok[0] == 'r' && tok[1] >= '0' && tok[1] < '8')
    return static_cast<uint8_t>(tok[1] - '0');
  throw AsmError("line " + std::to_string(line) + ": bad register '" +
                 std::string(tok) + "'");
}

inline std::vector<std::string_view> split_ops(std::string_view s) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

// "[rN+imm]" or "[rN-imm]" or "[rN]".
inline std::pair<uint8_t, int8_t> parse_memref(std::string_view tok, int line) {
  if (tok.size() < 4 || tok.front() != '[' || tok.back() != ']')
    throw AsmError("line " + std::to_string(line) + ": bad memory operand '" +
                   std::string(tok) + "'");
  std::string_view inner = trim(tok.substr(1, tok.size() - 2));
  size_t pos = inner.find_first_of("+-", 1);
  uint8_t reg;
  long disp = 0;
  if (pos == std::string_view::npos) {
    reg = parse_reg(trim(inner), line);
  } else {
    reg = parse_reg(trim(inner.substr(0, pos)), line);
    disp = parse_int(trim(inner.substr(pos)), line);
  }
  if (disp < -128 || disp > 127)
    throw AsmError("line " + std::to_string(line) + ": displacement out of range");
  return {reg, static_cast<int8_t>(disp)};
}

}  // namespace detail

/// Two-pass assembler. One instruction or directive per line, ';' starts a
/// comment, 'name:' defines a label. Directives: `.org ADDR` (sets the
/// program origin or skips forward, zero filling) and `.word V`.
/// Branch operands may be labels or raw displacement units.
inline Program assemble(std::string_view src, uint32_t default_origin = 0) {
  using namespace detail;

  struct Line {
    int number;
    std::string_view text;
  };
  std::vector<Line> lines;
  {
    int n = 1;
    size_t start = 0;
    for (size_t i = 0; i <= src.size(); ++i) {
      if (i == src.size() || src[i] == '\n') {
        std::string_view raw = src.substr(start, i - start);
        if (size_t sc = raw.find(';'); sc != std::string_view::npos)
          raw = raw.substr(0, sc);
        raw = trim(raw);
        if (!raw.empty()) lines.push_back({n, raw});
        start = i + 1;
        ++n;
      }
    }
  }

  // Pass 1: label addresses and origin.
  std::map<std::string, uint32_t, std::less<>> labels;
  bool have_origin = false;
  uint32_t origin = default_origin;
  uint32_t pos = default_origin;
  auto measure = [&](std::string_view text, int number) -> uint32_t {
    if (text.starts_with(".org")) {
      long v = parse_int(trim(text.substr(4)), number);
      uint32_t addr = static_cast<uint32_t>(v);
      if (!have_origin && pos == origin) {
        origin = addr;
        have_origin = true;
      } else if (addr < pos) {
        throw AsmError("line " + std::to_string(number) + ": .org moves backwards");
      }
      pos = addr;
      return 0;
    }
    pos += 4;  // every instruction and .word is one 4-byte unit
    return 4;
  };
  for (const Line& ln : lines) {
    std::string_view text = ln.text;
    while (true) {
      size_t colon = text.find(':');
      size_t space = text.find_first_of(" \t");
      if (colon != std::string_view::npos &&
          (space == std::string_view::npos || colon < space)) {
        std::string name(trim(text.substr(0, colon)));
        if (name.empty())
          throw AsmError("line " + std::to_string(ln.number) + ": empty label");
        if (!labels.emplace(name, pos).second)
          throw AsmError("line " + std::to_string(ln.number) +
                         ": duplicate label '" + name + "'");
        text = trim(text.substr(colon + 1));
        if (text.empty()) break;
        continue;
      }
      measure(text, ln.number);
      break;
    }
  }

  // Pass 2: emit.
  Program prog;
  prog.origin = origin;
  pos = origin;
  auto emit_at = [&](uint32_t addr, const std::array<uint8_t, 4>& unit) {
    size_t off = addr - prog.origin;
    if (prog.bytes.size() < off + 4) prog.bytes.resize(off + 4, 0);
    std::memcpy(prog.bytes.data() + off, unit.data(), 4);
  };
  auto branch_disp = [&](std::string_view tok, uint32_t at, int number) -> int8_t {
    long units;
    if (auto it = labels.find(tok); it != labels.end()) {
      long delta = static_cast<long>(it->second) - static_cast<long>(at + 4);
      if (delta % 4 != 0)
        throw AsmError("line " + std::to_string(number) + ": unaligned branch");
      units = delta / 4;
    } else {
      units = parse_int(tok, number);
    }
    if (units < -128 || units > 127)
      throw AsmError("line " + std::to_string(number) + ": branch out of range");
    return static_cast<int8_t>(units);
  };

  for (const Line& ln : lines) {
    std::string_view text = ln.text;
    while (true) {
      size_t colon = text.find(':');
      size_t space = text.find_first_of(" \t");
      if (colon != std::string_view::npos &&
          (space == std::string_view::npos || colon < space)) {
        text = trim(text.substr(colon + 1));
        if (text.empty()) break;
        continue;
      }

      if (text.starts_with(".org")) {
        long v = parse_int(trim(text.substr(4)), ln.number);
        pos = static_cast<uint32_t>(v);
        break;
      }
      if (text.starts_with(".word")) {
        std::string_view tok = trim(text.substr(5));
        uint32_t v;
        if (auto it = labels.find(tok); it != labels.end()) {
          v = it->second;
        } else {
          v = static_cast<uint32_t>(parse_int(tok, ln.number));
        }
        std::array<uint8_t, 4> unit;
        wr_le32(unit.data(), v);
        emit_at(pos, unit);
        pos += 4;
        break;
      }

      size_t sp = text.find_first_of(" \t");
      std::string mnemonic(text.substr(0, sp));
      for (char& c : mnemonic) c = static_cast<char>(std::toupper(c));
      auto ops = split_ops(sp == std::string_view::npos
                               ? std::string_view{}
                               : trim(text.substr(sp)));
      auto need = [&](size_t n) {
        if (ops.size() != n)
          throw AsmError("line " + std::to_string(ln.number) + ": " + mnemonic +
                         " expects " + std::to_string(n) + " operand(s)");
      };

      Instr ins;
      if (mnemonic == "LDI") {
        need(2);
        long v = parse_int(ops[1], ln.number);
        if (v < -128 || v > 127)
          throw AsmError("line " + std::to_string(ln.number) +
                         ": LDI immediate out of range");
        ins = {kLdi, parse_reg(ops[0], ln.number), 0, static_cast<int8_t>(v)};
      } else if (mnemonic == "MOV") {
        need(2);
        ins = {kMov, parse_reg(ops[0], ln.number), parse_reg(ops[1], ln.number), 0};
      } else if (mnemonic == "LD") {
        need(2);
        auto [reg, disp] = parse_memref(ops[1], ln.number);
        ins = {kLd, parse_reg(ops[0], ln.number), reg, disp};
      } else if (mnemonic == "ST") {
        need(2);
        auto [reg, disp] = parse_memref(ops[0], ln.number);
        ins = {kSt, reg, parse_reg(ops[1], ln.number), disp};
      } else if (mnemonic == "ADD" || mnemonic == "SUB" || mnemonic == "CMP") {
        need(2);
        uint8_t op = mnemonic == "ADD" ? kAdd : mnemonic == "SUB" ? kSub : kCmp;
        ins = {op, parse_reg(ops[0], ln.number), parse_reg(ops[1], ln.number), 0};
      } else if (mnemonic == "BR" || mnemonic == "BEQ") {
        need(1);
        ins = {mnemonic == "BR" ? kBr : kBeq, 0, 0,
               branch_disp(ops[0], pos, ln.number)};
      } else if (mnemonic == "CALL") {
        need(1);
        ins = {kCall, 0, parse_reg(ops[0], ln.number), 0};
      } else if (mnemonic == "RET") {
        need(0);
        ins = {kRet, 0, 0, 0};
      } else if (mnemonic == "COPY") {
        // Bare COPY uses the r0 = destination, r1 = source convention.
        if (ops.empty()) {
          ins = {kCopy, 0, 1, 0};
        } else {
          need(2);
          ins = {kCopy, parse_reg(ops[0], ln.number),
                 parse_reg(ops[1], ln.number), 0};
        }
      } else if (mnemonic == "HALT") {
        need(0);
        ins = {kHalt, 0, 0, 0};
      } else if (mnemonic == "SVC" || mnemonic == "SMC") {
        need(1);
        long v = parse_int(ops[0], ln.number);
        if (v < 0 || v > 127)
          throw AsmError("line " + std::to_string(ln.number) +
                         ": trap number out of range");
        ins = {mnemonic == "SVC" ? kSvc : kSmc, 0, 0, static_cast<int8_t>(v)};
      } else {
        throw AsmError("line " + std::to_string(ln.number) +
                       ": unknown mnemonic '" + mnemonic + "'");
      }

      emit_at(pos, ins.encode());
      pos += 4;
      break;
    }
  }
  return prog;
}

inline std::string disassemble(const Instr& i) {
  auto r = [](uint8_t n) { return "r" + std::to_string(n); };
  auto imm = [&] { return std::to_string(static_cast<int>(i.imm)); };
  auto disp = [&] { return i.imm < 0 ? imm() : "+" + imm(); };
  switch (i.op) {
    case kLdi: return "LDI " + r(i.rd) + ", " + imm();
    case kMov: return "MOV " + r(i.rd) + ", " + r(i.rs);
    case kLd: return "LD " + r(i.rd) + ", [" + r(i.rs) + disp() + "]";
    case kSt: return "ST [" + r(i.rd) + disp() + "], " + r(i.rs);
    case kAdd: return "ADD " + r(i.rd) + ", " + r(i.rs);
    case kSub: return "SUB " + r(i.rd) + ", " + r(i.rs);
    case kCmp: return "CMP " + r(i.rd) + ", " + r(i.rs);
    case kBr: return "BR " + imm();
    case kBeq: return "BEQ " + imm();
    case kCall: return "CALL " + r(i.rs);
    case kRet: return "RET";
    case kCopy: return "COPY " + r(i.rd) + ", " + r(i.rs);
    case kHalt: return "HALT";
    case kSvc: return "SVC " + imm();
    case kSmc: return "SMC " + imm();
    default: return ".byte " + std::to_string(i.op);
  }
}

}  // namespace hsim::isa

namespace hsim {

/// Architectural state of one micro-ISA core. The stack grows down; the
/// sentinel records the reset-time stack top so RET can detect underflow.
struct CpuCore {
  Actor actor = Actor::BpmpCore;
  std::array<uint32_t, isa::kNumRegs> regs{};
  uint32_t sp = 0;
  uint32_t pc = 0;
  uint32_t stack_sentinel = 0;
  bool zflag = false;
  bool halted = false;

  void reset(uint32_t entry, uint32_t stack_top) {
    regs.fill(0);
    pc = entry;
    sp = stack_top;
    stack_sentinel = stack_top;
    zflag = false;
    halted = false;
  }
};

}  // namespace hsim
