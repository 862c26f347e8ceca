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

// The simulated device: memory spaces and their access policy, the PMC
// scratch bank, the security-engine keyslots, the TSEC co-processor state,
// the service registry, and the per-device secret material. Subsystem
// behavior (boot, services, secure monitor, TSEC firmware) lives in the
// sibling headers as free functions over Device.

#pragma once

#include <map>

#include "hsim/aes.hpp"
#include "hsim/common.hpp"
#include "hsim/isa.hpp"
#include "hsim/profile.hpp"
#include "hsim/trace.hpp"

namespace hsim {

// ---------------------------------------------------------------------------
// Address map.

inline constexpr uint32_t kDramBase = 0x8000'0000, kDramSize = 0x0010'0000;
inline constexpr uint32_t kTzramBase = 0x7C01'0000, kTzramSize = 0x0001'0000;
inline constexpr uint32_t kBpmpBase = 0x4000'0000, kBpmpSize = 0x0000'4000;
inline constexpr uint32_t kTsecImemBase = 0x0010'0000, kTsecImemSize = 0x4000;
inline constexpr uint32_t kTsecDmemBase = 0x0020'0000, kTsecDmemSize = 0x4000;

// BPMP-internal layout. The return slot sits at the top of a descending
// stack, directly above the receive buffer: an unchecked copy into the
// buffer can reach it.
inline constexpr uint32_t kBpmpVectorsBase = kBpmpBase;        // 9 words
inline constexpr uint32_t kBpmpVectorsEnd = kBpmpBase + 0x24;
inline constexpr uint32_t kBpmpMailbox = kBpmpBase + 0x30;
inline constexpr uint32_t kRcmBufferAddr = kBpmpBase + 0x1000;
inline constexpr uint32_t kRcmBufferCap = 0x400;
inline constexpr uint32_t kBpmpStackTop = kBpmpBase + 0x1800;
inline constexpr uint32_t kBpmpReturnSlot = kBpmpBase + 0x17FC;
inline constexpr uint32_t kBootromBase = kBpmpBase + 0x2000;

// TSEC layout: 64 IMEM pages of 0x100 bytes; DMEM mirrors the BPMP stack
// discipline so one overflow mechanic serves both cores.
inline constexpr uint32_t kTsecPageSize = 0x100;
inline constexpr uint32_t kTsecNumPages = 64;
inline constexpr uint32_t kDmemResidueAddr = kTsecDmemBase + 0x0FF0;
inline constexpr uint32_t kDmemStagingAddr = kTsecDmemBase + 0x1000;
inline constexpr uint32_t kDmemStagingCap = 0x400;
inline constexpr uint32_t kFalconStackTop = kTsecDmemBase + 0x1800;
inline constexpr uint32_t kFalconReturnSlot = kTsecDmemBase + 0x17FC;
inline constexpr uint32_t kSecretReadWord = 0xDEAD5EC1;

// Fixed DRAM carve-outs (offsets from kDramBase).
inline constexpr uint32_t kDramPk11Offset = 0x0001'0000;
inline constexpr uint32_t kDramFwOffset = 0x0002'0000;
inline constexpr uint32_t kDramSleepOffset = 0x0004'0000;
inline constexpr uint32_t kDramMitmOffset = 0x0006'0000;
inline constexpr uint32_t kDramRcmStageOffset = 0x0008'0000;
inline constexpr uint32_t kDramRcmStageCap = 0x1'0000;

inline constexpr uint32_t kSmmuPageShift = 12;

// Security-engine slot assignments.
inline constexpr unsigned kSeNumSlots = 16;
inline constexpr unsigned kSlotSbk = 0;
inline constexpr unsigned kSlotSeal = 1;
inline constexpr unsigned kSlotPk11Enc = 2;
inline constexpr unsigned kSlotPk11Mac = 3;
inline constexpr unsigned kSlotTsecRoot = 13;
inline constexpr unsigned kSlotKSave = 14;
inline constexpr unsigned kSlotScratch = 15;

inline constexpr uint64_t kDefaultFuel = 1'000'000;

enum class SpaceId : uint8_t { Dram, Tzram, BpmpMem, TsecImem, TsecDmem };

inline const char* to_string(SpaceId s) {
  switch (s) {
    case SpaceId::Dram: return "DRAM";
    case SpaceId::Tzram: return "TZRAM";
    case SpaceId::BpmpMem: return "BPMP_MEM";
    case SpaceId::TsecImem: return "TSEC_IMEM";
    case SpaceId::TsecDmem: return "TSEC_DMEM";
  }
  return "?";
}

enum class DeviceState : uint8_t { Cold, Rcm, Booted, DeepSleep, Halted };

inline const char* to_string(DeviceState s) {
  switch (s) {
    case DeviceState::Cold: return "cold";
    case DeviceState::Rcm: return "rcm";
    case DeviceState::Booted: return "booted";
    case DeviceState::DeepSleep: return "deep-sleep";
    case DeviceState::Halted: return "halted";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Subsystem state.

struct SeSlot {
  Block key{};
  bool loaded = false;
  bool readable = false;  // no slot on this device is data-readable
};

enum class FalconMode : uint8_t { NS, HS };

inline const char* to_string(FalconMode m) {
  return m == FalconMode::NS ? "NS" : "HS";
}

struct TsecPage {
  bool validated = false;
  bool secret = false;
};

struct TsecState {
  CpuCore core;                 // actor TsecCore
  FalconMode mode = FalconMode::NS;
  std::array<TsecPage, kTsecNumPages> pages{};
  std::array<uint32_t, 4> sor1{};
  // Falcon crypto unit: one active derived keyslot.
  Block active_key{};
  bool active_key_loaded = false;
  // SMMU view of external memory.
  bool smmu_bypass = false;
  std::map<uint32_t, uint32_t> page_map;  // visible page -> backing page
  // Compromise and delivery book-keeping.
  bool scrambled = false;
  bool hs_control = false;    // attacker drives a captured HS context
  bool pkg1_session = false;  // post-takeover key session for PK11 code
  bool root_delivered = false;
};

struct Process {
  std::string name;
  uint32_t pid = 0;
  bool alive = true;
  std::vector<std::string> allowed_services;
};

struct Session {
  uint32_t handle = 0;
  std::string service;
  uint32_t owner_pid = 0;
  // sm: sessions carry the initialization handshake state. A session that
  // skipped Initialize keeps declared_pid = 0.
  bool initialized = false;
  uint32_t declared_pid = 0;
};

struct ServiceEntry {
  std::string name;
  uint32_t max_sessions = 8;
  std::string server;   // process that answers this service
  bool is_port = false; // reachable by svc_connect_to_named_port
  std::vector<uint32_t> open_handles;
};

struct TitleModule {
  std::string name;
  uint64_t title_id = 0;
  Bytes blob;
};

struct ServiceState {
  std::map<std::string, Process> processes;
  std::map<std::string, ServiceEntry> services;
  std::map<uint32_t, Session> sessions;
  std::map<uint32_t, uint64_t> code_fs;  // open code-fs handle -> title_id
  std::vector<TitleModule> modules;
  // pl:u server image: 64 font words followed by a planted 16-byte secret.
  Bytes plu_image;
  uint32_t plu_secret_offset = 0;
  uint64_t handle_salt = 0;
  uint32_t next_handle_seq = 1;
};

inline constexpr uint32_t kPluFontWords = 64;

struct Package1 {
  bool installed = false;
  Bytes pk1ldr;
  Bytes pk11_ct;
  Block pk11_mac{};
  // Factory records, not attacker-writable: the bootrom checks pk1ldr
  // against the fuse MAC, the 6.2-era SecureBoot checks the staged PK11
  // against the fuse tag. The 7.0-era auth tag lives in writable storage
  // metadata instead (see tsec.hpp).
  Block fuse_pk1ldr_mac{};
  Block pk11_fuse_tag{};
  Block pk11_auth_tag{};
  uint32_t pk11_plain_len = 0;
};

struct SecmonState {
  std::vector<std::pair<std::string, Block>> device_keys;
  Block authentic_tzram_digest{};
  uint64_t rng_counter = 0;
  bool sleep_image_valid = false;
};

/// Factory-known secret material, all derived from the per-device seed.
/// This is the simulator's omniscient view; nothing in the modeled device
/// exposes these as data.
struct Silicon {
  std::array<uint8_t, 32> seed32{};
  Block sbk{};
  Block csecret_hs{};
  Block csecret_root{};
  Block dk_seal{};
  Block dk_master{};
  Block k_save{};
  Block k_fuse{};
  Block k_pk11_enc{};
  Block k_pk11_mac{};
  Block k_blob{};
  Block k_audit{};
};

// ---------------------------------------------------------------------------
// Device.

class Device {
 public:
  Device(uint64_t seed, const Profile& profile) : seed_(seed), profile_(profile) {
    derive_silicon();
    reset_volatile();
  }

  uint64_t seed() const { return seed_; }
  const Profile& profile() const { return profile_; }
  const Silicon& silicon() const { return silicon_; }

  Trace trace;
  DeviceState state = DeviceState::Cold;
  std::vector<std::string> stage_trace;

  std::array<uint32_t, 32> pmc{};
  std::array<SeSlot, kSeNumSlots> se{};
  CpuCore bpmp;
  TsecState tsec;
  ServiceState svc;
  Package1 package1;
  SecmonState secmon;

  // The bootrom opens this window while restoring a sleep image; it is the
  // only period where the BPMP-hosted path may touch TZRAM.
  bool warm_restore_window = false;

  // -------------------------------------------------------------------------
  // Memory.

  struct Location {
    SpaceId space;
    uint32_t offset;
  };

  std::optional<Location> resolve(uint32_t addr, uint32_t len) const {
    auto in = [&](uint32_t base, uint32_t size) {
      return addr >= base && len <= size && addr - base <= size - len;
    };
    if (in(kDramBase, kDramSize)) return Location{SpaceId::Dram, addr - kDramBase};
    if (in(kTzramBase, kTzramSize))
      return Location{SpaceId::Tzram, addr - kTzramBase};
    if (in(kBpmpBase, kBpmpSize))
      return Location{SpaceId::BpmpMem, addr - kBpmpBase};
    if (in(kTsecImemBase, kTsecImemSize))
      return Location{SpaceId::TsecImem, addr - kTsecImemBase};
    if (in(kTsecDmemBase, kTsecDmemSize))
      return Location{SpaceId::TsecDmem, addr - kTsecDmemBase};
    return std::nullopt;
  }

  Bytes& backing(SpaceId s) {
    switch (s) {
      case SpaceId::Dram: return dram_;
      case SpaceId::Tzram: return tzram_;
      case SpaceId::BpmpMem: return bpmp_mem_;
      case SpaceId::TsecImem: return imem_;
      case SpaceId::TsecDmem: return dmem_;
    }
    return dram_;
  }

  const Bytes& backing(SpaceId s) const {
    return const_cast<Device*>(this)->backing(s);
  }

  bool allowed(Actor actor, SpaceId space, bool write) const {
    switch (space) {
      case SpaceId::Dram:
        return actor != Actor::ExternalUsbHost;
      case SpaceId::Tzram:
        if (actor == Actor::SecureMonitor) return true;
        if (actor == Actor::BpmpCore && warm_restore_window) return true;
        return false;
      case SpaceId::BpmpMem:
        return actor == Actor::BpmpCore || actor == Actor::SecureMonitor ||
               actor == Actor::TsecCore;
      case SpaceId::TsecImem:
      case SpaceId::TsecDmem:
        (void)write;
        return actor == Actor::TsecCore || actor == Actor::BpmpCore ||
               actor == Actor::SecureMonitor;
    }
    return false;
  }

  /// TSEC-issued addresses outside its private memories pass through the
  /// SMMU: identity unless remapped, physical when the bypass is fused in.
  uint32_t smmu_translate(uint32_t addr) const {
    if (tsec.smmu_bypass) return addr;
    uint32_t page = addr >> kSmmuPageShift;
    auto it = tsec.page_map.find(page);
    if (it == tsec.page_map.end()) return addr;
    return (it->second << kSmmuPageShift) |
           (addr & ((1u << kSmmuPageShift) - 1));
  }

  bool tsec_private(uint32_t addr, uint32_t len) const {
    auto loc = resolve(addr, len);
    return loc && (loc->space == SpaceId::TsecImem ||
                   loc->space == SpaceId::TsecDmem);
  }

  Result<Bytes> mem_read(Actor actor, uint32_t addr, uint32_t len) {
    if (actor == Actor::TsecCore && !tsec_private(addr, len))
      addr = smmu_translate(addr);
    auto loc = resolve(addr, len);
    if (!loc)
      return fail(ErrKind::UnmappedAccess, actor, addr, "read len=" + std::to_string(len));
    if (!allowed(actor, loc->space, false))
      return fail(ErrKind::AccessDenied, actor, addr,
                  std::string("read ") + to_string(loc->space));
    trace.emit(EventKind::MemRead, actor, addr,
               std::string(to_string(loc->space)) + " len=" + std::to_string(len));
    Bytes out(backing(loc->space).begin() + loc->offset,
              backing(loc->space).begin() + loc->offset + len);
    if (loc->space == SpaceId::TsecImem) filter_secret_pages(actor, *loc, len, out);
    return out;
  }

  Status mem_write(Actor actor, uint32_t addr, const uint8_t* data, uint32_t len) {
    if (actor == Actor::TsecCore && !tsec_private(addr, len))
      addr = smmu_translate(addr);
    auto loc = resolve(addr, len);
    if (!loc)
      return fail(ErrKind::UnmappedAccess, actor, addr,
                  "write len=" + std::to_string(len));
    if (!allowed(actor, loc->space, true))
      return fail(ErrKind::AccessDenied, actor, addr,
                  std::string("write ") + to_string(loc->space));
    if (loc->space == SpaceId::TsecImem) {
      uint32_t first = loc->offset / kTsecPageSize;
      uint32_t last = (loc->offset + len - 1) / kTsecPageSize;
      for (uint32_t p = first; p <= last; ++p) {
        if (tsec.pages[p].secret)
          return fail(ErrKind::AccessDenied, actor, addr,
                      "write to secret IMEM page " + std::to_string(p));
      }
    }
    trace.emit(EventKind::MemWrite, actor, addr,
               std::string(to_string(loc->space)) + " len=" + std::to_string(len));
    std::memcpy(backing(loc->space).data() + loc->offset, data, len);
    return ok_status();
  }

  Status mem_write(Actor actor, uint32_t addr, const Bytes& data) {
    return mem_write(actor, addr, data.data(), static_cast<uint32_t>(data.size()));
  }

  Result<uint32_t> read_u32(Actor actor, uint32_t addr) {
    auto r = mem_read(actor, addr, 4);
    if (!r.ok()) return r.fault();
    return rd_le32(r.value().data());
  }

  Status write_u32(Actor actor, uint32_t addr, uint32_t value) {
    uint8_t b[4];
    wr_le32(b, value);
    return mem_write(actor, addr, b, 4);
  }

  /// Physical, unpoliced, untraced access. This is the simulator's own
  /// hand: hardware effects and harness judgments, never modeled software.
  Bytes raw_read(uint32_t addr, uint32_t len) const {
    auto loc = resolve(addr, len);
    if (!loc) return {};
    return Bytes(backing(loc->space).begin() + loc->offset,
                 backing(loc->space).begin() + loc->offset + len);
  }

  void raw_write(uint32_t addr, const Bytes& data) {
    auto loc = resolve(addr, static_cast<uint32_t>(data.size()));
    if (!loc) return;
    std::memcpy(backing(loc->space).data() + loc->offset, data.data(),
                data.size());
  }

  uint32_t raw_u32(uint32_t addr) const {
    Bytes b = raw_read(addr, 4);
    return b.size() == 4 ? rd_le32(b.data()) : 0;
  }

  void raw_write_u32(uint32_t addr, uint32_t v) {
    Bytes b(4);
    wr_le32(b.data(), v);
    raw_write(addr, b);
  }

  // -------------------------------------------------------------------------
  // PMC scratch: 32 words that survive deep sleep and are lost on a cold
  // power cycle.

  Status pmc_write(Actor actor, uint32_t index, uint32_t value) {
    if (index >= pmc.size())
      return fail(ErrKind::OutOfRange, actor, std::nullopt,
                  "pmc index " + std::to_string(index));
    bool permitted = actor == Actor::SecureMonitor ||
                     ((actor == Actor::UserlandProcess ||
                       actor == Actor::NormalKernel) &&
                      profile_.pmc_userland_writable);
    if (!permitted)
      return fail(ErrKind::AccessDenied, actor, std::nullopt,
                  "pmc scratch " + std::to_string(index));
    trace.emit(EventKind::PmcWrite, actor, std::nullopt,
               "scratch[" + std::to_string(index) + "]=" + hex32(value));
    pmc[index] = value;
    return ok_status();
  }

  uint32_t pmc_read(uint32_t index) const {
    return index < pmc.size() ? pmc[index] : 0;
  }

  // -------------------------------------------------------------------------
  // Security engine. Slots are use-only: keys go in, only ciphertext and
  // tags come out.

  Status se_set_key(Actor actor, unsigned slot, const Block& key) {
    if (slot >= kSeNumSlots)
      return fail(ErrKind::OutOfRange, actor, std::nullopt,
                  "keyslot " + std::to_string(slot));
    bool permitted = actor == Actor::SecureMonitor ||
                     actor == Actor::BpmpCore || actor == Actor::TsecCore ||
                     (actor == Actor::NormalKernel &&
                      profile_.se_unvalidated_restore);
    if (!permitted)
      return fail(ErrKind::AccessDenied, actor, std::nullopt,
                  "keyslot " + std::to_string(slot) + " load");
    trace.emit(EventKind::SeOp, actor, std::nullopt,
               "set-key slot=" + std::to_string(slot));
    se[slot].key = key;
    se[slot].loaded = true;
    return ok_status();
  }

  Result<Block> se_cmac(unsigned slot, const Bytes& msg,
                        Actor actor = Actor::SecureMonitor) {
    if (slot >= kSeNumSlots || !se[slot].loaded)
      return fail(ErrKind::OutOfRange, actor, std::nullopt,
                  "keyslot " + std::to_string(slot) + " not loaded");
    trace.emit(EventKind::SeOp, actor, std::nullopt,
               "cmac slot=" + std::to_string(slot) +
                   " len=" + std::to_string(msg.size()));
    return aes::cmac(se[slot].key, msg);
  }

  Result<Bytes> se_ctr(unsigned slot, const Block& nonce, const Bytes& data,
                       Actor actor = Actor::SecureMonitor) {
    if (slot >= kSeNumSlots || !se[slot].loaded)
      return fail(ErrKind::OutOfRange, actor, std::nullopt,
                  "keyslot " + std::to_string(slot) + " not loaded");
    trace.emit(EventKind::SeOp, actor, std::nullopt,
               "ctr slot=" + std::to_string(slot) +
                   " len=" + std::to_string(data.size()));
    return aes::ctr(se[slot].key, nonce, data);
  }

  // -------------------------------------------------------------------------
  // Derivation and faults.

  /// CMAC-based expansion from the 32-byte device seed.
  Block derive(std::string_view label) const {
    Bytes msg = bytes_of(label);
    msg.insert(msg.end(), silicon_.seed32.begin() + 16, silicon_.seed32.end());
    Block k{};
    std::memcpy(k.data(), silicon_.seed32.data(), 16);
    return aes::cmac(k, msg);
  }

  Fault fail(ErrKind kind, Actor actor, std::optional<uint32_t> addr,
             std::string detail) {
    Fault f{kind, actor, addr, std::move(detail)};
    trace.emit(EventKind::FaultEvent, actor, addr, f.render());
    return f;
  }

  /// Clears everything that does not survive a cold power cycle and
  /// reloads the hardware-owned keyslots, as the boot ROM would.
  void reset_volatile() {
    dram_.assign(kDramSize, 0);
    tzram_.assign(kTzramSize, 0);
    bpmp_mem_.assign(kBpmpSize, 0);
    imem_.assign(kTsecImemSize, 0);
    dmem_.assign(kTsecDmemSize, 0);
    pmc.fill(0);
    se = {};
    bpmp = CpuCore{};
    bpmp.actor = Actor::BpmpCore;
    tsec = TsecState{};
    tsec.core.actor = Actor::TsecCore;
    tsec.smmu_bypass = profile_.tsec_smmu_bypass;
    svc = ServiceState{};
    secmon = SecmonState{};
    state = DeviceState::Cold;
    stage_trace.clear();
    warm_restore_window = false;

    se[kSlotSbk] = {silicon_.sbk, true, false};
    se[kSlotSeal] = {silicon_.dk_seal, true, false};
    se[kSlotPk11Enc] = {silicon_.k_pk11_enc, true, false};
    se[kSlotPk11Mac] = {silicon_.k_pk11_mac, true, false};
    se[kSlotKSave] = {silicon_.k_save, true, false};
  }

 private:
  void derive_silicon() {
    Block zero{};
    Bytes m0, m1;
    append_le64(m0, seed_);
    append_bytes(m0, bytes_of("SEED0"));
    append_le64(m1, seed_);
    append_bytes(m1, bytes_of("SEED1"));
    Block lo = aes::cmac(zero, m0);
    Block hi = aes::cmac(zero, m1);
    std::memcpy(silicon_.seed32.data(), lo.data(), 16);
    std::memcpy(silicon_.seed32.data() + 16, hi.data(), 16);

    silicon_.sbk = derive_with(silicon_.seed32, "SBK");
    silicon_.csecret_hs = derive_with(silicon_.seed32, "CSEC_HS");
    silicon_.csecret_root = derive_with(silicon_.seed32, "CSEC_ROOT");
    silicon_.dk_seal = derive_with(silicon_.seed32, "SEAL");
    silicon_.dk_master = derive_with(silicon_.seed32, "MASTER");
    silicon_.k_save = derive_with(silicon_.seed32, "K_SAVE");
    silicon_.k_fuse = derive_with(silicon_.seed32, "FUSE");
    silicon_.k_pk11_enc = derive_with(silicon_.seed32, "PK11-ENC");
    silicon_.k_pk11_mac = derive_with(silicon_.seed32, "PK11-MAC");
    silicon_.k_blob = derive_with(silicon_.seed32, "MODULES");
    silicon_.k_audit = derive_with(silicon_.seed32, "AUDIT");
  }

  static Block derive_with(const std::array<uint8_t, 32>& seed32,
                           std::string_view label) {
    Bytes msg = bytes_of(label);
    msg.insert(msg.end(), seed32.begin() + 16, seed32.end());
    Block k{};
    std::memcpy(k.data(), seed32.data(), 16);
    return aes::cmac(k, msg);
  }

  void filter_secret_pages(Actor actor, Location loc, uint32_t len,
                           Bytes& out) const {
    bool privileged =
        actor == Actor::TsecCore && tsec.mode == FalconMode::HS;
    if (privileged) return;
    static constexpr uint8_t kPattern[4] = {0xC1, 0x5E, 0xAD, 0xDE};
    for (uint32_t i = 0; i < len; ++i) {
      uint32_t off = loc.offset + i;
      if (tsec.pages[off / kTsecPageSize].secret) out[i] = kPattern[off % 4];
    }
  }

  uint64_t seed_;
  Profile profile_;
  Silicon silicon_;
  Bytes dram_, tzram_, bpmp_mem_, imem_, dmem_;
};

}  // namespace hsim
