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

// The Falcon security co-processor: the staged firmware chain with its
// unauthenticated size/CMAC header, stage-key derivation from hardware
// secrets, secret IMEM pages, key delivery to the SOR1 registers, and the
// SecureBoot-era BPMP takeover with SMMU redirection and bypass.
//
// The verification split matters here. Heavy-secure stages are checked by
// silicon before they gain HS (page verification of the uploaded image, no
// software involved). Plain stages run unverified and are re-checked in
// reverse order by KeygenLdr's own copy-and-CMAC routine, whose copy length
// comes straight from the header. That routine is the module's attack
// surface: an oversized length walks the copy over the Falcon return slot,
// and the computed MAC stays behind in DMEM unless the loader generation
// that bounds-checks the copy also scrubs it.

#pragma once

#include <algorithm>
#include <optional>
#include <string_view>
#include <vector>

#include "hsim/aes.hpp"
#include "hsim/boot.hpp"
#include "hsim/cpu.hpp"
#include "hsim/device.hpp"
#include "hsim/isa.hpp"

namespace hsim {

// ---------------------------------------------------------------------------
// Layout and wire constants.

inline constexpr uint32_t kFwMagic = 0x54534543;  // "TSEC" on the wire
inline constexpr uint32_t kDramFwAddr = kDramBase + kDramFwOffset;
inline constexpr uint32_t kPk11StageAddr = kDramBase + kDramPk11Offset;
inline constexpr uint32_t kFwNameLen = 8;
inline constexpr uint32_t kFwEntryLen = kFwNameLen + 4 + 16;
inline constexpr uint32_t kFwMaxStages = 8;

// IMEM slots: one 0x800-byte slot per chain position, verify routine in the
// top pages, clear of every slot.
inline constexpr uint32_t kStageSlotSpan = 0x800;
inline constexpr uint32_t kStageBlobLen = 0x180;
inline constexpr uint32_t kTsecStubBase = kTsecImemBase + 0x3E00;
inline constexpr uint32_t kDmemBeaconAddr = kTsecDmemBase + 0x10;
inline constexpr uint64_t kTsecFuel = 4096;

// BPMP-side control words driven by the TSEC during the takeover. Writes
// land wherever the SMMU view says; the hardware latches fire only when the
// physical word changes.
inline constexpr uint32_t kBpmpHaltWord = kBpmpBase + 0x28;
inline constexpr uint32_t kBpmpDoorbell = kBpmpBase + 0x2C;
inline constexpr uint32_t kBpmpProbeWord = kBpmpBase + 0x34;

// ---------------------------------------------------------------------------
// Stage registry.

struct StageInfo {
  std::string_view name;
  uint32_t imem_base;
  bool hs;         // silicon-verified, runs heavy secure, pages turn secret
  bool encrypted;  // wire blob is CTR ciphertext under the stage key
  uint8_t beacon;
};

inline constexpr std::array<StageInfo, 5> kStageInfos = {{
    {"BOOT", kTsecImemBase + 0x0000, false, false, 0x42},
    {"SBLDR", kTsecImemBase + 0x0800, false, false, 0x53},
    {"KGLDR", kTsecImemBase + 0x1000, true, false, 0x4B},
    {"KEYGEN", kTsecImemBase + 0x1800, true, true, 0x47},
    {"SECBOOT", kTsecImemBase + 0x2000, true, true, 0x45},
}};

inline const StageInfo* find_stage_info(std::string_view name) {
  for (const StageInfo& s : kStageInfos)
    if (s.name == name) return &s;
  return nullptr;
}

/// Chain order for a profile: three stages before SecureBoot existed, five
/// after.
inline std::vector<std::string_view> chain_stages(const Profile& p) {
  if (p.tsec_secureboot_present)
    return {"BOOT", "SBLDR", "KGLDR", "KEYGEN", "SECBOOT"};
  return {"BOOT", "KGLDR", "KEYGEN"};
}

// ---------------------------------------------------------------------------
// Keys. Stage signatures are public constants; everything derived from them
// passes through the hardware secrets and never appears as data.

inline Block stage_sig(std::string_view stage) {
  return aes::label_block(std::string("SIG-") + std::string(stage));
}

inline Block stage_key(const Device& dev, std::string_view stage) {
  return aes::ecb(dev.silicon().csecret_hs, stage_sig(stage));
}

inline Block tsec_key(const Device& dev) {
  return aes::ecb(dev.silicon().csecret_hs, aes::label_block("TSEC-KEY"));
}

/// The root key is per era: the bypass-generation firmware rolled it so
/// older delivered keys stopped working.
inline Block tsec_root_key(const Device& dev) {
  const char* label =
      dev.profile().tsec_smmu_bypass ? "TSEC-ROOT-7.0" : "TSEC-ROOT-6.2";
  return aes::ecb(dev.silicon().csecret_root, aes::label_block(label));
}

/// Where the SecureBoot stage looks for the record its PK11 check is
/// anchored to. The 6.2 generation burned the tag into fuses at the
/// factory; the 7.0 generation shipped a new PK11 whose tag travels in
/// storage metadata beside the image, which is what its key swap abuses.
/// The hardened loader generation anchors the tag in fuses again.
inline bool pk11_tag_in_storage(const Profile& p) {
  return p.tsec_smmu_bypass && !p.keygenldr_size_checked;
}

// ---------------------------------------------------------------------------
// Firmware container. The header (sizes and CMACs) is plain unauthenticated
// data in front of the blobs; nothing signs it.

struct FwEntry {
  std::string name;
  uint32_t size = 0;
  Block cmac{};
};

struct FirmwareImage {
  std::vector<FwEntry> entries;
  std::vector<Bytes> blobs;
  // Byte offset of each blob within the container, and the total container
  // length, so callers can address stage bytes inside the uploaded image.
  std::vector<uint32_t> blob_offsets;
  uint32_t total_len = 0;

  int index_of(std::string_view name) const {
    for (size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return static_cast<int>(i);
    return -1;
  }
};

inline uint32_t fw_header_len(uint32_t n_stages) {
  return 8 + n_stages * kFwEntryLen;
}

inline Bytes encode_firmware(const FirmwareImage& fw) {
  Bytes out;
  append_le32(out, kFwMagic);
  append_le32(out, static_cast<uint32_t>(fw.entries.size()));
  for (size_t i = 0; i < fw.entries.size(); ++i) {
    uint8_t name[kFwNameLen] = {};
    std::memcpy(name, fw.entries[i].name.data(),
                std::min<size_t>(kFwNameLen, fw.entries[i].name.size()));
    append_bytes(out, name, kFwNameLen);
    append_le32(out, fw.entries[i].size);
    append_bytes(out, fw.entries[i].cmac.data(), 16);
  }
  for (const Bytes& blob : fw.blobs) append_bytes(out, blob);
  return out;
}

/// Strict parse: stage count bounded, every blob byte present, no trailing
/// bytes unaccounted for. The header contents are still entirely untrusted;
/// strictness here only pins the framing.
inline std::optional<FirmwareImage> parse_firmware(const Bytes& raw) {
  if (raw.size() < 8 || rd_le32(raw.data()) != kFwMagic) return std::nullopt;
  uint32_t n = rd_le32(raw.data() + 4);
  if (n == 0 || n > kFwMaxStages) return std::nullopt;
  uint64_t need = fw_header_len(n);
  if (raw.size() < need) return std::nullopt;

  FirmwareImage fw;
  const uint8_t* p = raw.data() + 8;
  for (uint32_t i = 0; i < n; ++i) {
    FwEntry e;
    size_t len = 0;
    while (len < kFwNameLen && p[len] != 0) ++len;
    e.name.assign(reinterpret_cast<const char*>(p), len);
    e.size = rd_le32(p + kFwNameLen);
    std::memcpy(e.cmac.data(), p + kFwNameLen + 4, 16);
    fw.entries.push_back(std::move(e));
    p += kFwEntryLen;
    need += fw.entries.back().size;
  }
  if (raw.size() != need) return std::nullopt;

  uint32_t off = fw_header_len(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t sz = fw.entries[i].size;
    fw.blob_offsets.push_back(off);
    fw.blobs.emplace_back(raw.begin() + off, raw.begin() + off + sz);
    off += sz;
  }
  fw.total_len = off;
  return fw;
}

/// Parses the live container at the firmware carve-out. Reads the header
/// first to learn the full length, then re-reads the exact span, so the
/// image the chain sees is whatever DRAM holds right now.
inline Result<FirmwareImage> read_firmware(Device& dev) {
  auto bad = [&](std::string why) {
    return dev.fail(ErrKind::BadImage, Actor::TsecCore, kDramFwAddr,
                    std::move(why));
  };
  Bytes head = dev.raw_read(kDramFwAddr, 8);
  if (head.size() != 8 || rd_le32(head.data()) != kFwMagic)
    return bad("firmware container magic missing");
  uint32_t n = rd_le32(head.data() + 4);
  if (n == 0 || n > kFwMaxStages) return bad("firmware stage count insane");
  Bytes hdr = dev.raw_read(kDramFwAddr, fw_header_len(n));
  if (hdr.size() != fw_header_len(n)) return bad("firmware header truncated");
  uint64_t total = fw_header_len(n);
  for (uint32_t i = 0; i < n; ++i)
    total += rd_le32(hdr.data() + 8 + i * kFwEntryLen + kFwNameLen);
  if (kDramFwOffset + total > kDramSleepOffset)
    return bad("firmware container exceeds its carve-out");
  Bytes raw = dev.raw_read(kDramFwAddr, static_cast<uint32_t>(total));
  auto fw = parse_firmware(raw);
  if (!fw) return bad("firmware container malformed");
  return *fw;
}

// ---------------------------------------------------------------------------
// Factory firmware. Stage payloads are beacon programs: each stores its
// identifying byte to the DMEM mailbox and halts, padded to a fixed length
// with the stage name so decrypted images have recognisable bodies.

inline Bytes stage_plain(const StageInfo& info) {
  std::string src = "LDI r5, " + std::to_string(info.beacon) +
                    "\nST [r0+16], r5\nHALT\n";
  Bytes body = isa::assemble(src).bytes;
  while (body.size() < kStageBlobLen)
    body.push_back(static_cast<uint8_t>(info.name[body.size() % info.name.size()]));
  return body;
}

/// Builds the authentic container for the device's firmware era: honest
/// sizes, CMACs under the per-stage keys, encrypted payloads for the stages
/// that ship encrypted.
inline FirmwareImage build_firmware(const Device& dev) {
  FirmwareImage fw;
  uint32_t n = 0;
  for (std::string_view name : chain_stages(dev.profile())) ++n, (void)name;
  uint32_t off = fw_header_len(n);
  for (std::string_view name : chain_stages(dev.profile())) {
    const StageInfo& info = *find_stage_info(name);
    Block key = stage_key(dev, name);
    Bytes wire = stage_plain(info);
    if (info.encrypted) wire = aes::ctr(key, stage_sig(name), wire);
    FwEntry e;
    e.name = std::string(name);
    e.size = static_cast<uint32_t>(wire.size());
    e.cmac = aes::cmac(key, wire);
    fw.blob_offsets.push_back(off);
    off += e.size;
    fw.entries.push_back(std::move(e));
    fw.blobs.push_back(std::move(wire));
  }
  fw.total_len = off;
  return fw;
}

/// NX-Bootloader's upload: the container lands in the DRAM carve-out the
/// TSEC reads from.
inline Status upload_firmware(Device& dev, const FirmwareImage& fw) {
  Bytes raw = encode_firmware(fw);
  if (kDramFwOffset + raw.size() > kDramSleepOffset)
    return dev.fail(ErrKind::BadImage, Actor::BpmpCore, kDramFwAddr,
                    "firmware container exceeds its carve-out");
  return dev.mem_write(Actor::BpmpCore, kDramFwAddr, raw);
}

/// Reproduces the DRAM state NX-Bootloader leaves for the chain without
/// walking the whole cold boot: PK11 decrypted into its carve-out and the
/// era's firmware container behind it.
inline Status stage_chain_inputs(Device& dev) {
  auto plain = dev.se_ctr(kSlotPk11Enc, pk11_nonce(dev), dev.package1.pk11_ct,
                          Actor::BpmpCore);
  if (!plain.ok()) return plain.fault();
  Status st = dev.mem_write(Actor::BpmpCore, kPk11StageAddr, plain.value());
  if (!st.ok()) return st;
  return upload_firmware(dev, build_firmware(dev));
}

// ---------------------------------------------------------------------------
// Falcon crypto unit and register file.

/// Loads AES(csecret_hs, sig) into the active Falcon keyslot. Only heavy
/// secure code may ask; the derived value itself is never data-readable.
inline Status derive_stage_key(Device& dev, const Block& sig) {
  if (dev.tsec.mode != FalconMode::HS)
    return dev.fail(ErrKind::WrongMode, Actor::TsecCore, std::nullopt,
                    "stage key derivation outside HS");
  dev.tsec.active_key = aes::ecb(dev.silicon().csecret_hs, sig);
  dev.tsec.active_key_loaded = true;
  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "stage key loaded into falcon slot");
  return ok_status();
}

inline Result<Block> falcon_cmac(Device& dev, const Bytes& msg) {
  if (!dev.tsec.active_key_loaded)
    return dev.fail(ErrKind::OutOfRange, Actor::TsecCore, std::nullopt,
                    "falcon keyslot empty");
  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "falcon cmac len=" + std::to_string(msg.size()));
  return aes::cmac(dev.tsec.active_key, msg);
}

inline Result<Bytes> falcon_ctr(Device& dev, const Block& nonce,
                                const Bytes& data) {
  if (!dev.tsec.active_key_loaded)
    return dev.fail(ErrKind::OutOfRange, Actor::TsecCore, std::nullopt,
                    "falcon keyslot empty");
  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "falcon ctr len=" + std::to_string(data.size()));
  return aes::ctr(dev.tsec.active_key, nonce, data);
}

/// One IMEM word through the secret-page filter: non-secret pages read
/// back, secret pages show the constant pattern unless the core is in HS.
inline Result<uint32_t> read_imem(Device& dev, uint32_t addr) {
  if (addr < kTsecImemBase || addr + 4 > kTsecImemBase + kTsecImemSize)
    return dev.fail(ErrKind::UnmappedAccess, Actor::TsecCore, addr,
                    "imem read outside IMEM");
  auto r = dev.mem_read(Actor::TsecCore, addr, 4);
  if (!r.ok()) return r.fault();
  return rd_le32(r.value().data());
}

/// True while SOR1 still carries the genuine delivered key. The monitor's
/// own key check: it knows what the derivation must produce.
inline bool secmon_accepts_tsec_keys(const Device& dev) {
  Block k = tsec_key(dev);
  for (unsigned i = 0; i < 4; ++i)
    if (dev.tsec.sor1[i] != rd_le32(k.data() + i * 4)) return false;
  return !dev.tsec.scrambled;
}

/// Overwrites the delivered keys with CMAC(tsec_key, "SCRAMBLE"): SOR1, the
/// root keyslot, and the active Falcon slot all stop matching anything the
/// original secure monitor expects. Requires a heavy-secure context, which
/// a captured HS core or a takeover-granted PK11 session both are.
inline Status scramble_keys(Device& dev) {
  bool hs_context = dev.tsec.mode == FalconMode::HS || dev.tsec.hs_control ||
                    dev.tsec.pkg1_session;
  if (!hs_context)
    return dev.fail(ErrKind::WrongMode, Actor::TsecCore, std::nullopt,
                    "key scramble outside an HS context");
  Block s = aes::cmac(tsec_key(dev), "SCRAMBLE");
  for (unsigned i = 0; i < 4; ++i) dev.tsec.sor1[i] = rd_le32(s.data() + i * 4);
  if (dev.se[kSlotTsecRoot].loaded) dev.se[kSlotTsecRoot].key = s;
  if (dev.tsec.active_key_loaded) dev.tsec.active_key = s;
  dev.tsec.scrambled = true;
  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "tsec key material scrambled");
  return ok_status();
}

/// Programs one SMMU page mapping. The boot processor owns the SMMU; no
/// other actor reaches it.
inline Status smmu_map(Device& dev, Actor actor, uint32_t visible_page,
                       uint32_t backing_page) {
  if (actor != Actor::BpmpCore)
    return dev.fail(ErrKind::AccessDenied, actor, std::nullopt,
                    "smmu programming is boot-processor only");
  dev.tsec.page_map[visible_page] = backing_page;
  dev.trace.emit(EventKind::TsecOp, actor, std::nullopt,
                 "smmu map " + hex32(visible_page << kSmmuPageShift) + " -> " +
                     hex32(backing_page << kSmmuPageShift));
  return ok_status();
}

// ---------------------------------------------------------------------------
// Software stage verification: KeygenLdr's copy-and-CMAC routine.

/// The verify routine the chain runs on the Falcon. The driver calls
/// verify_fn, so the caller frame's return slot sits at the top of the
/// descending stack; verify_fn copies the stage inline into the staging
/// buffer below that slot, asks the crypto unit for the MAC verdict, halts
/// on mismatch and returns on match. An oversized copy therefore rewrites
/// the slot the match path returns through.
inline const isa::Program& verify_stub_program() {
  static const isa::Program prog = isa::assemble(R"(
    .org 0x103E00
    driver:    CALL r2
               HALT
    verify_fn: COPY r0, r1
               SVC 1
               LDI r4, 1
               CMP r6, r4
               BEQ pass
               HALT
    pass:      RET
  )");
  return prog;
}

enum class Verify : uint8_t { Pass, Fail };

namespace detail {

inline void mark_stage_pages(Device& dev, const StageInfo& info, uint32_t len,
                             bool secret) {
  uint32_t first = (info.imem_base - kTsecImemBase) / kTsecPageSize;
  uint32_t last = (info.imem_base - kTsecImemBase + std::max(len, 1u) - 1) /
                  kTsecPageSize;
  for (uint32_t p = first; p <= last && p < kTsecNumPages; ++p) {
    dev.tsec.pages[p].validated = true;
    if (secret) dev.tsec.pages[p].secret = true;
  }
}

}  // namespace detail

/// Re-checks one stage of the uploaded container against its header entry.
/// Copy length and expected CMAC both come from the header, which nothing
/// authenticates. On a match the routine returns through its frame; on a
/// mismatch it halts in place. The computed MAC stays in DMEM at the
/// residue offset afterwards, pass or fail, unless the loader generation
/// with the bounds check is in effect, which also scrubs it.
inline Result<Verify> verify_stage(Device& dev, const FirmwareImage& fw,
                                   std::string_view stage) {
  const StageInfo* info = find_stage_info(stage);
  int idx = fw.index_of(stage);
  if (info == nullptr || idx < 0)
    return dev.fail(ErrKind::BadImage, Actor::TsecCore, std::nullopt,
                    "no header entry for stage " + std::string(stage));
  const FwEntry& entry = fw.entries[static_cast<size_t>(idx)];
  uint32_t len = entry.size;
  Block key = stage_key(dev, stage);

  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "verify " + std::string(stage) + " len=" + hex32(len) +
                     " mode=" + to_string(dev.tsec.mode));

  if (dev.profile().keygenldr_size_checked) {
    dev.raw_write(kDmemResidueAddr, Bytes(16, 0));
    if (len > kDmemStagingCap) {
      dev.fail(ErrKind::RejectedOversize, Actor::TsecCore, kDmemStagingAddr,
               "stage length " + hex32(len) + " exceeds the staging buffer");
      return Verify::Fail;
    }
  }

  const isa::Program& stub = verify_stub_program();
  Status st = dev.mem_write(Actor::TsecCore, stub.origin, stub.bytes);
  if (!st.ok()) return st.fault();

  CpuCore& core = dev.tsec.core;
  core.reset(stub.origin, kFalconStackTop);
  core.regs[0] = kDmemStagingAddr;
  core.regs[1] = kDramFwAddr + fw.blob_offsets[static_cast<size_t>(idx)];
  core.regs[2] = stub.origin + 8;  // verify_fn
  core.regs[7] = len;

  bool svc_ran = false;
  bool matched = false;
  auto crypto_unit = [&](Device& d, CpuCore& c, bool smc, int imm) {
    if (smc || imm != 1) return;
    svc_ran = true;
    Bytes staged = d.raw_read(kDmemStagingAddr, c.regs[7]);
    Block mac = aes::cmac(key, staged);
    if (d.profile().keygenldr_size_checked) {
      d.raw_write(kDmemResidueAddr, Bytes(16, 0));
    } else {
      d.raw_write(kDmemResidueAddr, Bytes(mac.begin(), mac.end()));
    }
    matched = std::equal(mac.begin(), mac.end(), entry.cmac.begin());
    c.regs[6] = matched ? 1 : 0;
  };

  AddrRange watch[] = {{stub.origin, stub.end()}};
  RunResult r = run(dev, core, kTsecFuel, watch, crypto_unit);

  if (!svc_ran) {
    // The copy itself died on a platform memory fault before the crypto
    // unit ever saw the staged bytes.
    if (r.fault) return *r.fault;
    return dev.fail(ErrKind::CoreHalt, Actor::TsecCore, core.pc,
                    "verify routine never reached the crypto unit");
  }

  if (r.escaped) {
    dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, r.escape_pc,
                   "verify routine returned through a rewritten slot");
    if (dev.tsec.mode == FalconMode::HS) {
      dev.tsec.hs_control = true;
      dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, r.escape_pc,
                     "foreign code holds a heavy-secure context");
    }
  }

  if (matched) {
    detail::mark_stage_pages(dev, *info, std::min(len, kStageSlotSpan),
                             /*secret=*/false);
    return Verify::Pass;
  }
  return Verify::Fail;
}

// ---------------------------------------------------------------------------
// SecureBoot's BPMP takeover.

/// Halts the boot processor, points every exception vector at the staged
/// PK11 and drops its pc there, all through the TSEC's memory view, then
/// reads the writes back through the same view. The hardware latches fire
/// only on the physical words, so a redirected view confirms a takeover
/// that never happened. With the SMMU bypass fused in, the writes go
/// physical and a virtualization probe compares the physical and mapped
/// paths before any key leaves the core. Returns the blocking fault when
/// any check disagrees.
inline Status secureboot_bpmp_takeover(Device& dev) {
  if (!dev.profile().tsec_secureboot_present) {
    return dev.fail(ErrKind::FeatureDisabled, Actor::TsecCore, std::nullopt,
                    "takeover requested without a secure-boot stage");
  }
  uint32_t entry = kPk11StageAddr;

  dev.write_u32(Actor::TsecCore, kBpmpHaltWord, 1);
  if (dev.raw_u32(kBpmpHaltWord) == 1) {
    dev.bpmp.halted = true;
    dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, kBpmpHaltWord,
                   "bpmp halted");
  }
  for (uint32_t i = 0; i < 9; ++i)
    dev.write_u32(Actor::TsecCore, kBpmpVectorsBase + i * 4, entry);
  dev.write_u32(Actor::TsecCore, kBpmpDoorbell, entry);
  if (dev.raw_u32(kBpmpDoorbell) == entry) {
    dev.bpmp.pc = entry;
    dev.bpmp.halted = false;
    dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, kBpmpDoorbell,
                   "bpmp pc dropped into PK11");
  }

  bool view_ok = true;
  for (uint32_t i = 0; i < 9 && view_ok; ++i) {
    auto v = dev.read_u32(Actor::TsecCore, kBpmpVectorsBase + i * 4);
    view_ok = v.ok() && v.value() == entry;
  }
  if (view_ok) {
    auto v = dev.read_u32(Actor::TsecCore, kBpmpDoorbell);
    view_ok = v.ok() && v.value() == entry;
  }
  if (!view_ok) {
    return dev.fail(ErrKind::TagMismatch, Actor::TsecCore, std::nullopt,
                    "takeover read-back mismatch");
  }

  if (dev.profile().tsec_smmu_bypass) {
    // Deterministic probe word: the first value the monitor-style RNG
    // would produce on this device.
    Bytes ctr0;
    append_le64(ctr0, 0);
    uint32_t nonce = rd_le32(aes::cmac(dev.derive("RNG"), ctr0).data());
    dev.write_u32(Actor::TsecCore, kBpmpProbeWord, nonce);
    uint32_t page = kBpmpProbeWord >> kSmmuPageShift;
    uint32_t mapped = kBpmpProbeWord;
    if (auto it = dev.tsec.page_map.find(page); it != dev.tsec.page_map.end())
      mapped = (it->second << kSmmuPageShift) |
               (kBpmpProbeWord & ((1u << kSmmuPageShift) - 1));
    if (dev.raw_u32(mapped) != nonce) {
      return dev.fail(ErrKind::TagMismatch, Actor::TsecCore, kBpmpProbeWord,
                      "virtualization probe mismatch on the mapped path");
    }
  }

  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "takeover confirmed through the tsec view");
  return ok_status();
}

// ---------------------------------------------------------------------------
// The firmware chain.

struct ChainOutcome {
  enum class Status : uint8_t {
    Delivered,
    ChainRejected,
    BpmpCheckFailed,
    HsCaptured,
  };
  Status status = Status::Delivered;
  std::string stage;  // rejecting stage, or where control was captured
  std::vector<std::string> stages_run;
  std::optional<Fault> fault;

  bool ok() const { return status == Status::Delivered; }
};

inline const char* to_string(ChainOutcome::Status s) {
  switch (s) {
    case ChainOutcome::Status::Delivered: return "delivered";
    case ChainOutcome::Status::ChainRejected: return "chain-rejected";
    case ChainOutcome::Status::BpmpCheckFailed: return "bpmp-check-failed";
    case ChainOutcome::Status::HsCaptured: return "hs-captured";
  }
  return "?";
}

namespace detail {

/// A fresh chain entry: core reset, mode back to non-secure, page marks and
/// per-run delivery state cleared. Memory, the SMMU programming and any
/// scramble damage persist; the page marks themselves only live until core
/// reset, which is exactly what lets a rejected chain be restarted.
inline void falcon_chain_reset(Device& dev) {
  dev.tsec.core.reset(0, kFalconStackTop);
  dev.tsec.core.actor = Actor::TsecCore;
  dev.tsec.mode = FalconMode::NS;
  dev.tsec.pages.fill(TsecPage{});
  dev.tsec.active_key = Block{};
  dev.tsec.active_key_loaded = false;
  dev.tsec.sor1 = {};
  dev.tsec.hs_control = false;
  dev.tsec.pkg1_session = false;
  dev.tsec.root_delivered = false;
}

/// Silicon page verification of an uploaded blob: the hardware MACs the
/// image it was handed, page by page, against the header record. No DMEM
/// staging is involved, so there is nothing here to smash.
inline bool hw_verify(Device& dev, const FirmwareImage& fw, int idx,
                      const Block& key) {
  const FwEntry& e = fw.entries[static_cast<size_t>(idx)];
  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "silicon page verification " + e.name);
  Block mac = aes::cmac(key, fw.blobs[static_cast<size_t>(idx)]);
  return std::equal(mac.begin(), mac.end(), e.cmac.begin());
}

inline bool exec_stage(Device& dev, const StageInfo& info, uint32_t len) {
  dev.raw_write_u32(kDmemBeaconAddr, 0);
  CpuCore& core = dev.tsec.core;
  core.reset(info.imem_base, kFalconStackTop);
  core.regs[0] = kTsecDmemBase;
  AddrRange watch[] = {{info.imem_base, info.imem_base + std::max(len, 4u)}};
  RunResult r = run(dev, core, kTsecFuel, watch);
  return r.end == RunResult::End::Halted && !r.escaped &&
         dev.raw_u32(kDmemBeaconAddr) == info.beacon;
}

}  // namespace detail

/// Runs the firmware chain for this device's era against whatever container
/// currently sits in the DRAM carve-out. Keygen leaves the TSEC key in
/// SOR1; the SecureBoot stage additionally gates on the PK11 record,
/// performs the BPMP takeover and delivers the root key. Every verification
/// failure rejects the chain at the offending stage.
inline ChainOutcome run_firmware(Device& dev) {
  ChainOutcome out;
  detail::falcon_chain_reset(dev);
  dev.trace.emit(EventKind::Stage, Actor::TsecCore, std::nullopt, "tsec-chain");

  auto reject = [&](std::string_view stage, Fault f) {
    dev.tsec.mode = FalconMode::NS;
    out.status = ChainOutcome::Status::ChainRejected;
    out.stage = std::string(stage);
    out.fault = std::move(f);
    return out;
  };

  auto fwR = read_firmware(dev);
  if (!fwR.ok()) return reject("container", fwR.fault());
  FirmwareImage fw = fwR.value();

  // KeygenLdr's half of the chain: bring Keygen in (verify the ciphertext
  // record, decrypt, load, mark secret), then re-check every plain stage
  // that ran before it, newest first.
  auto keygenldr_tail = [&]() -> std::optional<ChainOutcome> {
    const StageInfo& kg = *find_stage_info("KEYGEN");
    int idx = fw.index_of("KEYGEN");
    if (idx < 0)
      return reject("KEYGEN", dev.fail(ErrKind::BadImage, Actor::TsecCore,
                                       std::nullopt, "keygen stage absent"));
    Block key = stage_key(dev, "KEYGEN");
    if (!detail::hw_verify(dev, fw, idx, key))
      return reject("KEYGEN",
                    dev.fail(ErrKind::MacMismatch, Actor::TsecCore,
                             std::nullopt, "keygen record mismatch"));
    Bytes plain =
        aes::ctr(key, stage_sig("KEYGEN"), fw.blobs[static_cast<size_t>(idx)]);
    Status st = dev.mem_write(Actor::TsecCore, kg.imem_base, plain);
    if (!st.ok()) return reject("KEYGEN", st.fault());
    detail::mark_stage_pages(dev, kg,
                             static_cast<uint32_t>(plain.size()), true);

    std::vector<std::string_view> order = chain_stages(dev.profile());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const StageInfo& prior = *find_stage_info(*it);
      if (prior.hs) continue;  // silicon already vouched for HS stages
      auto v = verify_stage(dev, fw, *it);
      if (dev.tsec.hs_control) {
        out.status = ChainOutcome::Status::HsCaptured;
        out.stage = std::string(*it);
        return out;
      }
      if (!v.ok()) return reject(*it, v.fault());
      if (v.value() != Verify::Pass)
        return reject(*it, dev.fail(ErrKind::MacMismatch, Actor::TsecCore,
                                    std::nullopt,
                                    "back-check rejected " + std::string(*it)));
    }
    return std::nullopt;
  };

  for (std::string_view name : chain_stages(dev.profile())) {
    const StageInfo& info = *find_stage_info(name);
    int idx = fw.index_of(name);
    if (idx < 0)
      return reject(name, dev.fail(ErrKind::BadImage, Actor::TsecCore,
                                   std::nullopt,
                                   "stage " + std::string(name) + " absent"));
    const Bytes& wire = fw.blobs[static_cast<size_t>(idx)];
    uint32_t len = fw.entries[static_cast<size_t>(idx)].size;
    out.stages_run.push_back(std::string(name));
    dev.trace.emit(EventKind::Stage, Actor::TsecCore, info.imem_base,
                   std::string(name));

    bool preloaded = name == "KEYGEN";  // KeygenLdr already brought it in
    if (!preloaded) {
      Bytes image = wire;
      if (info.hs) {
        Block key = stage_key(dev, name);
        if (!detail::hw_verify(dev, fw, idx, key))
          return reject(name, dev.fail(ErrKind::MacMismatch, Actor::TsecCore,
                                       std::nullopt,
                                       "record mismatch for " +
                                           std::string(name)));
        if (info.encrypted) image = aes::ctr(key, stage_sig(name), image);
      }
      Status st = dev.mem_write(Actor::TsecCore, info.imem_base, image);
      if (!st.ok()) return reject(name, st.fault());
      if (info.hs)
        detail::mark_stage_pages(dev, info,
                                 static_cast<uint32_t>(image.size()), true);
    }

    if (info.hs && dev.tsec.mode != FalconMode::HS) {
      dev.tsec.mode = FalconMode::HS;
      dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                     "falcon mode NS -> HS");
    }

    if (!detail::exec_stage(dev, info, len))
      return reject(name, dev.fail(ErrKind::CoreHalt, Actor::TsecCore,
                                   info.imem_base,
                                   "stage " + std::string(name) +
                                       " execution incoherent"));

    if (name == "KGLDR") {
      if (auto early = keygenldr_tail()) return *early;
    } else if (name == "KEYGEN") {
      Block k = tsec_key(dev);
      for (unsigned i = 0; i < 4; ++i)
        dev.tsec.sor1[i] = rd_le32(k.data() + i * 4);
      dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                     "tsec key delivered to SOR1");
    } else if (name == "SECBOOT") {
      // PK11 gate: the staged plaintext must match the era's anchored tag.
      Bytes staged =
          dev.raw_read(kPk11StageAddr, dev.package1.pk11_plain_len);
      bool storage = pk11_tag_in_storage(dev.profile());
      Block want = storage ? dev.package1.pk11_auth_tag
                           : dev.package1.pk11_fuse_tag;
      Block got = storage ? aes::cmac(dev.silicon().k_pk11_mac, staged)
                          : aes::cmac(dev.silicon().k_fuse, staged);
      dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, kPk11StageAddr,
                     storage ? "pk11 check against storage tag"
                             : "pk11 check against fuse tag");
      if (staged.empty() || got != want) {
        dev.tsec.mode = FalconMode::NS;
        return reject("SECBOOT",
                      dev.fail(ErrKind::TagMismatch, Actor::TsecCore,
                               kPk11StageAddr, "staged PK11 fails its tag"));
      }

      if (auto takeover = secureboot_bpmp_takeover(dev); !takeover.ok()) {
        scramble_keys(dev);
        dev.tsec.mode = FalconMode::NS;
        out.status = ChainOutcome::Status::BpmpCheckFailed;
        out.stage = "SECBOOT";
        out.fault = takeover.fault();
        return out;
      }
      dev.se_set_key(Actor::TsecCore, kSlotTsecRoot, tsec_root_key(dev));
      dev.tsec.root_delivered = true;
      dev.tsec.pkg1_session = true;
      dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                     "tsec root key delivered to its keyslot");
    }
  }

  dev.tsec.mode = FalconMode::NS;
  dev.trace.emit(EventKind::TsecOp, Actor::TsecCore, std::nullopt,
                 "chain complete");
  return out;
}

}  // namespace hsim
