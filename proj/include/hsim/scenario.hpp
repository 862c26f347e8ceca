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

// Scripted attack scenarios. Each one is a pure function of (silicon seed,
// mitigation profile): it builds its own device, walks the exploit chain
// step by step, and reports success only when the chain's payoff predicate
// holds, together with the evidence it extracted. A blocked chain carries
// the first fault that stopped it, and no evidence.

#pragma once

#include <thread>

#include "hsim/boot.hpp"
#include "hsim/secmon.hpp"
#include "hsim/services.hpp"
#include "hsim/tsec.hpp"

namespace hsim {

struct SecretRecord {
  std::string name;
  std::string hex_value;
};

struct AttackReport {
  std::string scenario;
  std::string profile;
  uint64_t seed = 0;
  bool success = false;
  bool expected = false;
  std::vector<SecretRecord> secrets;
  std::vector<std::string> trace;
  std::optional<Fault> fault;
};

inline const std::array<std::string_view, 9>& scenario_ids() {
  static const std::array<std::string_view, 9> ids = {
      "sm_h",           "pl_utonium",        "fspldr_takeover",
      "rcm_smash",      "jamais_vu",         "ahbdma_vectors",
      "tsec_smmu_mitm", "keygenldr_hs_rop",  "sept_keyswap",
  };
  return ids;
}

/// The frozen outcome table: which firmware era each chain still works on.
inline bool scenario_expected(std::string_view id, std::string_view profile) {
  auto any_of = [&](std::initializer_list<std::string_view> eras) {
    for (std::string_view e : eras)
      if (e == profile) return true;
    return false;
  };
  if (id == "sm_h") return any_of({"F1_0", "F2_0"});
  if (id == "pl_utonium") return any_of({"F1_0", "F2_0"});
  if (id == "fspldr_takeover") return any_of({"F1_0", "F2_0"});
  if (id == "rcm_smash")
    return any_of({"F1_0", "F2_0", "F6_0", "F6_2", "F7_0"});
  if (id == "jamais_vu") return any_of({"F1_0"});
  if (id == "ahbdma_vectors") return any_of({"F1_0", "F2_0"});
  if (id == "tsec_smmu_mitm") return any_of({"F6_2"});
  if (id == "keygenldr_hs_rop")
    return any_of({"F1_0", "F2_0", "F6_0", "F6_2", "F7_0"});
  if (id == "sept_keyswap") return any_of({"F7_0"});
  return false;
}

namespace detail {

// Scenario plumbing: a tiny script context that stops at the first fault
// and remembers it as the chain's blocker.
struct Script {
  Device& dev;
  AttackReport& rep;
  bool blocked = false;

  bool block(Fault f) {
    if (!blocked) rep.fault = std::move(f);
    blocked = true;
    return false;
  }

  bool step(const Status& st) {
    if (blocked) return false;
    if (!st.ok()) return block(st.fault());
    return true;
  }

  template <typename T>
  std::optional<T> step(Result<T> r) {
    if (blocked) return std::nullopt;
    if (!r.ok()) {
      block(r.fault());
      return std::nullopt;
    }
    return std::move(r.value());
  }

  void secret(std::string name, std::string hex_value) {
    rep.secrets.push_back({std::move(name), std::move(hex_value)});
  }
};

inline std::string hex_of(const Block& b) { return hex(b.data(), b.size()); }

// --- sm_h: talk to the service manager without ever introducing yourself.
// The unset declared pid is below the kernel-server threshold, which the
// manager treats as unrestricted. Crashing ldr first frees the one fsp-ldr
// slot so the grant has room to land.
inline void scn_sm_h(Script& s) {
  Device& dev = s.dev;
  if (coldboot(dev).result != BootResult::Booted) {
    s.block(dev.fail(ErrKind::NotBooted, Actor::NormalKernel, std::nullopt,
                     "cold boot did not reach services"));
    return;
  }
  install_builtin_world(dev);
  Process& evil = register_process(dev, "evil", 100);
  auto sm = s.step(svc_connect_to_named_port(dev, evil, "sm:"));
  if (!sm) return;
  if (!s.step(crash_process(dev, "ldr"))) return;
  auto handle = s.step(sm_get_service(dev, *sm, "fsp-ldr"));
  if (!handle) return;
  s.rep.success = true;
  s.secret("fspldr-session-handle", hex32(*handle));
}

// --- pl_utonium: a legitimate font session, then indices past the table.
// The server reads its own address space with the caller's arithmetic.
inline void scn_pl_utonium(Script& s) {
  Device& dev = s.dev;
  if (coldboot(dev).result != BootResult::Booted) {
    s.block(dev.fail(ErrKind::NotBooted, Actor::NormalKernel, std::nullopt,
                     "cold boot did not reach services"));
    return;
  }
  install_builtin_world(dev);
  Process& app = register_process(dev, "app", 200, {"pl:u"});
  auto sm = s.step(svc_connect_to_named_port(dev, app, "sm:"));
  if (!sm) return;
  if (!s.step(sm_initialize(dev, *sm, app.pid))) return;
  auto pl = s.step(sm_get_service(dev, *sm, "pl:u"));
  if (!pl) return;

  int64_t base = (kPluSecretOffset - kPluFontOffset) / 4;
  Bytes leaked;
  for (int64_t i = 0; i < 4; ++i) {
    auto w = s.step(pl_get_font_data(dev, *pl, base + i));
    if (!w) return;
    append_le32(leaked, *w);
  }
  Block planted = plu_planted_secret(dev);
  if (leaked != Bytes(planted.begin(), planted.end())) return;
  s.rep.success = true;
  s.secret("plu-oob-secret", hex(leaked));
}

// --- fspldr_takeover: the sm_h grant plus a crashed holder turns into the
// whole loader-facing filesystem: open another title's code and read it.
inline void scn_fspldr_takeover(Script& s) {
  Device& dev = s.dev;
  if (coldboot(dev).result != BootResult::Booted) {
    s.block(dev.fail(ErrKind::NotBooted, Actor::NormalKernel, std::nullopt,
                     "cold boot did not reach services"));
    return;
  }
  install_builtin_world(dev);
  Process& evil = register_process(dev, "evil", 100);
  auto sm = s.step(svc_connect_to_named_port(dev, evil, "sm:"));
  if (!sm) return;
  if (!s.step(crash_process(dev, "ldr"))) return;
  auto handle = s.step(sm_get_service(dev, *sm, "fsp-ldr"));
  if (!handle) return;
  auto cfs = s.step(fsp_ldr_open_code_fs(dev, *handle, 0x0100'0000'0000'0001ULL));
  if (!cfs) return;
  auto blob = s.step(code_fs_read(dev, *cfs));
  if (!blob) return;
  if (*blob != synth_module_blob(dev, "fs")) return;
  s.rep.success = true;
  s.secret("fs-module-head", hex(blob->data(), 16));
}

// --- rcm_smash: a recovery-mode frame whose declared length walks the
// ROM's copy over its own return slot.
inline void scn_rcm_smash(Script& s) {
  Device& dev = s.dev;
  rcm_enter(dev);
  isa::Program shellcode = isa::assemble(R"(
      .org 0x40001000
      LDI r5, 90
      ST [r0+64], r5
      HALT
  )");
  Bytes payload(kRcmBufferCap * 2, 0);
  std::copy(shellcode.bytes.begin(), shellcode.bytes.end(), payload.begin());
  wr_le32(payload.data() + (kBpmpReturnSlot - kRcmBufferAddr), kRcmBufferAddr);

  auto out = s.step(rcm_receive(dev, rcm_frame(
                                         static_cast<uint32_t>(payload.size()),
                                         payload)));
  if (!out) return;
  bool hijacked = out->run.escaped && out->run.escape_pc == kRcmBufferAddr &&
                  dev.raw_u32(kRcmBufferAddr + 64) == 90;
  if (!hijacked) return;
  s.rep.success = true;
  // The hijacked ROM context still owns the live SBK slot.
  auto witness = dev.se_cmac(kSlotSbk, bytes_of("RCM-WITNESS"),
                             Actor::BpmpCore);
  s.secret("payload-entry", hex32(out->run.escape_pc));
  if (witness.ok()) s.secret("sbk-cmac-witness", hex_of(witness.value()));
}

// --- jamais_vu: swap the sleeping secure world for your own. Needs the
// kernel-writable save slot and the kernel-writable MAC scratch together.
inline void scn_jamais_vu(Script& s) {
  Device& dev = s.dev;
  if (coldboot(dev).result != BootResult::Booted) {
    s.block(dev.fail(ErrKind::NotBooted, Actor::NormalKernel, std::nullopt,
                     "cold boot did not reach services"));
    return;
  }
  auto sleep = smc_dispatch(dev, Actor::NormalKernel, kSmcEnterDeepSleep, {});
  if (!sleep.ok()) {
    s.block(sleep.fault());
    return;
  }

  isa::Program stub = isa::assemble(R"(
      .org 0x7C010000
      LD r1, [r0+124]
      ST [r0+120], r1
      LDI r2, 99
      ST [r0+116], r2
      HALT
      .org 0x7C01007C
      .word 0x524F4B21
  )");
  Bytes image(kTzramSize, 0);
  std::copy(stub.bytes.begin(), stub.bytes.end(), image.begin());

  Block evil = aes::cmac(Block{}, bytes_of("a key the attacker knows"));
  Bytes ct = aes::ctr(evil, aes::label_block("SLEEP"), image);
  Block mac = aes::cmac(evil, ct);

  uint32_t off = dev.pmc_read(12);
  bool planted =
      s.step(dev.mem_write(Actor::NormalKernel, kDramBase + off, ct)) &&
      s.step(dev.se_set_key(Actor::NormalKernel, kSlotKSave, evil));
  for (unsigned i = 0; planted && i < 4; ++i)
    planted = s.step(dev.pmc_write(Actor::NormalKernel, 8 + i,
                                   rd_le32(mac.data() + i * 4)));

  // Pull the trigger regardless: a blocked plant should die at the warm
  // verify, which is the mitigation doing its job.
  auto out = warmboot(dev);
  if (!out.ok()) {
    s.block(out.fault());
    return;
  }
  bool resumed_foreign =
      out.value().result == BootResult::Compromised &&
      dev.raw_u32(kTzramBase + 0x74) == 99;
  if (!resumed_foreign) {
    if (!s.rep.fault)
      s.rep.fault = Fault{ErrKind::MacMismatch, Actor::BpmpCore, std::nullopt,
                          "warm path refused the swapped image at " +
                              out.value().at};
    return;
  }
  s.rep.success = true;
  auto beacon = dev.mem_read(Actor::SecureMonitor, kTzramBase + 0x74, 4);
  if (beacon.ok()) s.secret("secure-world-beacon", hex(beacon.value()));
  auto witness = dev.se_cmac(kSlotSeal, bytes_of("JV-WITNESS"),
                             Actor::SecureMonitor);
  if (witness.ok()) s.secret("seal-key-witness", hex_of(witness.value()));
}

// --- ahbdma_vectors: the engine nobody gated writes the one word the warm
// path trusts blindly.
inline void scn_ahbdma_vectors(Script& s) {
  Device& dev = s.dev;
  if (coldboot(dev).result != BootResult::Booted) {
    s.block(dev.fail(ErrKind::NotBooted, Actor::NormalKernel, std::nullopt,
                     "cold boot did not reach services"));
    return;
  }
  isa::Program attacker = isa::assemble(R"(
      .org 0x80070000
      LDI r5, 66
      ST [r0+48], r5
      HALT
  )");
  if (!s.step(dev.mem_write(Actor::NormalKernel, attacker.origin,
                            attacker.bytes)))
    return;
  if (!s.step(ahb_dma_write_u32(dev, Actor::NormalKernel, kBpmpVectorsBase,
                                attacker.origin)))
    return;
  auto smc = smc_dispatch(dev, Actor::NormalKernel, kSmcEnterDeepSleep, {});
  if (!smc.ok()) {
    s.block(smc.fault());
    return;
  }
  auto out = warmboot(dev);
  if (!out.ok()) {
    s.block(out.fault());
    return;
  }
  bool diverted = out.value().result == BootResult::Compromised &&
                  dev.raw_u32(kBpmpMailbox) == 66;
  if (!diverted) return;
  s.rep.success = true;
  s.secret("warm-path-beacon", hex32(dev.raw_u32(kBpmpMailbox)));
  auto witness = dev.se_cmac(kSlotSeal, bytes_of("DMA-WITNESS"),
                             Actor::BpmpCore);
  if (witness.ok()) s.secret("bpmp-witness-cmac", hex_of(witness.value()));
}

// --- tsec_smmu_mitm: remap the chain's view of the boot processor, let it
// confirm a takeover that never happened, and collect the key it delivers.
inline void scn_tsec_smmu_mitm(Script& s) {
  Device& dev = s.dev;
  if (!dev.profile().tsec_secureboot_present) {
    s.block(dev.fail(ErrKind::FeatureDisabled, Actor::TsecCore, std::nullopt,
                     "no secure-boot stage to deceive"));
    return;
  }
  if (!s.step(stage_chain_inputs(dev))) return;
  if (!s.step(smmu_map(dev, Actor::BpmpCore, kBpmpBase >> kSmmuPageShift,
                       (kDramBase + kDramMitmOffset) >> kSmmuPageShift)))
    return;
  ChainOutcome out = run_firmware(dev);
  if (!out.ok()) {
    if (out.fault) s.block(*out.fault);
    return;
  }
  bool bpmp_free = !dev.bpmp.halted && dev.bpmp.pc == 0 &&
                   dev.raw_u32(kBpmpVectorsBase) == 0;
  bool keys_live = dev.se[kSlotTsecRoot].loaded && !dev.tsec.scrambled;
  if (!(bpmp_free && keys_live)) return;
  s.rep.success = true;
  auto witness = dev.se_cmac(kSlotTsecRoot, bytes_of("MITM-WITNESS"),
                             Actor::NormalKernel);
  if (witness.ok()) s.secret("tsec-root-witness", hex_of(witness.value()));
}

// --- keygenldr_hs_rop: the oversized back-check copy, run twice. Pass one
// harvests the MAC the routine leaves in DMEM; pass two replays it in the
// header and rides the rewritten return slot into heavy-secure mode.
inline void scn_keygenldr_hs_rop(Script& s) {
  Device& dev = s.dev;
  if (!s.step(stage_chain_inputs(dev))) return;

  Bytes payload(kStageSlotSpan, 0xAA);
  Bytes prologue = isa::assemble("LDI r5, 0x42\nST [r0+16], r5\nHALT\n").bytes;
  Bytes foreign = isa::assemble("LDI r5, 77\nST [r0+44], r5\nHALT\n").bytes;
  std::copy(prologue.begin(), prologue.end(), payload.begin());
  std::copy(foreign.begin(), foreign.end(), payload.begin() + 0x20);
  wr_le32(payload.data() + (kFalconReturnSlot - kDmemStagingAddr),
          kDmemStagingAddr + 0x20);

  auto fw0 = s.step(read_firmware(dev));
  if (!fw0) return;
  FirmwareImage img = *fw0;
  int idx = img.index_of("BOOT");
  img.blobs[static_cast<size_t>(idx)] = payload;
  img.entries[static_cast<size_t>(idx)].size = kStageSlotSpan;
  img.entries[static_cast<size_t>(idx)].cmac = Block{};
  auto reparsed = parse_firmware(encode_firmware(img));
  if (!reparsed) {
    s.block(Fault{ErrKind::BadImage, Actor::BpmpCore, std::nullopt,
                  "tampered container failed to round-trip"});
    return;
  }
  if (!s.step(upload_firmware(dev, *reparsed))) return;

  ChainOutcome first = run_firmware(dev);
  if (first.status != ChainOutcome::Status::ChainRejected) {
    if (first.fault) s.block(*first.fault);
    return;
  }
  auto residue = s.step(dev.mem_read(Actor::BpmpCore, kDmemResidueAddr, 16));
  if (!residue) return;

  uint32_t cmac_off = 8 + static_cast<uint32_t>(idx) * kFwEntryLen +
                      kFwNameLen + 4;
  if (!s.step(dev.mem_write(Actor::BpmpCore, kDramFwAddr + cmac_off,
                            *residue)))
    return;
  ChainOutcome second = run_firmware(dev);
  bool captured = second.status == ChainOutcome::Status::HsCaptured &&
                  dev.tsec.hs_control &&
                  dev.raw_u32(kDmemStagingAddr + 44) == 77;
  if (!captured) {
    if (second.fault)
      s.block(*second.fault);
    else if (first.fault)
      s.block(*first.fault);
    return;
  }

  // Payoff from inside heavy-secure mode: a keyslot-derived witness, the
  // decrypted-but-secret Keygen image, and the scrambled handshake.
  if (!s.step(derive_stage_key(dev, stage_sig("KGLDR")))) return;
  auto witness = s.step(falcon_cmac(dev, bytes_of("HS-WITNESS")));
  if (!witness) return;
  auto keygen_word = s.step(read_imem(dev, kTsecImemBase + 0x1800));
  if (!keygen_word) return;
  if (!s.step(scramble_keys(dev))) return;
  if (secmon_accepts_tsec_keys(dev)) return;

  s.rep.success = true;
  s.secret("hs-exec-witness", hex_of(*witness));
  s.secret("keygen-plaintext-word", hex32(*keygen_word));
  s.secret("harvested-stage-mac", hex(*residue));
}

// --- sept_keyswap: the 7.0 chain checks its payload against a record that
// travels with the payload. Re-tag a foreign PK11 and the chain derives
// the root key right into it.
inline void scn_sept_keyswap(Script& s) {
  Device& dev = s.dev;
  if (!dev.profile().tsec_secureboot_present) {
    s.block(dev.fail(ErrKind::FeatureDisabled, Actor::TsecCore, std::nullopt,
                     "no secure-boot stage to retarget"));
    return;
  }
  if (!s.step(stage_chain_inputs(dev))) return;

  Bytes custom(dev.package1.pk11_plain_len, 0x5E);
  if (!s.step(dev.mem_write(Actor::NormalKernel, kPk11StageAddr, custom)))
    return;
  auto tag = s.step(dev.se_cmac(kSlotPk11Mac, custom, Actor::NormalKernel));
  if (!tag) return;
  dev.package1.pk11_auth_tag = *tag;
  dev.trace.emit(EventKind::Note, Actor::NormalKernel, std::nullopt,
                 "storage metadata re-tagged for the swapped payload");

  ChainOutcome out = run_firmware(dev);
  if (!out.ok()) {
    if (out.fault) s.block(*out.fault);
    return;
  }
  bool swapped_in = dev.tsec.root_delivered && dev.bpmp.pc == kPk11StageAddr &&
                    dev.tsec.pkg1_session;
  if (!swapped_in) return;
  auto witness = dev.se_cmac(kSlotTsecRoot, bytes_of("SEPT-WITNESS"),
                             Actor::NormalKernel);
  if (!s.step(scramble_keys(dev))) return;
  if (!dev.tsec.scrambled) return;
  s.rep.success = true;
  if (witness.ok()) s.secret("tsec-root-witness", hex_of(witness.value()));
}

}  // namespace detail

/// Runs one scenario on a device built from scratch for it. Failures come
/// back as success=false with the first blocking fault; evidence records
/// exist only on success. `final_device`, when given, receives a copy of
/// the device as the scenario left it.
inline AttackReport run_scenario(uint64_t seed, const Profile& profile,
                                 std::string_view id,
                                 Device* final_device = nullptr) {
  AttackReport rep;
  rep.scenario = std::string(id);
  rep.profile = profile.name;
  rep.seed = seed;
  rep.expected = scenario_expected(id, profile.name);

  Device dev = make_device(seed, profile);
  detail::Script s{dev, rep};
  if (id == "sm_h")
    detail::scn_sm_h(s);
  else if (id == "pl_utonium")
    detail::scn_pl_utonium(s);
  else if (id == "fspldr_takeover")
    detail::scn_fspldr_takeover(s);
  else if (id == "rcm_smash")
    detail::scn_rcm_smash(s);
  else if (id == "jamais_vu")
    detail::scn_jamais_vu(s);
  else if (id == "ahbdma_vectors")
    detail::scn_ahbdma_vectors(s);
  else if (id == "tsec_smmu_mitm")
    detail::scn_tsec_smmu_mitm(s);
  else if (id == "keygenldr_hs_rop")
    detail::scn_keygenldr_hs_rop(s);
  else if (id == "sept_keyswap")
    detail::scn_sept_keyswap(s);
  else
    rep.fault = Fault{ErrKind::UnknownProfile, Actor::UserlandProcess,
                      std::nullopt, "unknown scenario " + std::string(id)};

  if (!rep.success) rep.secrets.clear();
  rep.trace.reserve(dev.trace.events().size());
  for (const Event& e : dev.trace.events()) rep.trace.push_back(e.render());
  if (final_device) *final_device = dev;
  return rep;
}

// ---------------------------------------------------------------------------
// The scenario × profile matrix.

struct MatrixCell {
  std::string scenario;
  std::string profile;
  bool success = false;
  bool expected = false;

  bool match() const { return success == expected; }
};

struct MatrixResult {
  std::vector<AttackReport> reports;  // scenario-major, profile-minor order
  std::vector<MatrixCell> cells;
  uint32_t mismatches = 0;
};

/// All scenarios against all profiles. Cells are independent pure
/// functions, so the fan-out across workers cannot change the result; the
/// output order is fixed regardless of scheduling.
inline MatrixResult run_matrix(uint64_t seed, unsigned workers = 1) {
  std::vector<std::pair<std::string_view, const Profile*>> jobs;
  for (std::string_view id : scenario_ids())
    for (const Profile& p : kProfiles) jobs.emplace_back(id, &p);

  MatrixResult out;
  out.reports.resize(jobs.size());
  if (workers <= 1) {
    for (size_t i = 0; i < jobs.size(); ++i)
      out.reports[i] = run_scenario(seed, *jobs[i].second, jobs[i].first);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (size_t i = w; i < jobs.size(); i += workers)
          out.reports[i] = run_scenario(seed, *jobs[i].second, jobs[i].first);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  for (const AttackReport& r : out.reports) {
    MatrixCell cell{r.scenario, r.profile, r.success, r.expected};
    if (!cell.match()) ++out.mismatches;
    out.cells.push_back(std::move(cell));
  }
  return out;
}

}  // namespace hsim
