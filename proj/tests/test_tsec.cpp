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

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "hsim/tsec.hpp"
#include "oracle.hpp"

using namespace hsim;

namespace {

Device fresh(const char* profile, uint64_t seed = 7) {
  Device dev = make_device(seed, *find_profile(profile));
  REQUIRE(stage_chain_inputs(dev).ok());
  return dev;
}

// Oversized BOOT payload for the return-slot rewrite: a healthy beacon
// prologue, foreign instructions at +0x20, and the slot value at the copy
// offset that lands on the Falcon return slot.
Bytes oversized_boot_payload() {
  Bytes blob(kStageSlotSpan, 0xAA);
  Bytes prologue = isa::assemble("LDI r5, 0x42\nST [r0+16], r5\nHALT\n").bytes;
  Bytes foreign = isa::assemble("LDI r5, 77\nST [r0+44], r5\nHALT\n").bytes;
  std::copy(prologue.begin(), prologue.end(), blob.begin());
  std::copy(foreign.begin(), foreign.end(), blob.begin() + 0x20);
  wr_le32(blob.data() + (kFalconReturnSlot - kDmemStagingAddr),
          kDmemStagingAddr + 0x20);
  return blob;
}

// Swaps one stage entry for attacker data and plants the result in DRAM.
void upload_tampered(Device& dev, std::string_view stage, const Bytes& blob,
                     const Block& claimed_cmac, uint32_t claimed_size) {
  auto fw = read_firmware(dev);
  REQUIRE(fw.ok());
  FirmwareImage img = fw.value();
  int idx = img.index_of(stage);
  REQUIRE(idx >= 0);
  img.blobs[static_cast<size_t>(idx)] = blob;
  img.entries[static_cast<size_t>(idx)].size = claimed_size;
  img.entries[static_cast<size_t>(idx)].cmac = claimed_cmac;
  auto reparsed = parse_firmware(encode_firmware(img));
  REQUIRE(reparsed.has_value());
  REQUIRE(upload_firmware(dev, *reparsed).ok());
}

uint32_t header_cmac_offset(const FirmwareImage& fw, std::string_view stage) {
  int idx = fw.index_of(stage);
  REQUIRE(idx >= 0);
  return 8 + static_cast<uint32_t>(idx) * kFwEntryLen + kFwNameLen + 4;
}

Block oracle_stage_key(const Device& dev, std::string_view stage) {
  return oracle::aes128_ecb(dev.silicon().csecret_hs,
                            aes::label_block("SIG-" + std::string(stage)));
}

bool memory_contains(const Bytes& haystack, const Block& needle) {
  return std::search(haystack.begin(), haystack.end(), needle.begin(),
                     needle.end()) != haystack.end();
}

}  // namespace

TEST_CASE("firmware container round-trips and rejects structural damage") {
  Device dev = make_device(3, *find_profile("F6_2"));
  FirmwareImage fw = build_firmware(dev);
  REQUIRE(fw.entries.size() == 5);

  Bytes raw = encode_firmware(fw);
  auto back = parse_firmware(raw);
  REQUIRE(back.has_value());
  CHECK(back->total_len == raw.size());
  REQUIRE(back->entries.size() == fw.entries.size());
  for (size_t i = 0; i < fw.entries.size(); ++i) {
    CHECK(back->entries[i].name == fw.entries[i].name);
    CHECK(back->entries[i].size == fw.entries[i].size);
    CHECK(back->entries[i].cmac == fw.entries[i].cmac);
    CHECK(back->blobs[i] == fw.blobs[i]);
    CHECK(back->blob_offsets[i] == fw.blob_offsets[i]);
  }

  Bytes bad_magic = raw;
  bad_magic[0] ^= 1;
  CHECK(!parse_firmware(bad_magic).has_value());

  Bytes zero_stages = raw;
  wr_le32(zero_stages.data() + 4, 0);
  CHECK(!parse_firmware(zero_stages).has_value());

  Bytes too_many = raw;
  wr_le32(too_many.data() + 4, kFwMaxStages + 1);
  CHECK(!parse_firmware(too_many).has_value());

  Bytes truncated(raw.begin(), raw.end() - 1);
  CHECK(!parse_firmware(truncated).has_value());

  Bytes trailing = raw;
  trailing.push_back(0);
  CHECK(!parse_firmware(trailing).has_value());

  // A header that inflates a size field desynchronizes the exact-length
  // framing and the parse refuses it outright.
  Bytes inflated = raw;
  wr_le32(inflated.data() + 8 + kFwNameLen, fw.entries[0].size + 1);
  CHECK(!parse_firmware(inflated).has_value());

  // On the device, a container claiming more than the carve-out is refused
  // before any stage runs.
  Device dev2 = fresh("F6_2");
  Bytes huge = dev2.raw_read(kDramFwAddr, 8 + kFwEntryLen);
  wr_le32(huge.data() + 8 + kFwNameLen, kDramSleepOffset);
  REQUIRE(dev2.mem_write(Actor::BpmpCore, kDramFwAddr, huge).ok());
  ChainOutcome out = run_firmware(dev2);
  CHECK(out.status == ChainOutcome::Status::ChainRejected);
  CHECK(out.stage == "container");
  REQUIRE(out.fault.has_value());
  CHECK(out.fault->kind == ErrKind::BadImage);
}

TEST_CASE("stage keys derive from silicon secrets and match the reference cipher") {
  Device dev = make_device(11, *find_profile("F6_2"));
  const Silicon& si = dev.silicon();

  for (const StageInfo& s : kStageInfos) {
    Block want = oracle_stage_key(dev, s.name);
    CHECK(stage_key(dev, s.name) == want);
  }
  CHECK(tsec_key(dev) ==
        oracle::aes128_ecb(si.csecret_hs, aes::label_block("TSEC-KEY")));
  CHECK(tsec_root_key(dev) ==
        oracle::aes128_ecb(si.csecret_root, aes::label_block("TSEC-ROOT-6.2")));

  Device newer = make_device(11, *find_profile("F7_0"));
  CHECK(tsec_root_key(newer) ==
        oracle::aes128_ecb(newer.silicon().csecret_root,
                           aes::label_block("TSEC-ROOT-7.0")));
  CHECK(tsec_root_key(newer) != tsec_root_key(dev));

  // Distinct silicon seeds must give unrelated key material.
  Device other = make_device(12, *find_profile("F6_2"));
  CHECK(tsec_key(other) != tsec_key(dev));
  CHECK(stage_key(other, "BOOT") != stage_key(dev, "BOOT"));

  // The falcon keyslot only loads from heavy-secure mode and then tracks
  // the reference constructions exactly.
  auto st = derive_stage_key(dev, stage_sig("KGLDR"));
  REQUIRE(!st.ok());
  CHECK(st.fault().kind == ErrKind::WrongMode);
  Bytes msg = {'p', 'a', 'y', 'l', 'o', 'a', 'd'};
  auto no_key = falcon_cmac(dev, msg);
  REQUIRE(!no_key.ok());

  dev.tsec.mode = FalconMode::HS;
  REQUIRE(derive_stage_key(dev, stage_sig("KGLDR")).ok());
  auto mac = falcon_cmac(dev, msg);
  REQUIRE(mac.ok());
  CHECK(mac.value() == oracle::cmac(oracle_stage_key(dev, "KGLDR"), msg));
  Block nonce = aes::label_block("N");
  auto ct = falcon_ctr(dev, nonce, msg);
  REQUIRE(ct.ok());
  CHECK(ct.value() ==
        oracle::aes128_ctr(oracle_stage_key(dev, "KGLDR"), nonce, msg));
}

TEST_CASE("three-stage chain delivers the tsec key to SOR1") {
  Device dev = fresh("F1_0");
  ChainOutcome out = run_firmware(dev);
  REQUIRE(out.ok());
  CHECK(out.stages_run == std::vector<std::string>{"BOOT", "KGLDR", "KEYGEN"});
  CHECK(dev.tsec.mode == FalconMode::NS);

  Block want = oracle::aes128_ecb(dev.silicon().csecret_hs,
                                  aes::label_block("TSEC-KEY"));
  for (unsigned i = 0; i < 4; ++i)
    CHECK(dev.tsec.sor1[i] == rd_le32(want.data() + i * 4));
  CHECK(secmon_accepts_tsec_keys(dev));
  CHECK(!dev.tsec.root_delivered);

  // KeygenLdr and Keygen pages end the run secret; the verified plain
  // stage is only marked validated.
  auto page = [&](uint32_t imem_off) -> const TsecPage& {
    return dev.tsec.pages[imem_off / kTsecPageSize];
  };
  CHECK(page(0x1000).secret);
  CHECK(page(0x1800).secret);
  CHECK(page(0x0000).validated);
  CHECK(!page(0x0000).secret);

  // Keygen ran last: its beacon is the one left in the DMEM mailbox.
  CHECK(dev.raw_u32(kDmemBeaconAddr) == find_stage_info("KEYGEN")->beacon);

  // The chain restarts cleanly on the same inputs.
  CHECK(run_firmware(dev).ok());
}

TEST_CASE("five-stage chain performs the bpmp takeover and delivers the root key") {
  Device dev = fresh("F6_2");
  ChainOutcome out = run_firmware(dev);
  REQUIRE(out.ok());
  CHECK(out.stages_run ==
        std::vector<std::string>{"BOOT", "SBLDR", "KGLDR", "KEYGEN", "SECBOOT"});

  CHECK(dev.bpmp.pc == kPk11StageAddr);
  CHECK(!dev.bpmp.halted);
  for (uint32_t i = 0; i < 9; ++i)
    CHECK(dev.raw_u32(kBpmpVectorsBase + i * 4) == kPk11StageAddr);

  REQUIRE(dev.tsec.root_delivered);
  REQUIRE(dev.se[kSlotTsecRoot].loaded);
  CHECK(dev.se[kSlotTsecRoot].key ==
        oracle::aes128_ecb(dev.silicon().csecret_root,
                           aes::label_block("TSEC-ROOT-6.2")));
  CHECK(dev.tsec.pkg1_session);
  CHECK(secmon_accepts_tsec_keys(dev));

  // The same chain also runs on top of a full cold boot, which stages the
  // PK11 itself.
  Device booted = make_device(9, *find_profile("F6_2"));
  REQUIRE(coldboot(booted).result == BootResult::Booted);
  REQUIRE(upload_firmware(booted, build_firmware(booted)).ok());
  CHECK(run_firmware(booted).ok());
  CHECK(booted.bpmp.pc == kPk11StageAddr);
}

TEST_CASE("secret pages filter every word for every unprivileged reader") {
  Device dev = fresh("F6_2");
  REQUIRE(run_firmware(dev).ok());

  uint32_t secret_pages = 0;
  for (uint32_t p = 0; p < kTsecNumPages; ++p) {
    bool secret = dev.tsec.pages[p].secret;
    secret_pages += secret ? 1 : 0;
    for (uint32_t w = 0; w < kTsecPageSize / 4; ++w) {
      uint32_t addr = kTsecImemBase + p * kTsecPageSize + w * 4;
      auto seen = dev.read_u32(Actor::BpmpCore, addr);
      REQUIRE(seen.ok());
      if (secret) {
        REQUIRE(seen.value() == kSecretReadWord);
      } else {
        REQUIRE(seen.value() == dev.raw_u32(addr));
      }
    }
  }
  REQUIRE(secret_pages > 0);

  // The non-secure falcon core sees the same filter; heavy-secure mode
  // sees the stored words.
  uint32_t keygen_word = kTsecImemBase + 0x1800;
  auto ns_view = read_imem(dev, keygen_word);
  REQUIRE(ns_view.ok());
  CHECK(ns_view.value() == kSecretReadWord);
  dev.tsec.mode = FalconMode::HS;
  auto hs_view = read_imem(dev, keygen_word);
  REQUIRE(hs_view.ok());
  CHECK(hs_view.value() == dev.raw_u32(keygen_word));
  dev.tsec.mode = FalconMode::NS;

  // Nobody writes a secret page, whatever their privilege.
  Bytes word = {0, 0, 0, 0};
  for (Actor a : {Actor::TsecCore, Actor::SecureMonitor, Actor::BpmpCore}) {
    auto st = dev.mem_write(a, keygen_word, word);
    REQUIRE(!st.ok());
    CHECK(st.fault().kind == ErrKind::AccessDenied);
  }

  // Out-of-window falcon reads fault instead of wrapping.
  CHECK(!read_imem(dev, kTsecImemBase - 4).ok());
  CHECK(!read_imem(dev, kTsecImemBase + kTsecImemSize).ok());
  CHECK(!read_imem(dev, kTsecImemBase + kTsecImemSize - 2).ok());
}

TEST_CASE("hardware secrets never reach attacker-visible memory") {
  Device dev = fresh("F6_2");
  REQUIRE(run_firmware(dev).ok());

  const Silicon& si = dev.silicon();
  std::vector<Block> secrets = {si.csecret_hs, si.csecret_root, si.sbk,
                                si.k_save, tsec_key(dev), tsec_root_key(dev)};
  for (const StageInfo& s : kStageInfos)
    secrets.push_back(stage_key(dev, s.name));

  Bytes dram = dev.raw_read(kDramBase, kDramSize);
  Bytes bpmp = dev.raw_read(kBpmpBase, kBpmpSize);
  Bytes dmem = dev.raw_read(kTsecDmemBase, kTsecDmemSize);
  Bytes imem = dev.raw_read(kTsecImemBase, kTsecImemSize);
  for (const Block& k : secrets) {
    CHECK(!memory_contains(dram, k));
    CHECK(!memory_contains(bpmp, k));
    CHECK(!memory_contains(dmem, k));
    CHECK(!memory_contains(imem, k));
  }

  // The keygen plaintext reaches IMEM (that is its job) but never DRAM:
  // decryption happens on the far side of the bus.
  Bytes keygen_plain = stage_plain(*find_stage_info("KEYGEN"));
  CHECK(std::search(imem.begin(), imem.end(), keygen_plain.begin(),
                    keygen_plain.end()) != imem.end());
  CHECK(std::search(dram.begin(), dram.end(), keygen_plain.begin(),
                    keygen_plain.end()) == dram.end());
}

TEST_CASE("each stage's integrity failure rejects the chain at that stage") {
  // A flipped byte in the filler keeps a plain stage executing but breaks
  // its record; encrypted stages break at the silicon check directly.
  for (const char* stage : {"BOOT", "SBLDR", "KGLDR", "KEYGEN", "SECBOOT"}) {
    Device dev = fresh("F6_2");
    auto fw = read_firmware(dev);
    REQUIRE(fw.ok());
    int idx = fw.value().index_of(stage);
    uint32_t addr = kDramFwAddr +
                    fw.value().blob_offsets[static_cast<size_t>(idx)] + 0x100;
    Bytes flip = {static_cast<uint8_t>(dev.raw_read(addr, 1)[0] ^ 1)};
    REQUIRE(dev.mem_write(Actor::BpmpCore, addr, flip).ok());

    ChainOutcome out = run_firmware(dev);
    INFO("stage " << stage);
    REQUIRE(out.status == ChainOutcome::Status::ChainRejected);
    CHECK(out.stage == stage);
    REQUIRE(out.fault.has_value());
    CHECK(out.fault->kind == ErrKind::MacMismatch);
    CHECK(!dev.tsec.root_delivered);
  }

  // With two plain stages tampered, the newest-first back-check order
  // pins the rejection on the later stage.
  Device dev = fresh("F6_2");
  auto fw = read_firmware(dev);
  REQUIRE(fw.ok());
  for (const char* stage : {"BOOT", "SBLDR"}) {
    int idx = fw.value().index_of(stage);
    uint32_t addr = kDramFwAddr +
                    fw.value().blob_offsets[static_cast<size_t>(idx)] + 0x100;
    Bytes flip = {static_cast<uint8_t>(dev.raw_read(addr, 1)[0] ^ 1)};
    REQUIRE(dev.mem_write(Actor::BpmpCore, addr, flip).ok());
  }
  ChainOutcome out = run_firmware(dev);
  REQUIRE(out.status == ChainOutcome::Status::ChainRejected);
  CHECK(out.stage == "SBLDR");

  // A missing stage is refused by name before anything executes.
  Device dev2 = fresh("F6_2");
  auto fw2 = read_firmware(dev2);
  REQUIRE(fw2.ok());
  FirmwareImage img = fw2.value();
  img.entries.pop_back();
  img.blobs.pop_back();
  auto reparsed = parse_firmware(encode_firmware(img));
  REQUIRE(reparsed.has_value());
  REQUIRE(upload_firmware(dev2, *reparsed).ok());
  ChainOutcome out2 = run_firmware(dev2);
  REQUIRE(out2.status == ChainOutcome::Status::ChainRejected);
  CHECK(out2.stage == "SECBOOT");
  CHECK(out2.fault->kind == ErrKind::BadImage);
}

TEST_CASE("oversized copy length rewrites the return slot and captures heavy-secure mode") {
  Bytes payload = oversized_boot_payload();

  for (const char* profile : {"F1_0", "F6_2", "F7_0"}) {
    Device dev = fresh(profile);
    upload_tampered(dev, "BOOT", payload, Block{}, kStageSlotSpan);

    // First pass: the honest verdict. The copy runs, the record mismatch
    // halts the routine in place, and the freshly computed MAC is left
    // behind in DMEM.
    ChainOutcome first = run_firmware(dev);
    INFO("profile " << profile);
    REQUIRE(first.status == ChainOutcome::Status::ChainRejected);
    CHECK(first.stage == "BOOT");
    CHECK(!dev.tsec.hs_control);
    CHECK(dev.tsec.mode == FalconMode::NS);

    auto residue = dev.mem_read(Actor::BpmpCore, kDmemResidueAddr, 16);
    REQUIRE(residue.ok());
    Block want = oracle::cmac(oracle_stage_key(dev, "BOOT"), payload);
    CHECK(residue.value() == Bytes(want.begin(), want.end()));
    // The foreign instructions were copied but never ran.
    CHECK(dev.raw_u32(kDmemStagingAddr + 44) == 0xAAAAAAAA);

    // Second pass: the harvested MAC goes into the header, the check now
    // passes, and the return unwinds through the rewritten slot into the
    // attacker's instructions while the core is still heavy-secure.
    auto fw = read_firmware(dev);
    REQUIRE(fw.ok());
    uint32_t off = header_cmac_offset(fw.value(), "BOOT");
    REQUIRE(dev.mem_write(Actor::BpmpCore, kDramFwAddr + off, residue.value())
                .ok());
    ChainOutcome second = run_firmware(dev);
    REQUIRE(second.status == ChainOutcome::Status::HsCaptured);
    CHECK(second.stage == "BOOT");
    CHECK(dev.tsec.hs_control);
    CHECK(dev.tsec.mode == FalconMode::HS);
    CHECK(dev.raw_u32(kDmemStagingAddr + 44) == 77);

    // Payoff: the capture lands after Keygen was decrypted and marked
    // secret, and heavy-secure mode reads those pages in the clear.
    uint32_t keygen_word = kTsecImemBase + 0x1800;
    REQUIRE(dev.tsec.pages[0x1800 / kTsecPageSize].secret);
    auto clear = read_imem(dev, keygen_word);
    REQUIRE(clear.ok());
    CHECK(clear.value() == dev.raw_u32(keygen_word));
    CHECK(clear.value() != kSecretReadWord);

    // Scrambling from the captured context severs the monitor handshake.
    REQUIRE(scramble_keys(dev).ok());
    Block scram = oracle::cmac(tsec_key(dev), Bytes{'S', 'C', 'R', 'A', 'M',
                                                    'B', 'L', 'E'});
    for (unsigned i = 0; i < 4; ++i)
      CHECK(dev.tsec.sor1[i] == rd_le32(scram.data() + i * 4));
    CHECK(!secmon_accepts_tsec_keys(dev));
  }

  // The bounded generation refuses the length up front, scrubs the
  // residue, and the two-pass replay collapses.
  Device dev = fresh("FIXED");
  upload_tampered(dev, "BOOT", payload, Block{}, kStageSlotSpan);
  ChainOutcome first = run_firmware(dev);
  REQUIRE(first.status == ChainOutcome::Status::ChainRejected);
  CHECK(first.stage == "BOOT");
  auto residue = dev.mem_read(Actor::BpmpCore, kDmemResidueAddr, 16);
  REQUIRE(residue.ok());
  CHECK(residue.value() == Bytes(16, 0));

  auto fw = read_firmware(dev);
  REQUIRE(fw.ok());
  uint32_t off = header_cmac_offset(fw.value(), "BOOT");
  REQUIRE(dev.mem_write(Actor::BpmpCore, kDramFwAddr + off, residue.value())
              .ok());
  ChainOutcome second = run_firmware(dev);
  CHECK(second.status == ChainOutcome::Status::ChainRejected);
  CHECK(!dev.tsec.hs_control);
  CHECK(dev.raw_u32(kDmemStagingAddr + 44) != 77);
}

TEST_CASE("smmu redirection defeats the takeover checks of the pre-bypass era") {
  Device dev = fresh("F6_2");
  uint32_t ctrl_page = kBpmpBase >> kSmmuPageShift;
  uint32_t mirror_base = kDramBase + kDramMitmOffset;

  // Only the boot processor programs the SMMU.
  for (Actor a : {Actor::NormalKernel, Actor::TsecCore, Actor::UserlandProcess}) {
    auto st = smmu_map(dev, a, ctrl_page, mirror_base >> kSmmuPageShift);
    REQUIRE(!st.ok());
    CHECK(st.fault().kind == ErrKind::AccessDenied);
  }
  REQUIRE(smmu_map(dev, Actor::BpmpCore, ctrl_page,
                   mirror_base >> kSmmuPageShift)
              .ok());

  ChainOutcome out = run_firmware(dev);
  REQUIRE(out.ok());

  // The chain believes its own read-back, but every control write landed
  // in the mirror: the real boot processor never halted, its vectors and
  // pc never moved.
  CHECK(!dev.bpmp.halted);
  CHECK(dev.bpmp.pc == 0);
  for (uint32_t i = 0; i < 9; ++i)
    CHECK(dev.raw_u32(kBpmpVectorsBase + i * 4) == 0);
  CHECK(dev.raw_u32(mirror_base) == kPk11StageAddr);
  CHECK(dev.raw_u32(mirror_base + (kBpmpHaltWord - kBpmpBase)) == 1);
  CHECK(dev.raw_u32(mirror_base + (kBpmpDoorbell - kBpmpBase)) ==
        kPk11StageAddr);

  // The real root key was still delivered, usable from the normal world.
  REQUIRE(dev.se[kSlotTsecRoot].loaded);
  CHECK(dev.se[kSlotTsecRoot].key ==
        oracle::aes128_ecb(dev.silicon().csecret_root,
                           aes::label_block("TSEC-ROOT-6.2")));
  CHECK(!dev.tsec.scrambled);
  CHECK(dev.se_cmac(kSlotTsecRoot, Bytes{'W'}, Actor::NormalKernel).ok());
}

TEST_CASE("the bypass era probes the mapped path and scrambles on mismatch") {
  Device dev = fresh("F7_0");
  uint32_t ctrl_page = kBpmpBase >> kSmmuPageShift;
  uint32_t mirror_base = kDramBase + kDramMitmOffset;
  REQUIRE(smmu_map(dev, Actor::BpmpCore, ctrl_page,
                   mirror_base >> kSmmuPageShift)
              .ok());

  ChainOutcome out = run_firmware(dev);
  REQUIRE(out.status == ChainOutcome::Status::BpmpCheckFailed);
  CHECK(out.stage == "SECBOOT");

  // The bypass made the control writes physical, so the takeover itself
  // was real; the probe word is what exposed the stale mapping.
  CHECK(dev.raw_u32(kBpmpVectorsBase) == kPk11StageAddr);
  CHECK(dev.bpmp.pc == kPk11StageAddr);

  // Key derivation was aborted with the material scrambled.
  CHECK(dev.tsec.scrambled);
  CHECK(!dev.tsec.root_delivered);
  CHECK(!dev.se[kSlotTsecRoot].loaded);
  CHECK(!secmon_accepts_tsec_keys(dev));

  // An unredirected bypass-era device sails through the same probe.
  Device honest = fresh("F7_0");
  REQUIRE(run_firmware(honest).ok());
  CHECK(honest.se[kSlotTsecRoot].key ==
        oracle::aes128_ecb(honest.silicon().csecret_root,
                           aes::label_block("TSEC-ROOT-7.0")));
}

TEST_CASE("the storage-anchored tag era accepts a re-tagged foreign payload") {
  auto forge = [](Device& dev) {
    Bytes custom(dev.package1.pk11_plain_len, 0x5E);
    REQUIRE(dev.mem_write(Actor::NormalKernel, kPk11StageAddr, custom).ok());
    auto tag = dev.se_cmac(kSlotPk11Mac, custom, Actor::NormalKernel);
    REQUIRE(tag.ok());
    dev.package1.pk11_auth_tag = tag.value();
  };

  // Fuse-anchored eras refuse the swapped payload outright.
  for (const char* profile : {"F6_2", "FIXED"}) {
    Device dev = fresh(profile);
    forge(dev);
    ChainOutcome out = run_firmware(dev);
    INFO("profile " << profile);
    REQUIRE(out.status == ChainOutcome::Status::ChainRejected);
    CHECK(out.stage == "SECBOOT");
    CHECK(out.fault->kind == ErrKind::TagMismatch);
    CHECK(!dev.tsec.root_delivered);
  }

  // The storage-tag era checks a record the attacker can recompute, so
  // the chain hands its root key to the foreign payload and the granted
  // session is enough to scramble afterwards.
  Device dev = fresh("F7_0");
  forge(dev);
  dev.package1.pk11_fuse_tag[0] ^= 1;  // ignored here: storage tag rules
  ChainOutcome out = run_firmware(dev);
  REQUIRE(out.ok());
  CHECK(dev.tsec.root_delivered);
  CHECK(dev.bpmp.pc == kPk11StageAddr);
  REQUIRE(dev.tsec.pkg1_session);
  REQUIRE(scramble_keys(dev).ok());
  CHECK(dev.tsec.scrambled);
  CHECK(!secmon_accepts_tsec_keys(dev));

  // Conversely the fuse era ignores storage metadata: corrupting the auth
  // tag alone does not wedge an honest 6.2 chain.
  Device sane = fresh("F6_2");
  sane.package1.pk11_auth_tag[0] ^= 1;
  CHECK(run_firmware(sane).ok());
}

TEST_CASE("bypass makes the tsec view total over the physical map") {
  Xorshift64 rng(0xB1A5);
  for (int trial = 0; trial < 32; ++trial) {
    Device dev = make_device(100 + trial, *find_profile("F7_0"));
    // Random redirections, including the BPMP control page.
    for (int i = 0; i < 4; ++i) {
      uint32_t vis = (kBpmpBase >> kSmmuPageShift) + rng.below(4);
      uint32_t back = ((kDramBase + kDramMitmOffset) >> kSmmuPageShift) +
                      rng.below(16);
      REQUIRE(smmu_map(dev, Actor::BpmpCore, vis, back).ok());
    }
    uint32_t addr = kBpmpBase + 4 * rng.below(kBpmpSize / 4);
    uint32_t val = rng.next32();
    REQUIRE(dev.write_u32(Actor::TsecCore, addr, val).ok());
    REQUIRE(dev.raw_u32(addr) == val);
    auto seen = dev.read_u32(Actor::TsecCore, addr);
    REQUIRE(seen.ok());
    REQUIRE(seen.value() == val);
  }

  // Without the bypass the same writes land in the mapped backing.
  Device dev = make_device(77, *find_profile("F6_2"));
  uint32_t mirror = kDramBase + kDramMitmOffset;
  REQUIRE(smmu_map(dev, Actor::BpmpCore, kBpmpBase >> kSmmuPageShift,
                   mirror >> kSmmuPageShift)
              .ok());
  REQUIRE(dev.write_u32(Actor::TsecCore, kBpmpBase + 0x40, 0xABCD).ok());
  CHECK(dev.raw_u32(kBpmpBase + 0x40) == 0);
  CHECK(dev.raw_u32(mirror + 0x40) == 0xABCD);
}

TEST_CASE("scramble requires a heavy-secure context and severs the handshake") {
  Device dev = fresh("F6_2");
  auto st = scramble_keys(dev);
  REQUIRE(!st.ok());
  CHECK(st.fault().kind == ErrKind::WrongMode);

  REQUIRE(run_firmware(dev).ok());
  REQUIRE(secmon_accepts_tsec_keys(dev));
  // The delivered session is an HS context; scrambling from it also
  // rewrites the root keyslot so nothing derived survives.
  Block root_before = dev.se[kSlotTsecRoot].key;
  REQUIRE(scramble_keys(dev).ok());
  CHECK(!secmon_accepts_tsec_keys(dev));
  CHECK(dev.se[kSlotTsecRoot].key != root_before);
  // Scrambling twice is stable: the overwrite is keyed off the original
  // derivation, not the current slot contents.
  Block once = dev.se[kSlotTsecRoot].key;
  REQUIRE(scramble_keys(dev).ok());
  CHECK(dev.se[kSlotTsecRoot].key == once);
}
