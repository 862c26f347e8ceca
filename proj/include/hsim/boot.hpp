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

// The BPMP boot ROM state machine: RCM reception with its host-controlled
// copy length, coldboot verification of package1 and PK11, and the warmboot
// restore path. Also the factory side: building authentic images and
// provisioning a device with them.

#pragma once

#include "hsim/cpu.hpp"
#include "hsim/secmon.hpp"
#include "hsim/services.hpp"

namespace hsim {

inline constexpr uint32_t kPackage1Magic = 0x504B3131;
inline constexpr uint32_t kPk11ImageMagic = 0x31314B50;  // "PK11" on the wire

// Where the boot stages live inside BPMP memory. All are factory-frozen
// program images; only the RCM receive buffer and the stack are data.
inline constexpr uint32_t kPk1ldrBase = kBpmpBase + 0x2800;
inline constexpr uint32_t kWarmbootBase = kBpmpBase + 0x3000;
inline constexpr uint32_t kNxblBase = kBpmpBase + 0x3400;

// Each boot-stage program announces itself by storing its beacon byte to
// the mailbox word; the ROM checks the beacon before moving on.
inline constexpr uint32_t kPk1ldrBeacon = 0x50;
inline constexpr uint32_t kNxblBeacon = 0x4E;
inline constexpr uint32_t kWarmBeacon = 0x57;

inline constexpr uint32_t kSecmonPrefixLen = 0x200;
inline constexpr uint64_t kBootFuel = 4096;

// ---------------------------------------------------------------------------
// Factory program images.

/// Boot ROM RCM service loop. r0 = receive buffer, r1 = USB staging area,
/// r2 = copy handler, r7 = host-declared length. The handler trusts r7.
inline isa::Program bootrom_rcm_stub() {
  return isa::assemble(R"(
      .org 0x40002000
      entry:
        CALL r2
        HALT
      handler:
        COPY r0, r1
        RET
  )");
}

inline isa::Program pk1ldr_program() {
  return isa::assemble(R"(
      .org 0x40002800
      LDI r5, 80
      ST [r0+48], r5
      HALT
  )");
}

inline isa::Program nx_bootloader_program() {
  return isa::assemble(R"(
      .org 0x40003400
      LDI r5, 78
      ST [r0+48], r5
      HALT
  )");
}

/// The warm-reset firmware the reset vector points at. The heavy lifting
/// of the restore is modeled as hardware below; the program's job is to be
/// the code whose replacement is fatal.
inline isa::Program warmboot_program() {
  return isa::assemble(R"(
      .org 0x40003000
      LDI r5, 87
      ST [r0+48], r5
      HALT
  )");
}

// ---------------------------------------------------------------------------
// Containers.
//
// package1: u32 magic | u32 pk1ldr_len | pk1ldr | u32 ct_len | ct | 16-byte
// MAC. The PK11 plaintext inside the ciphertext: u32 magic, then three
// length-prefixed blobs (warmboot, NX-Bootloader, secure monitor prefix).
// Both parse exactly: every byte of the container must be accounted for.

struct Package1Wire {
  Bytes pk1ldr;
  Bytes pk11_ct;
  Block mac{};
};

struct Pk11Image {
  Bytes warmboot;
  Bytes nx_bootloader;
  Bytes secmon_prefix;
};

inline Bytes encode_package1(const Package1Wire& img) {
  Bytes out;
  append_le32(out, kPackage1Magic);
  append_le32(out, static_cast<uint32_t>(img.pk1ldr.size()));
  append_bytes(out, img.pk1ldr);
  append_le32(out, static_cast<uint32_t>(img.pk11_ct.size()));
  append_bytes(out, img.pk11_ct);
  append_bytes(out, img.mac.data(), img.mac.size());
  return out;
}

inline std::optional<Package1Wire> parse_package1(const Bytes& raw) {
  size_t off = 0;
  auto take_u32 = [&](uint32_t& v) {
    if (raw.size() - off < 4) return false;
    v = rd_le32(raw.data() + off);
    off += 4;
    return true;
  };
  auto take_blob = [&](Bytes& b) {
    uint32_t len = 0;
    if (!take_u32(len) || raw.size() - off < len) return false;
    b.assign(raw.begin() + off, raw.begin() + off + len);
    off += len;
    return true;
  };
  Package1Wire img;
  uint32_t magic = 0;
  if (!take_u32(magic) || magic != kPackage1Magic) return std::nullopt;
  if (!take_blob(img.pk1ldr)) return std::nullopt;
  if (!take_blob(img.pk11_ct)) return std::nullopt;
  if (raw.size() - off != img.mac.size()) return std::nullopt;
  std::memcpy(img.mac.data(), raw.data() + off, img.mac.size());
  return img;
}

inline Bytes encode_pk11(const Pk11Image& img) {
  Bytes out;
  append_le32(out, kPk11ImageMagic);
  for (const Bytes* b : {&img.warmboot, &img.nx_bootloader, &img.secmon_prefix}) {
    append_le32(out, static_cast<uint32_t>(b->size()));
    append_bytes(out, *b);
  }
  return out;
}

inline std::optional<Pk11Image> parse_pk11(const Bytes& raw) {
  size_t off = 0;
  auto take_u32 = [&](uint32_t& v) {
    if (raw.size() - off < 4) return false;
    v = rd_le32(raw.data() + off);
    off += 4;
    return true;
  };
  Pk11Image img;
  uint32_t magic = 0;
  if (!take_u32(magic) || magic != kPk11ImageMagic) return std::nullopt;
  for (Bytes* b : {&img.warmboot, &img.nx_bootloader, &img.secmon_prefix}) {
    uint32_t len = 0;
    if (!take_u32(len) || raw.size() - off < len) return std::nullopt;
    b->assign(raw.begin() + off, raw.begin() + off + len);
    off += len;
  }
  if (off != raw.size()) return std::nullopt;
  return img;
}

// ---------------------------------------------------------------------------
// Factory provisioning.

/// PK11 bulk-cipher nonce. Fixed per image; the pk1ldr fuse MAC is public
/// fuse data, so key holders can reproduce the encryption (and forge).
inline Block pk11_nonce(const Device& dev) {
  return aes::cmac(dev.silicon().k_fuse, dev.package1.pk1ldr);
}

inline Bytes build_pk11_plain(const Device& dev) {
  Pk11Image img;
  img.warmboot = warmboot_program().bytes;
  img.nx_bootloader = nx_bootloader_program().bytes;
  Bytes monitor = build_secmon_image(dev);
  img.secmon_prefix.assign(monitor.begin(), monitor.begin() + kSecmonPrefixLen);
  return encode_pk11(img);
}

inline Bytes build_package1_container(const Device& dev) {
  const Silicon& si = dev.silicon();
  Package1Wire img;
  img.pk1ldr = pk1ldr_program().bytes;
  Block nonce = aes::cmac(si.k_fuse, img.pk1ldr);
  Bytes plain = build_pk11_plain(dev);
  img.pk11_ct = aes::ctr(si.k_pk11_enc, nonce, plain);
  img.mac = aes::cmac(si.k_pk11_mac, img.pk11_ct);
  return encode_package1(img);
}

/// Flashes a container onto the device. Fuse records are untouched: they
/// were burned at the factory and do not follow reflashed storage.
inline Status install_package1(Device& dev, const Bytes& container) {
  auto wire = parse_package1(container);
  if (!wire)
    return dev.fail(ErrKind::BadImage, Actor::NormalKernel, std::nullopt,
                    "package1 container malformed");
  dev.package1.pk1ldr = std::move(wire->pk1ldr);
  dev.package1.pk11_ct = std::move(wire->pk11_ct);
  dev.package1.pk11_mac = wire->mac;
  dev.package1.installed = true;
  return ok_status();
}

/// Burns the factory records and flashes the authentic image: the pk1ldr
/// fuse MAC the boot ROM checks, plus the two PK11 tags the later TSEC
/// SecureBoot eras compare against (immutable fuse tag vs storage-metadata
/// auth tag; the latter moves with reflashes, which is its flaw).
inline void factory_provision(Device& dev) {
  Bytes container = build_package1_container(dev);
  (void)install_package1(dev, container);
  const Silicon& si = dev.silicon();
  Bytes plain = build_pk11_plain(dev);
  auto& p1 = dev.package1;
  p1.fuse_pk1ldr_mac = aes::cmac(si.k_fuse, p1.pk1ldr);
  p1.pk11_fuse_tag = aes::cmac(si.k_fuse, plain);
  p1.pk11_auth_tag = aes::cmac(si.k_pk11_mac, plain);
  p1.pk11_plain_len = static_cast<uint32_t>(plain.size());
  dev.trace.emit(EventKind::Note, Actor::SecureMonitor, std::nullopt,
                 "factory provisioning complete");
}

inline Device make_device(uint64_t seed, const Profile& profile) {
  Device dev(seed, profile);
  factory_provision(dev);
  return dev;
}

// ---------------------------------------------------------------------------
// Boot outcomes.

enum class BootResult : uint8_t { Booted, Rejected, Compromised };

inline const char* to_string(BootResult r) {
  switch (r) {
    case BootResult::Booted: return "booted";
    case BootResult::Rejected: return "rejected";
    case BootResult::Compromised: return "compromised";
  }
  return "?";
}

struct BootOutcome {
  BootResult result = BootResult::Rejected;
  std::string at;  // rejected stage, or what the compromise was
  std::vector<std::string> stages;

  bool ok() const { return result == BootResult::Booted; }
};

inline const std::vector<std::string>& canonical_cold_stages() {
  static const std::vector<std::string> kStages = {
      "bootrom", "pk1-verify", "package1ldr", "pk11-verify", "nx-bootloader",
      "kernel",  "kips",       "boot2",       "services-up"};
  return kStages;
}

namespace detail {

/// Loads a stage program and runs it to completion on the BPMP. A healthy
/// stage halts inside its own image with its beacon in the mailbox.
inline bool run_boot_stage(Device& dev, const Bytes& code, uint32_t base,
                           uint32_t beacon) {
  if (code.empty()) return false;
  if (!dev.mem_write(Actor::BpmpCore, base, code).ok()) return false;
  dev.bpmp = CpuCore{};
  dev.bpmp.actor = Actor::BpmpCore;
  dev.bpmp.pc = base;
  dev.bpmp.sp = kBpmpStackTop;
  dev.bpmp.stack_sentinel = kBpmpStackTop;
  dev.bpmp.regs[0] = kBpmpBase;
  AddrRange watch[] = {{base, base + static_cast<uint32_t>(code.size())}};
  RunResult r = run(dev, dev.bpmp, kBootFuel, watch);
  return r.end == RunResult::End::Halted && !r.escaped &&
         dev.raw_u32(kBpmpMailbox) == beacon;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cold boot.

inline BootOutcome coldboot(Device& dev) {
  dev.reset_volatile();  // power-on reset; package1 models flash and survives
  BootOutcome out;
  auto stage = [&](const char* name) {
    dev.stage_trace.emplace_back(name);
    dev.trace.emit(EventKind::Stage, Actor::BpmpCore, std::nullopt, name);
  };
  auto rejected = [&](ErrKind kind, std::string why) {
    dev.fail(kind, Actor::BpmpCore, std::nullopt, std::move(why));
    dev.state = DeviceState::Halted;
    out.result = BootResult::Rejected;
    out.at = dev.stage_trace.back();
    out.stages = dev.stage_trace;
    return out;
  };

  stage("bootrom");

  stage("pk1-verify");
  if (!dev.package1.installed)
    return rejected(ErrKind::BadImage, "no package1 installed");
  dev.trace.emit(EventKind::SeOp, Actor::BpmpCore, std::nullopt,
                 "fuse-mac check pk1ldr");
  if (aes::cmac(dev.silicon().k_fuse, dev.package1.pk1ldr) !=
      dev.package1.fuse_pk1ldr_mac)
    return rejected(ErrKind::MacMismatch, "pk1ldr does not match fuse record");

  stage("package1ldr");
  if (!detail::run_boot_stage(dev, dev.package1.pk1ldr, kPk1ldrBase,
                              kPk1ldrBeacon))
    return rejected(ErrKind::BadImage, "package1ldr misbehaved");

  stage("pk11-verify");
  auto mac = dev.se_cmac(kSlotPk11Mac, dev.package1.pk11_ct, Actor::BpmpCore);
  if (!mac.ok() || mac.value() != dev.package1.pk11_mac)
    return rejected(ErrKind::MacMismatch, "pk11 ciphertext mac mismatch");
  auto plain = dev.se_ctr(kSlotPk11Enc, pk11_nonce(dev), dev.package1.pk11_ct,
                          Actor::BpmpCore);
  if (!plain.ok())
    return rejected(ErrKind::BadImage, "pk11 decrypt unavailable");
  auto pk11 = parse_pk11(plain.value());
  if (!pk11) return rejected(ErrKind::BadImage, "pk11 image malformed");
  if (plain.value().size() > kDramFwOffset - kDramPk11Offset)
    return rejected(ErrKind::BadImage, "pk11 exceeds its carve-out");
  (void)dev.mem_write(Actor::BpmpCore, kDramBase + kDramPk11Offset,
                      plain.value());

  stage("nx-bootloader");
  if (pk11->warmboot.empty() ||
      !dev.mem_write(Actor::BpmpCore, kWarmbootBase, pk11->warmboot).ok())
    return rejected(ErrKind::BadImage, "warmboot blob unloadable");
  for (uint32_t v = kBpmpVectorsBase; v < kBpmpVectorsEnd; v += 4)
    (void)dev.write_u32(Actor::BpmpCore, v, kWarmbootBase);
  if (!detail::run_boot_stage(dev, pk11->nx_bootloader, kNxblBase,
                              kNxblBeacon))
    return rejected(ErrKind::BadImage, "nx-bootloader misbehaved");
  secmon_install(dev);

  stage("kernel");
  stage("kips");
  install_builtin_world(dev);
  stage("boot2");
  stage("services-up");
  dev.state = DeviceState::Booted;
  out.result = BootResult::Booted;
  out.stages = dev.stage_trace;
  return out;
}

// ---------------------------------------------------------------------------
// RCM.

/// Power-on with the recovery strap held: the boot ROM parks in its USB
/// service loop instead of walking the cold chain.
inline void rcm_enter(Device& dev) {
  dev.reset_volatile();
  dev.state = DeviceState::Rcm;
  dev.stage_trace = {"bootrom", "rcm-wait"};
  dev.trace.emit(EventKind::Stage, Actor::BpmpCore, std::nullopt, "rcm-wait");
}

inline Bytes rcm_frame(uint32_t declared, const Bytes& payload) {
  Bytes wire;
  append_le32(wire, declared);
  append_bytes(wire, payload);
  return wire;
}

struct RcmOutcome {
  uint32_t declared = 0;
  RunResult run;  // the bootrom service loop's execution for this frame
};

inline Result<RcmOutcome> rcm_receive(Device& dev, const Bytes& wire) {
  if (dev.state != DeviceState::Rcm)
    return dev.fail(ErrKind::NotInRcm, Actor::ExternalUsbHost, std::nullopt,
                    std::string("device state ") + to_string(dev.state));
  if (wire.size() < 4)
    return dev.fail(ErrKind::BadMessage, Actor::ExternalUsbHost, std::nullopt,
                    "rcm frame shorter than its length field");
  uint32_t declared = rd_le32(wire.data());
  Bytes payload(wire.begin() + 4, wire.end());
  if (payload.size() > kDramRcmStageCap)
    return dev.fail(ErrKind::BadMessage, Actor::ExternalUsbHost, std::nullopt,
                    "payload exceeds the staging window");
  if (dev.profile().rcm_length_checked && declared > kRcmBufferCap)
    return dev.fail(ErrKind::RejectedOversize, Actor::BpmpCore, std::nullopt,
                    "declared length " + std::to_string(declared));

  // The USB engine lands whatever arrived in the staging window; the ROM
  // then copies `declared` bytes into its receive buffer. The copy length
  // comes from the host header, not from what actually arrived.
  dev.raw_write(kDramBase + kDramRcmStageOffset, payload);
  isa::Program stub = bootrom_rcm_stub();
  dev.raw_write(stub.origin, stub.bytes);
  dev.bpmp = CpuCore{};
  dev.bpmp.actor = Actor::BpmpCore;
  dev.bpmp.pc = stub.origin;
  dev.bpmp.sp = kBpmpStackTop;
  dev.bpmp.stack_sentinel = kBpmpStackTop;
  dev.bpmp.regs[0] = kRcmBufferAddr;
  dev.bpmp.regs[1] = kDramBase + kDramRcmStageOffset;
  dev.bpmp.regs[2] = stub.origin + 8;
  dev.bpmp.regs[7] = declared;
  dev.trace.emit(EventKind::Stage, Actor::BpmpCore, std::nullopt,
                 "rcm-receive len=" + std::to_string(declared));
  AddrRange watch[] = {{stub.origin, stub.end()}};
  RcmOutcome out;
  out.declared = declared;
  out.run = run(dev, dev.bpmp, kBootFuel, watch);
  return out;
}

// ---------------------------------------------------------------------------
// Warm boot.

inline Result<BootOutcome> warmboot(Device& dev) {
  if (dev.state != DeviceState::DeepSleep)
    return dev.fail(ErrKind::NotAsleep, Actor::BpmpCore, std::nullopt,
                    std::string("warmboot from state ") + to_string(dev.state));
  BootOutcome out;
  auto stage = [&](const char* name) {
    dev.stage_trace.emplace_back(name);
    dev.trace.emit(EventKind::Stage, Actor::BpmpCore, std::nullopt, name);
  };
  auto halted = [&](BootResult result, std::string at) {
    dev.state = DeviceState::Halted;
    out.result = result;
    out.at = std::move(at);
    out.stages = dev.stage_trace;
    return out;
  };

  stage("warmboot");

  // Reset dispatches through vector 0. Hardware holds no opinion about
  // what lives there; it just starts fetching.
  uint32_t vec = dev.raw_u32(kBpmpVectorsBase);
  Bytes authentic = warmboot_program().bytes;
  bool vector_ok =
      vec == kWarmbootBase &&
      dev.raw_read(kWarmbootBase, static_cast<uint32_t>(authentic.size())) ==
          authentic;

  dev.bpmp = CpuCore{};
  dev.bpmp.actor = Actor::BpmpCore;
  dev.bpmp.pc = vec;
  dev.bpmp.sp = kBpmpStackTop;
  dev.bpmp.stack_sentinel = kBpmpStackTop;
  dev.bpmp.regs[0] = kBpmpBase;

  if (!vector_ok) {
    // Whoever owns the vector owns the reset path. Run their code, then
    // the restore machinery below never happens.
    run(dev, dev.bpmp, kBootFuel);
    dev.trace.note("bpmp reset dispatched outside warmboot firmware");
    return halted(BootResult::Compromised, "bpmp reset vector hijacked");
  }
  AddrRange watch[] = {{kWarmbootBase,
                        kWarmbootBase + static_cast<uint32_t>(authentic.size())}};
  RunResult rw = run(dev, dev.bpmp, kBootFuel, watch);
  if (rw.end != RunResult::End::Halted || rw.escaped ||
      dev.raw_u32(kBpmpMailbox) != kWarmBeacon)
    return halted(BootResult::Compromised, "warmboot firmware incoherent");

  stage("warmboot-verify");
  uint32_t off = dev.pmc_read(12);
  Bytes ct = dev.raw_read(kDramBase + off, kTzramSize);
  if (ct.size() != kTzramSize) {
    dev.fail(ErrKind::MacMismatch, Actor::BpmpCore, kDramBase + off,
             "sleep image unmapped");
    return halted(BootResult::Rejected, "warmboot-verify");
  }
  Block stored{};
  for (unsigned i = 0; i < 4; ++i)
    wr_le32(stored.data() + i * 4, dev.pmc_read(8 + i));
  auto mac = dev.se_cmac(kSlotKSave, ct, Actor::BpmpCore);
  if (!mac.ok() || mac.value() != stored) {
    dev.fail(ErrKind::MacMismatch, Actor::BpmpCore, std::nullopt,
             "sleep image mac mismatch");
    return halted(BootResult::Rejected, "warmboot-verify");
  }
  auto pt = dev.se_ctr(kSlotKSave, aes::label_block("SLEEP"), ct,
                       Actor::BpmpCore);
  if (!pt.ok()) return halted(BootResult::Rejected, "warmboot-verify");
  dev.warm_restore_window = true;
  (void)dev.mem_write(Actor::BpmpCore, kTzramBase, pt.value());
  dev.warm_restore_window = false;

  // Judge what landed before letting it run. The MAC above authenticated
  // the image against whatever key sat in K_SAVE; this digest pins it to
  // the monitor the device actually installed.
  bool genuine = aes::cmac(dev.silicon().k_audit, pt.value()) ==
                 dev.secmon.authentic_tzram_digest;

  stage("secmon-resume");
  CpuCore mon;
  mon.actor = Actor::SecureMonitor;
  mon.pc = kTzramBase;
  mon.sp = kTzStackTop;
  mon.stack_sentinel = kTzStackTop;
  mon.regs[0] = kTzramBase;
  run(dev, mon, kBootFuel);
  dev.secmon.sleep_image_valid = false;

  if (!genuine) {
    dev.state = DeviceState::Booted;
    dev.trace.note("foreign secure monitor image resumed");
    out.result = BootResult::Compromised;
    out.at = "foreign secure monitor image resumed";
    out.stages = dev.stage_trace;
    return out;
  }
  if (dev.raw_u32(kTzramBase + kTzResumeMarkerOff) != kResumeMagic)
    return halted(BootResult::Rejected, "secmon-resume");
  dev.state = DeviceState::Booted;
  out.result = BootResult::Booted;
  out.stages = dev.stage_trace;
  return out;
}

inline void power_cycle(Device& dev) {
  dev.reset_volatile();
  dev.trace.emit(EventKind::Note, Actor::BpmpCore, std::nullopt, "power-cycle");
}

}  // namespace hsim
