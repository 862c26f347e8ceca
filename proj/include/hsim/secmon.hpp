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

// The secure-world firmware: SMC dispatch, key sealing, the deep-sleep
// save path, and the AHB-DMA pathway that reaches BPMP memory from the
// normal world on early firmware.

#pragma once

#include "hsim/cpu.hpp"
#include "hsim/device.hpp"

namespace hsim {

inline constexpr uint32_t kSmcSealKey = 1;
inline constexpr uint32_t kSmcUnsealKey = 2;
inline constexpr uint32_t kSmcGetRandom = 3;
inline constexpr uint32_t kSmcEnterDeepSleep = 4;

// Secure-monitor TZRAM image layout. The entry stub is real micro-ISA code
// so that a resumed (or forged) image literally executes.
inline constexpr uint32_t kTzResumeMarkerOff = 0x78;
inline constexpr uint32_t kTzResumeMagicOff = 0x7C;
inline constexpr uint32_t kTzTokenOff = 0x100;
inline constexpr uint32_t kTzStackTop = kTzramBase + 0xFF00;
inline constexpr uint32_t kResumeMagic = 0x524F4B21;  // "!KOR"

/// Secret the secure monitor keeps in TZRAM. Proving you can read or plant
/// data at this address is the harness's evidence of secure-world access.
inline Block tzram_token(const Device& dev) { return dev.derive("TZRAM-TOKEN"); }

/// The monitor's warm-resume entry stub: copies its embedded magic word
/// into the resume-marker slot and parks. Runs with r0 = TZRAM base.
inline isa::Program secmon_entry_stub() {
  return isa::assemble(R"(
      .org 0x7C010000
      LD r1, [r0+124]
      ST [r0+120], r1
      HALT
      .org 0x7C01007C
      .word 0x524F4B21
  )");
}

inline Bytes build_secmon_image(const Device& dev) {
  Bytes image(kTzramSize, 0);
  isa::Program stub = secmon_entry_stub();
  std::memcpy(image.data(), stub.bytes.data(), stub.bytes.size());
  Block token = tzram_token(dev);
  std::memcpy(image.data() + kTzTokenOff, token.data(), token.size());
  return image;
}

/// Installs the secure world: TZRAM contents, the protected key list, and
/// the reference digest the simulator uses to judge resumed images.
inline void secmon_install(Device& dev) {
  Bytes image = build_secmon_image(dev);
  dev.raw_write(kTzramBase, image);
  dev.secmon.device_keys = {{"master", dev.silicon().dk_master}};
  dev.secmon.authentic_tzram_digest = aes::cmac(dev.silicon().k_audit, image);
  dev.trace.emit(EventKind::Smc, Actor::SecureMonitor, std::nullopt,
                 "secure monitor installed");
}

// ---------------------------------------------------------------------------
// Key sealing. Blob: 16-byte CTR ciphertext followed by a 16-byte CMAC,
// both under the device-unique sealing slot.

inline Bytes seal_key(Device& dev, const Block& key) {
  Bytes pt(key.begin(), key.end());
  Bytes ct = dev.se_ctr(kSlotSeal, aes::label_block("SEAL-CTR"), pt).value();
  Block tag = dev.se_cmac(kSlotSeal, ct).value();
  Bytes blob = ct;
  append_bytes(blob, tag.data(), tag.size());
  return blob;
}

inline Result<Block> unseal_key(Device& dev, const Bytes& blob) {
  if (blob.size() != 32)
    return dev.fail(ErrKind::BadMessage, Actor::SecureMonitor, std::nullopt,
                    "sealed blob must be 32 bytes");
  Bytes ct(blob.begin(), blob.begin() + 16);
  Block tag = dev.se_cmac(kSlotSeal, ct).value();
  if (!std::equal(tag.begin(), tag.end(), blob.begin() + 16))
    return dev.fail(ErrKind::TagMismatch, Actor::SecureMonitor, std::nullopt,
                    "sealed blob tag mismatch");
  Bytes pt = dev.se_ctr(kSlotSeal, aes::label_block("SEAL-CTR"), ct).value();
  return aes::block_from(pt);
}

// ---------------------------------------------------------------------------
// Deep sleep: encrypt TZRAM under the K_SAVE slot into DRAM, stash the MAC
// and image location in PMC scratch, clear TZRAM.

inline Status enter_deep_sleep(Device& dev) {
  if (dev.state != DeviceState::Booted)
    return dev.fail(ErrKind::NotBooted, Actor::SecureMonitor, std::nullopt,
                    "deep sleep from state " + std::string(to_string(dev.state)));
  Bytes tz = dev.raw_read(kTzramBase, kTzramSize);
  dev.secmon.authentic_tzram_digest = aes::cmac(dev.silicon().k_audit, tz);

  Bytes ct = dev.se_ctr(kSlotKSave, aes::label_block("SLEEP"), tz).value();
  Block mac = dev.se_cmac(kSlotKSave, ct).value();
  if (auto st = dev.mem_write(Actor::SecureMonitor,
                              kDramBase + kDramSleepOffset, ct);
      !st.ok())
    return st;
  for (unsigned i = 0; i < 4; ++i)
    (void)dev.pmc_write(Actor::SecureMonitor, 8 + i,
                        rd_le32(mac.data() + i * 4));
  (void)dev.pmc_write(Actor::SecureMonitor, 12, kDramSleepOffset);

  (void)dev.mem_write(Actor::SecureMonitor, kTzramBase, Bytes(kTzramSize, 0));
  dev.secmon.sleep_image_valid = true;
  dev.state = DeviceState::DeepSleep;
  dev.trace.emit(EventKind::Stage, Actor::SecureMonitor, std::nullopt,
                 "enter-deep-sleep");
  return ok_status();
}

// ---------------------------------------------------------------------------
// AHB-DMA: a normal-world-programmable engine whose writes skip the CPU
// access policy. It reaches DRAM and BPMP memory; the secure island
// (TZRAM, falcon memories) is not on its bus.

inline Status ahb_dma_write(Device& dev, Actor caller, uint32_t addr,
                            const Bytes& data) {
  if (caller != Actor::NormalKernel)
    return dev.fail(ErrKind::AccessDenied, caller, addr, "ahb-dma caller");
  if (!dev.profile().ahb_dma_enabled)
    return dev.fail(ErrKind::FeatureDisabled, caller, addr,
                    "ahb-dma engine not present");
  auto loc = dev.resolve(addr, static_cast<uint32_t>(data.size()));
  if (!loc)
    return dev.fail(ErrKind::UnmappedAccess, caller, addr, "ahb-dma target");
  if (loc->space != SpaceId::Dram && loc->space != SpaceId::BpmpMem)
    return dev.fail(ErrKind::AccessDenied, caller, addr,
                    std::string("ahb-dma cannot reach ") +
                        to_string(loc->space));
  dev.trace.emit(EventKind::MemWrite, caller, addr,
                 std::string("ahb-dma ") + to_string(loc->space) +
                     " len=" + std::to_string(data.size()));
  dev.raw_write(addr, data);
  return ok_status();
}

inline Status ahb_dma_write_u32(Device& dev, Actor caller, uint32_t addr,
                                uint32_t value) {
  Bytes b(4);
  wr_le32(b.data(), value);
  return ahb_dma_write(dev, caller, addr, b);
}

// ---------------------------------------------------------------------------
// SMC dispatch.

inline Result<std::vector<uint32_t>> smc_dispatch(
    Device& dev, Actor caller, uint32_t id,
    const std::vector<uint32_t>& args) {
  if (caller != Actor::NormalKernel)
    return dev.fail(ErrKind::AccessDenied, caller, std::nullopt,
                    "smc " + std::to_string(id) + " from non-kernel caller");
  dev.trace.emit(EventKind::Smc, Actor::SecureMonitor, std::nullopt,
                 "secure-world smc id=" + std::to_string(id));

  switch (id) {
    case kSmcSealKey: {
      if (args.size() < 4)
        return dev.fail(ErrKind::BadMessage, caller, std::nullopt,
                        "seal-key needs 4 key words");
      Block key{};
      for (unsigned i = 0; i < 4; ++i) wr_le32(key.data() + i * 4, args[i]);
      Bytes blob = seal_key(dev, key);
      std::vector<uint32_t> out(8);
      for (unsigned i = 0; i < 8; ++i) out[i] = rd_le32(blob.data() + i * 4);
      return out;
    }
    case kSmcUnsealKey: {
      if (args.size() < 8)
        return dev.fail(ErrKind::BadMessage, caller, std::nullopt,
                        "unseal-key needs 8 blob words");
      Bytes blob(32);
      for (unsigned i = 0; i < 8; ++i) wr_le32(blob.data() + i * 4, args[i]);
      auto key = unseal_key(dev, blob);
      if (!key.ok()) return key.fault();
      std::vector<uint32_t> out(4);
      for (unsigned i = 0; i < 4; ++i)
        out[i] = rd_le32(key.value().data() + i * 4);
      return out;
    }
    case kSmcGetRandom: {
      Bytes msg;
      append_le64(msg, dev.secmon.rng_counter++);
      Block r = aes::cmac(dev.derive("RNG"), msg);
      std::vector<uint32_t> out(4);
      for (unsigned i = 0; i < 4; ++i) out[i] = rd_le32(r.data() + i * 4);
      return out;
    }
    case kSmcEnterDeepSleep: {
      auto st = enter_deep_sleep(dev);
      if (!st.ok()) return st.fault();
      return std::vector<uint32_t>{};
    }
    default:
      return dev.fail(ErrKind::UnknownSmc, caller, std::nullopt,
                      "smc id " + std::to_string(id));
  }
}

}  // namespace hsim
