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

// Versioned binary device snapshots. The format is private to the tools:
// a "HSIM1" magic, a version word, then the device's hardware state. Key
// material is never written raw; each key block is sealed with a pad
// derived from the device's audit key, which the restore path re-derives
// from the stored seed. A snapshot therefore contains no greppable secret
// bytes yet restores the device bit-exactly.

#pragma once

#include "hsim/device.hpp"

namespace hsim {

inline constexpr std::string_view kSnapshotMagic = "HSIM1";
inline constexpr uint32_t kSnapshotVersion = 1;

namespace detail {

struct SnapWriter {
  Bytes out;
  uint32_t seal_index = 0;

  void u8(uint8_t v) { out.push_back(v); }
  void u32(uint32_t v) { append_le32(out, v); }
  void u64(uint64_t v) { append_le64(out, v); }
  void raw(const uint8_t* p, size_t n) { out.insert(out.end(), p, p + n); }
  void block(const Block& b) { raw(b.data(), b.size()); }
  void bytes(const Bytes& b) {
    u32(static_cast<uint32_t>(b.size()));
    raw(b.data(), b.size());
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(reinterpret_cast<const uint8_t*>(s.data()), s.size());
  }
};

struct SnapReader {
  const Bytes& in;
  size_t pos = 0;
  bool good = true;
  uint32_t seal_index = 0;

  bool take(void* dst, size_t n) {
    if (!good || in.size() - pos < n) {
      good = false;
      return false;
    }
    std::memcpy(dst, in.data() + pos, n);
    pos += n;
    return true;
  }
  uint8_t u8() {
    uint8_t v = 0;
    take(&v, 1);
    return v;
  }
  uint32_t u32() {
    uint8_t b[4] = {};
    take(b, 4);
    return rd_le32(b);
  }
  uint64_t u64() {
    uint64_t lo = u32(), hi = u32();
    return lo | (hi << 32);
  }
  Block block() {
    Block b{};
    take(b.data(), b.size());
    return b;
  }
  Bytes bytes() {
    uint32_t n = u32();
    if (!good || in.size() - pos < n) {
      good = false;
      return {};
    }
    Bytes b(in.begin() + static_cast<long>(pos),
            in.begin() + static_cast<long>(pos + n));
    pos += n;
    return b;
  }
  std::string str() {
    Bytes b = bytes();
    return std::string(b.begin(), b.end());
  }
};

/// A per-position one-time pad from the device's audit key. XOR is its own
/// inverse, so sealing and unsealing share this.
inline Block seal_block(const Device& dev, uint32_t index, const Block& b) {
  Bytes m = bytes_of("SNAP-SEAL");
  append_le32(m, index);
  Block pad = aes::cmac(dev.silicon().k_audit, m);
  Block out{};
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<uint8_t>(b[i] ^ pad[i]);
  return out;
}

inline void put_core(SnapWriter& w, const CpuCore& c) {
  w.u8(static_cast<uint8_t>(c.actor));
  for (uint32_t r : c.regs) w.u32(r);
  w.u32(c.sp);
  w.u32(c.pc);
  w.u32(c.stack_sentinel);
  w.u8(c.zflag ? 1 : 0);
  w.u8(c.halted ? 1 : 0);
}

inline void get_core(SnapReader& r, CpuCore& c) {
  c.actor = static_cast<Actor>(r.u8());
  for (uint32_t& reg : c.regs) reg = r.u32();
  c.sp = r.u32();
  c.pc = r.u32();
  c.stack_sentinel = r.u32();
  c.zflag = r.u8() != 0;
  c.halted = r.u8() != 0;
}

}  // namespace detail

inline Bytes snapshot_device(const Device& dev) {
  detail::SnapWriter w;
  auto sealed = [&](const Block& b) {
    w.block(detail::seal_block(dev, w.seal_index++, b));
  };

  w.raw(reinterpret_cast<const uint8_t*>(kSnapshotMagic.data()),
        kSnapshotMagic.size());
  w.u32(kSnapshotVersion);
  w.u64(dev.seed());
  w.str(dev.profile().name);

  w.u8(static_cast<uint8_t>(dev.state));
  w.u32(static_cast<uint32_t>(dev.stage_trace.size()));
  for (const std::string& s : dev.stage_trace) w.str(s);
  for (uint32_t v : dev.pmc) w.u32(v);

  detail::put_core(w, dev.bpmp);

  const TsecState& t = dev.tsec;
  detail::put_core(w, t.core);
  w.u8(static_cast<uint8_t>(t.mode));
  for (const TsecPage& p : t.pages)
    w.u8(static_cast<uint8_t>((p.validated ? 1 : 0) | (p.secret ? 2 : 0)));
  for (uint32_t v : t.sor1) w.u32(v);
  w.u8(t.active_key_loaded ? 1 : 0);
  sealed(t.active_key);
  w.u8(t.smmu_bypass ? 1 : 0);
  w.u32(static_cast<uint32_t>(t.page_map.size()));
  for (const auto& [vis, back] : t.page_map) {
    w.u32(vis);
    w.u32(back);
  }
  w.u8(t.scrambled ? 1 : 0);
  w.u8(t.hs_control ? 1 : 0);
  w.u8(t.pkg1_session ? 1 : 0);
  w.u8(t.root_delivered ? 1 : 0);

  const Package1& p1 = dev.package1;
  w.u8(p1.installed ? 1 : 0);
  w.bytes(p1.pk1ldr);
  w.bytes(p1.pk11_ct);
  w.block(p1.pk11_mac);
  w.block(p1.fuse_pk1ldr_mac);
  w.block(p1.pk11_fuse_tag);
  w.block(p1.pk11_auth_tag);
  w.u32(p1.pk11_plain_len);

  const SecmonState& sm = dev.secmon;
  w.u32(static_cast<uint32_t>(sm.device_keys.size()));
  for (const auto& [name, key] : sm.device_keys) {
    w.str(name);
    sealed(key);
  }
  w.block(sm.authentic_tzram_digest);
  w.u64(sm.rng_counter);
  w.u8(sm.sleep_image_valid ? 1 : 0);
  w.u8(dev.warm_restore_window ? 1 : 0);

  for (SpaceId s : {SpaceId::Dram, SpaceId::Tzram, SpaceId::BpmpMem,
                    SpaceId::TsecImem, SpaceId::TsecDmem})
    w.bytes(dev.backing(s));

  for (const SeSlot& slot : dev.se) {
    w.u8(slot.loaded ? 1 : 0);
    w.u8(slot.readable ? 1 : 0);
    sealed(slot.key);
  }
  return std::move(w.out);
}

inline std::optional<Device> restore_device(const Bytes& raw) {
  detail::SnapReader r{raw};
  char magic[5] = {};
  if (!r.take(magic, 5) || std::string_view(magic, 5) != kSnapshotMagic)
    return std::nullopt;
  if (r.u32() != kSnapshotVersion) return std::nullopt;
  uint64_t seed = r.u64();
  std::string profile_name = r.str();
  if (!r.good) return std::nullopt;
  const Profile* prof = find_profile(profile_name);
  if (!prof) return std::nullopt;

  Device dev(seed, *prof);
  auto unsealed = [&]() {
    return detail::seal_block(dev, r.seal_index++, r.block());
  };

  dev.state = static_cast<DeviceState>(r.u8());
  dev.stage_trace.resize(r.u32());
  if (!r.good || dev.stage_trace.size() > raw.size()) return std::nullopt;
  for (std::string& s : dev.stage_trace) s = r.str();
  for (uint32_t& v : dev.pmc) v = r.u32();

  detail::get_core(r, dev.bpmp);

  TsecState& t = dev.tsec;
  detail::get_core(r, t.core);
  t.mode = static_cast<FalconMode>(r.u8());
  for (TsecPage& p : t.pages) {
    uint8_t f = r.u8();
    p.validated = (f & 1) != 0;
    p.secret = (f & 2) != 0;
  }
  for (uint32_t& v : t.sor1) v = r.u32();
  t.active_key_loaded = r.u8() != 0;
  t.active_key = unsealed();
  t.smmu_bypass = r.u8() != 0;
  uint32_t n_map = r.u32();
  if (!r.good || n_map > raw.size()) return std::nullopt;
  t.page_map.clear();
  for (uint32_t i = 0; i < n_map; ++i) {
    uint32_t vis = r.u32(), back = r.u32();
    t.page_map[vis] = back;
  }
  t.scrambled = r.u8() != 0;
  t.hs_control = r.u8() != 0;
  t.pkg1_session = r.u8() != 0;
  t.root_delivered = r.u8() != 0;

  Package1& p1 = dev.package1;
  p1.installed = r.u8() != 0;
  p1.pk1ldr = r.bytes();
  p1.pk11_ct = r.bytes();
  p1.pk11_mac = r.block();
  p1.fuse_pk1ldr_mac = r.block();
  p1.pk11_fuse_tag = r.block();
  p1.pk11_auth_tag = r.block();
  p1.pk11_plain_len = r.u32();

  SecmonState& sm = dev.secmon;
  uint32_t n_keys = r.u32();
  if (!r.good || n_keys > raw.size()) return std::nullopt;
  sm.device_keys.clear();
  for (uint32_t i = 0; i < n_keys; ++i) {
    std::string name = r.str();
    sm.device_keys.emplace_back(std::move(name), unsealed());
  }
  sm.authentic_tzram_digest = r.block();
  sm.rng_counter = r.u64();
  sm.sleep_image_valid = r.u8() != 0;
  dev.warm_restore_window = r.u8() != 0;

  for (SpaceId s : {SpaceId::Dram, SpaceId::Tzram, SpaceId::BpmpMem,
                    SpaceId::TsecImem, SpaceId::TsecDmem}) {
    Bytes mem = r.bytes();
    if (!r.good || mem.size() != dev.backing(s).size()) return std::nullopt;
    dev.backing(s) = std::move(mem);
  }

  for (SeSlot& slot : dev.se) {
    slot.loaded = r.u8() != 0;
    slot.readable = r.u8() != 0;
    slot.key = unsealed();
  }

  if (!r.good || r.pos != raw.size()) return std::nullopt;
  return dev;
}

// ---------------------------------------------------------------------------
// Package1 image files: the boot tool's external input format. A flipped
// bit anywhere in the loader or bundle makes the cold chain reject.

inline Bytes encode_package1(const Package1& p1) {
  detail::SnapWriter w;
  w.raw(reinterpret_cast<const uint8_t*>("HPK1"), 4);
  w.u8(p1.installed ? 1 : 0);
  w.bytes(p1.pk1ldr);
  w.bytes(p1.pk11_ct);
  w.block(p1.pk11_mac);
  w.block(p1.fuse_pk1ldr_mac);
  w.block(p1.pk11_fuse_tag);
  w.block(p1.pk11_auth_tag);
  w.u32(p1.pk11_plain_len);
  return std::move(w.out);
}

inline std::optional<Package1> decode_package1(const Bytes& raw) {
  detail::SnapReader r{raw};
  char magic[4] = {};
  if (!r.take(magic, 4) || std::string_view(magic, 4) != "HPK1")
    return std::nullopt;
  Package1 p1;
  p1.installed = r.u8() != 0;
  p1.pk1ldr = r.bytes();
  p1.pk11_ct = r.bytes();
  p1.pk11_mac = r.block();
  p1.fuse_pk1ldr_mac = r.block();
  p1.pk11_fuse_tag = r.block();
  p1.pk11_auth_tag = r.block();
  p1.pk11_plain_len = r.u32();
  if (!r.good || r.pos != raw.size()) return std::nullopt;
  return p1;
}

}  // namespace hsim
