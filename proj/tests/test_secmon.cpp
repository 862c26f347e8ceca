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

#include <catch2/catch_amalgamated.hpp>

#include "hsim/secmon.hpp"
#include "oracle.hpp"

using namespace hsim;

namespace {

Device booted_device(std::string_view prof, uint64_t seed = 1) {
  Device dev(seed, *find_profile(prof));
  secmon_install(dev);
  dev.state = DeviceState::Booted;
  return dev;
}

Block random_key(Xorshift64& rng) {
  Block k;
  for (auto& b : k) b = static_cast<uint8_t>(rng.next());
  return k;
}

}  // namespace

TEST_CASE("smc calls are kernel-only and unknown ids bounce") {
  Device dev = booted_device("F1_0");
  auto denied = smc_dispatch(dev, Actor::UserlandProcess, kSmcGetRandom, {});
  REQUIRE(!denied.ok());
  CHECK(denied.fault().kind == ErrKind::AccessDenied);

  auto unknown = smc_dispatch(dev, Actor::NormalKernel, 0x99, {});
  REQUIRE(!unknown.ok());
  CHECK(unknown.fault().kind == ErrKind::UnknownSmc);

  auto ok = smc_dispatch(dev, Actor::NormalKernel, kSmcGetRandom, {});
  REQUIRE(ok.ok());
  CHECK(ok.value().size() == 4);
}

TEST_CASE("random words are seed-deterministic and counter-driven") {
  Device a = booted_device("F1_0", 7);
  Device b = booted_device("F1_0", 7);
  Device c = booted_device("F1_0", 8);

  auto r_a1 = smc_dispatch(a, Actor::NormalKernel, kSmcGetRandom, {});
  auto r_a2 = smc_dispatch(a, Actor::NormalKernel, kSmcGetRandom, {});
  auto r_b1 = smc_dispatch(b, Actor::NormalKernel, kSmcGetRandom, {});
  auto r_c1 = smc_dispatch(c, Actor::NormalKernel, kSmcGetRandom, {});
  REQUIRE(r_a1.ok());
  CHECK(r_a1.value() == r_b1.value());
  CHECK(r_a1.value() != r_a2.value());
  CHECK(r_a1.value() != r_c1.value());
}

TEST_CASE("seal and unseal round-trip through the smc interface") {
  Device dev = booted_device("F1_0");
  std::vector<uint32_t> key_words = {0x00112233, 0x44556677, 0x8899AABB,
                                     0xCCDDEEFF};
  auto sealed = smc_dispatch(dev, Actor::NormalKernel, kSmcSealKey, key_words);
  REQUIRE(sealed.ok());
  REQUIRE(sealed.value().size() == 8);

  auto opened =
      smc_dispatch(dev, Actor::NormalKernel, kSmcUnsealKey, sealed.value());
  REQUIRE(opened.ok());
  CHECK(opened.value() == key_words);
}

TEST_CASE("sealing is sound and tamper-evident") {
  Device dev = booted_device("F1_0", 3);
  Xorshift64 rng(99);
  for (int i = 0; i < 1000; ++i) {
    Block k = random_key(rng);
    Bytes blob = seal_key(dev, k);
    auto back = unseal_key(dev, blob);
    REQUIRE(back.ok());
    REQUIRE(hex(back.value()) == hex(k));
  }

  // Same key, different device seeds: different blobs.
  Device other = booted_device("F1_0", 4);
  Block k{};
  k[0] = 0x42;
  CHECK(hex(seal_key(dev, k)) != hex(seal_key(other, k)));

  // Every single-bit corruption of a blob is rejected.
  Bytes blob = seal_key(dev, k);
  for (size_t bit = 0; bit < blob.size() * 8; ++bit) {
    Bytes bad = blob;
    bad[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
    auto r = unseal_key(dev, bad);
    REQUIRE(!r.ok());
    REQUIRE(r.fault().kind == ErrKind::TagMismatch);
  }
}

TEST_CASE("deep sleep encrypts TZRAM into DRAM and clears the original") {
  Device cold(1, *find_profile("F1_0"));
  auto early = enter_deep_sleep(cold);
  REQUIRE(!early.ok());
  CHECK(early.fault().kind == ErrKind::NotBooted);

  Device dev = booted_device("F1_0");
  Bytes tz_before = dev.raw_read(kTzramBase, kTzramSize);
  REQUIRE(enter_deep_sleep(dev).ok());
  CHECK(dev.state == DeviceState::DeepSleep);

  // TZRAM is gone.
  Bytes tz_after = dev.raw_read(kTzramBase, kTzramSize);
  CHECK(tz_after == Bytes(kTzramSize, 0));

  // The DRAM image decrypts back to the original under K_SAVE.
  Bytes ct = dev.raw_read(kDramBase + kDramSleepOffset, kTzramSize);
  Bytes pt = oracle::aes128_ctr(dev.silicon().k_save,
                                aes::label_block("SLEEP"), ct);
  CHECK(pt == tz_before);

  // Scratch holds the MAC over the ciphertext and the image offset.
  Block mac = oracle::cmac(dev.silicon().k_save, ct);
  for (unsigned i = 0; i < 4; ++i)
    CHECK(dev.pmc_read(8 + i) == rd_le32(mac.data() + i * 4));
  CHECK(dev.pmc_read(12) == kDramSleepOffset);
}

TEST_CASE("the dma engine writes vectors on early firmware only") {
  Device vuln = booted_device("F2_0");
  uint32_t before = vuln.raw_u32(kBpmpVectorsBase);
  REQUIRE(ahb_dma_write_u32(vuln, Actor::NormalKernel, kBpmpVectorsBase,
                            0x40001234).ok());
  CHECK(vuln.raw_u32(kBpmpVectorsBase) == 0x40001234);
  CHECK(before != 0x40001234);

  // DRAM is reachable too.
  REQUIRE(ahb_dma_write_u32(vuln, Actor::NormalKernel, kDramBase + 0x100,
                            0xAABBCCDD).ok());
  CHECK(vuln.raw_u32(kDramBase + 0x100) == 0xAABBCCDD);

  // The secure island is not on the bus.
  auto tz = ahb_dma_write_u32(vuln, Actor::NormalKernel, kTzramBase, 1);
  REQUIRE(!tz.ok());
  CHECK(tz.fault().kind == ErrKind::AccessDenied);
  auto imem = ahb_dma_write_u32(vuln, Actor::NormalKernel, kTsecImemBase, 1);
  REQUIRE(!imem.ok());
  CHECK(imem.fault().kind == ErrKind::AccessDenied);
  auto hole = ahb_dma_write_u32(vuln, Actor::NormalKernel, 0x01000000, 1);
  REQUIRE(!hole.ok());
  CHECK(hole.fault().kind == ErrKind::UnmappedAccess);

  auto user = ahb_dma_write_u32(vuln, Actor::UserlandProcess,
                                kBpmpVectorsBase, 1);
  REQUIRE(!user.ok());
  CHECK(user.fault().kind == ErrKind::AccessDenied);

  Device fixed = booted_device("F6_0");
  auto off = ahb_dma_write_u32(fixed, Actor::NormalKernel, kBpmpVectorsBase, 1);
  REQUIRE(!off.ok());
  CHECK(off.fault().kind == ErrKind::FeatureDisabled);
}

TEST_CASE("no kernel-reachable call dents the vectors once dma is gone") {
  Device dev = booted_device("F6_0", 21);
  Bytes vectors = dev.raw_read(kBpmpVectorsBase, 0x24);

  Xorshift64 rng(777);
  for (int i = 0; i < 2000; ++i) {
    uint32_t addr = kBpmpVectorsBase + static_cast<uint32_t>(rng.below(0x24));
    switch (rng.below(4)) {
      case 0:
        (void)ahb_dma_write_u32(dev, Actor::NormalKernel, addr, rng.next32());
        break;
      case 1:
        (void)dev.write_u32(Actor::NormalKernel, addr, rng.next32());
        break;
      case 2:
        (void)dev.mem_write(Actor::NormalKernel, addr,
                            Bytes(1 + rng.below(8), 0x41));
        break;
      default:
        (void)smc_dispatch(dev, Actor::NormalKernel,
                           static_cast<uint32_t>(rng.below(6)),
                           {rng.next32(), rng.next32(), rng.next32(),
                            rng.next32()});
        break;
    }
    REQUIRE(dev.raw_read(kBpmpVectorsBase, 0x24) == vectors);
  }
}

TEST_CASE("protected keys never show up outside the secure world") {
  Device dev = booted_device("F1_0");
  REQUIRE(enter_deep_sleep(dev).ok());

  std::string master = hex(dev.silicon().dk_master);
  CHECK(hex(dev.raw_read(kDramBase, kDramSize)).find(master) ==
        std::string::npos);
  CHECK(hex(dev.raw_read(kBpmpBase, kBpmpSize)).find(master) ==
        std::string::npos);
  std::string rendered;
  for (const auto& e : dev.trace.events()) rendered += e.render() + "\n";
  CHECK(rendered.find(master) == std::string::npos);
}
