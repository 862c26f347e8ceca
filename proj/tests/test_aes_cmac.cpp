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

#include "hsim/aes.hpp"
#include "hsim/common.hpp"
#include "oracle.hpp"

using hsim::Block;
using hsim::Bytes;
using hsim::hex;
using hsim::unhex;

namespace {

Block block(std::string_view hexstr) {
  Bytes b = unhex(hexstr);
  REQUIRE(b.size() == 16);
  return hsim::aes::block_from(b);
}

// Shared key of the FIPS/RFC vector sets.
const char* kNistKey = "2b7e151628aed2a6abf7158809cf4f3c";

// 64-byte message used across the SP 800-38A and RFC 4493 vectors.
const char* kNistMsg =
    "6bc1bee22e409f96e93d7e117393172a"
    "ae2d8a571e03ac9c9eb76fac45af8e51"
    "30c81c46a35ce411e5fbc1191a0a52ef"
    "f69f2445df4f9b17ad2b417be66c3710";

}  // namespace

TEST_CASE("AES-128 single block matches published vectors") {
  // FIPS-197 appendix C.1.
  Block key = block("000102030405060708090a0b0c0d0e0f");
  Block pt = block("00112233445566778899aabbccddeeff");
  CHECK(hex(hsim::aes::ecb(key, pt)) == "69c4e0d86a7b0430d8cdb78070b4c55a");

  // SP 800-38A F.1.1 ECB-AES128, first block.
  Block key2 = block(kNistKey);
  Block pt2 = block("6bc1bee22e409f96e93d7e117393172a");
  CHECK(hex(hsim::aes::ecb(key2, pt2)) == "3ad77bb40d7a3660a89ecaf32466ef97");
}

TEST_CASE("AES-128 block agrees with OpenSSL across random inputs") {
  hsim::Xorshift64 rng(0xA55A);
  for (int i = 0; i < 256; ++i) {
    Block key{}, pt{};
    for (auto& b : key) b = static_cast<uint8_t>(rng.next());
    for (auto& b : pt) b = static_cast<uint8_t>(rng.next());
    CHECK(hsim::aes::ecb(key, pt) == oracle::aes128_ecb(key, pt));
  }
}

TEST_CASE("AES-CMAC matches the four RFC 4493 vectors") {
  Block key = block(kNistKey);
  Bytes msg = unhex(kNistMsg);

  struct Vector {
    size_t len;
    const char* tag;
  };
  const Vector vectors[] = {
      {0, "bb1d6929e95937287fa37d129b756746"},
      {16, "070a16b46b4d4144f79bdd9dd04a287c"},
      {40, "dfa66747de9ae63030ca32611497c827"},
      {64, "51f0bebf7e3b9d92fc49741779363cfe"},
  };
  for (const auto& v : vectors) {
    CAPTURE(v.len);
    Bytes part(msg.begin(), msg.begin() + static_cast<long>(v.len));
    CHECK(hex(hsim::aes::cmac(key, part)) == v.tag);
    // The oracles must reproduce the published values as well, otherwise
    // they are worthless as referees.
    CHECK(hex(oracle::cmac(key, part)) == v.tag);
    CHECK(hex(oracle::cmac_evp(key, part)) == v.tag);
  }
}

TEST_CASE("AES-CMAC agrees with both oracles on random key/message pairs") {
  hsim::Xorshift64 rng(0xC31C);
  for (int i = 0; i < 1000; ++i) {
    Block key{};
    for (auto& b : key) b = static_cast<uint8_t>(rng.next());
    Bytes msg(rng.below(100));
    for (auto& b : msg) b = static_cast<uint8_t>(rng.next());

    Block ours = hsim::aes::cmac(key, msg);
    CAPTURE(i, msg.size());
    REQUIRE(ours == oracle::cmac(key, msg));
    REQUIRE(ours == oracle::cmac_evp(key, msg));
  }
}

TEST_CASE("AES-CTR matches SP 800-38A and OpenSSL") {
  // SP 800-38A F.5.1 CTR-AES128.
  Block key = block(kNistKey);
  Block ctr0 = block("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff");
  Bytes pt = unhex(kNistMsg);
  Bytes expect = unhex(
      "874d6191b620e3261bef6864990db6ce"
      "9806f66b7970fdff8617187bb9fffdff"
      "5ae4df3edbd5d35e5b4f09020db03eab"
      "1e031dda2fbe03d1792170a0f3009cee");
  CHECK(hsim::aes::ctr(key, ctr0, pt) == expect);

  hsim::Xorshift64 rng(0x77);
  for (int i = 0; i < 64; ++i) {
    Block k{}, nonce{};
    for (auto& b : k) b = static_cast<uint8_t>(rng.next());
    for (auto& b : nonce) b = static_cast<uint8_t>(rng.next());
    Bytes data(rng.below(200));
    for (auto& b : data) b = static_cast<uint8_t>(rng.next());

    Bytes ct = hsim::aes::ctr(k, nonce, data);
    CHECK(ct == oracle::aes128_ctr(k, nonce, data));
    // CTR is self-inverse.
    CHECK(hsim::aes::ctr(k, nonce, ct) == data);
  }
}
