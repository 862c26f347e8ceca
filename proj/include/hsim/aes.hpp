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

// AES-128 (encrypt direction only), AES-CTR and AES-CMAC. The simulator
// never needs the decrypt direction: key derivation is single-block ECB,
// bulk encryption is CTR (self-inverse), and authentication is CMAC.

#pragma once

#include <cstddef>

#include "hsim/common.hpp"

namespace hsim::aes {

namespace detail {

inline constexpr uint8_t kSbox[256] = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b,
    0xfe, 0xd7, 0xab, 0x76, 0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0,
    0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26,
    0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2,
    0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0,
    0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed,
    0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f,
    0x50, 0x3c, 0x9f, 0xa8, 0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5,
    0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec,
    0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14,
    0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c,
    0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d,
    0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f,
    0x4b, 0xbd, 0x8b, 0x8a, 0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e,
    0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e, 0xe1, 0xf8, 0x98, 0x11,
    0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f,
    0xb0, 0x54, 0xbb, 0x16};

inline constexpr uint8_t xtime(uint8_t x) {
  return static_cast<uint8_t>((x << 1) ^ ((x >> 7) * 0x1B));
}

}  // namespace detail

/// Expanded AES-128 key schedule: 11 round keys of 16 bytes.
class Key {
 public:
  explicit Key(const Block& key) {
    std::memcpy(rk_[0].data(), key.data(), 16);
    uint8_t rcon = 0x01;
    for (int r = 1; r <= 10; ++r) {
      uint8_t t[4] = {rk_[r - 1][12], rk_[r - 1][13], rk_[r - 1][14],
                      rk_[r - 1][15]};
      // RotWord + SubWord + Rcon.
      uint8_t t0 = t[0];
      t[0] = static_cast<uint8_t>(detail::kSbox[t[1]] ^ rcon);
      t[1] = detail::kSbox[t[2]];
      t[2] = detail::kSbox[t[3]];
      t[3] = detail::kSbox[t0];
      rcon = detail::xtime(rcon);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          uint8_t prev = rk_[r - 1][i * 4 + j];
          uint8_t left = (i == 0) ? t[j] : rk_[r][(i - 1) * 4 + j];
          rk_[r][i * 4 + j] = static_cast<uint8_t>(prev ^ left);
        }
      }
    }
  }

  void encrypt_block(const uint8_t in[16], uint8_t out[16]) const {
    uint8_t s[16];
    for (int i = 0; i < 16; ++i) s[i] = static_cast<uint8_t>(in[i] ^ rk_[0][i]);
    for (int round = 1; round <= 10; ++round) {
      sub_bytes(s);
      shift_rows(s);
      if (round != 10) mix_columns(s);
      for (int i = 0; i < 16; ++i) s[i] ^= rk_[round][i];
    }
    std::memcpy(out, s, 16);
  }

 private:
  static void sub_bytes(uint8_t s[16]) {
    for (int i = 0; i < 16; ++i) s[i] = detail::kSbox[s[i]];
  }

  // State is column-major: byte s[c*4+r] is row r of column c.
  static void shift_rows(uint8_t s[16]) {
    uint8_t t[16];
    for (int c = 0; c < 4; ++c)
      for (int r = 0; r < 4; ++r) t[c * 4 + r] = s[((c + r) % 4) * 4 + r];
    std::memcpy(s, t, 16);
  }

  static void mix_columns(uint8_t s[16]) {
    using detail::xtime;
    for (int c = 0; c < 4; ++c) {
      uint8_t* col = s + c * 4;
      uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
      uint8_t all = static_cast<uint8_t>(a0 ^ a1 ^ a2 ^ a3);
      col[0] = static_cast<uint8_t>(a0 ^ all ^ xtime(static_cast<uint8_t>(a0 ^ a1)));
      col[1] = static_cast<uint8_t>(a1 ^ all ^ xtime(static_cast<uint8_t>(a1 ^ a2)));
      col[2] = static_cast<uint8_t>(a2 ^ all ^ xtime(static_cast<uint8_t>(a2 ^ a3)));
      col[3] = static_cast<uint8_t>(a3 ^ all ^ xtime(static_cast<uint8_t>(a3 ^ a0)));
    }
  }

  std::array<std::array<uint8_t, 16>, 11> rk_{};
};

/// Single-block AES-128 encryption (used for key derivation).
inline Block ecb(const Block& key, const Block& pt) {
  Block ct{};
  Key(key).encrypt_block(pt.data(), ct.data());
  return ct;
}

/// AES-128-CTR keystream XOR. The 16-byte nonce is the initial counter
/// block; the low 32 bits (big-endian, standard CTR) increment per block.
/// Encrypt and decrypt are the same operation.
inline Bytes ctr(const Block& key, const Block& nonce, const Bytes& data) {
  Key ks(key);
  Bytes out(data.size());
  Block counter = nonce;
  uint8_t stream[16];
  size_t off = 0;
  while (off < data.size()) {
    ks.encrypt_block(counter.data(), stream);
    size_t n = std::min<size_t>(16, data.size() - off);
    for (size_t i = 0; i < n; ++i)
      out[off + i] = static_cast<uint8_t>(data[off + i] ^ stream[i]);
    for (int i = 15; i >= 12; --i) {
      if (++counter[static_cast<size_t>(i)] != 0) break;
    }
    off += n;
  }
  return out;
}

namespace detail {

// GF(2^128) doubling for CMAC subkeys: left shift, conditionally XOR Rb.
inline Block dbl(const Block& in) {
  Block out{};
  uint8_t carry = 0;
  for (int i = 15; i >= 0; --i) {
    uint8_t b = in[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)] = static_cast<uint8_t>((b << 1) | carry);
    carry = b >> 7;
  }
  if (carry) out[15] ^= 0x87;
  return out;
}

}  // namespace detail

/// AES-CMAC (RFC 4493). Subkeys K1/K2 come from doubling AES(key, 0^16);
/// the final block is XORed with K1 when the message is a nonzero multiple
/// of 16 bytes, otherwise padded with 10...0 and XORed with K2.
inline Block cmac(const Block& key, const uint8_t* msg, size_t len) {
  Key ks(key);
  Block zero{};
  Block l{};
  ks.encrypt_block(zero.data(), l.data());
  Block k1 = detail::dbl(l);
  Block k2 = detail::dbl(k1);

  size_t nblocks = (len + 15) / 16;
  bool complete = nblocks > 0 && len % 16 == 0;
  if (nblocks == 0) nblocks = 1;

  Block last{};
  if (complete) {
    for (size_t i = 0; i < 16; ++i)
      last[i] = static_cast<uint8_t>(msg[(nblocks - 1) * 16 + i] ^ k1[i]);
  } else {
    size_t rem = len - (nblocks - 1) * 16;
    for (size_t i = 0; i < rem; ++i) last[i] = msg[(nblocks - 1) * 16 + i];
    last[rem] = 0x80;
    for (size_t i = 0; i < 16; ++i) last[i] ^= k2[i];
  }

  Block x{};
  for (size_t b = 0; b + 1 < nblocks; ++b) {
    for (size_t i = 0; i < 16; ++i) x[i] ^= msg[b * 16 + i];
    ks.encrypt_block(x.data(), x.data());
  }
  for (size_t i = 0; i < 16; ++i) x[i] ^= last[i];
  ks.encrypt_block(x.data(), x.data());
  return x;
}

inline Block cmac(const Block& key, const Bytes& msg) {
  return cmac(key, msg.data(), msg.size());
}

inline Block cmac(const Block& key, std::string_view msg) {
  return cmac(key, reinterpret_cast<const uint8_t*>(msg.data()), msg.size());
}

inline Block block_from(const Bytes& b) {
  Block out{};
  std::memcpy(out.data(), b.data(), std::min<size_t>(16, b.size()));
  return out;
}

/// 16-byte block holding an ASCII label, zero padded. Labels longer than
/// 16 bytes are a programming error and are truncated.
inline Block label_block(std::string_view label) {
  Block out{};
  std::memcpy(out.data(), label.data(), std::min<size_t>(16, label.size()));
  return out;
}

}  // namespace hsim::aes
