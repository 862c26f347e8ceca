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

#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace hsim {

using Bytes = std::vector<uint8_t>;
using Block = std::array<uint8_t, 16>;

inline uint32_t rd_le32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

inline void wr_le32(uint8_t* p, uint32_t v) {
  p[0] = static_cast<uint8_t>(v);
  p[1] = static_cast<uint8_t>(v >> 8);
  p[2] = static_cast<uint8_t>(v >> 16);
  p[3] = static_cast<uint8_t>(v >> 24);
}

inline uint64_t rd_le64(const uint8_t* p) {
  return static_cast<uint64_t>(rd_le32(p)) |
         static_cast<uint64_t>(rd_le32(p + 4)) << 32;
}

inline void wr_le64(uint8_t* p, uint64_t v) {
  wr_le32(p, static_cast<uint32_t>(v));
  wr_le32(p + 4, static_cast<uint32_t>(v >> 32));
}

inline void append_le32(Bytes& b, uint32_t v) {
  uint8_t tmp[4];
  wr_le32(tmp, v);
  b.insert(b.end(), tmp, tmp + 4);
}

inline void append_le64(Bytes& b, uint64_t v) {
  uint8_t tmp[8];
  wr_le64(tmp, v);
  b.insert(b.end(), tmp, tmp + 8);
}

inline void append_bytes(Bytes& b, const uint8_t* p, size_t n) {
  b.insert(b.end(), p, p + n);
}

inline void append_bytes(Bytes& b, const Bytes& src) {
  b.insert(b.end(), src.begin(), src.end());
}

inline Bytes bytes_of(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string hex(const uint8_t* p, size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(n * 2);
  for (size_t i = 0; i < n; ++i) {
    out.push_back(digits[p[i] >> 4]);
    out.push_back(digits[p[i] & 0xF]);
  }
  return out;
}

inline std::string hex(const Bytes& b) { return hex(b.data(), b.size()); }

template <size_t N>
std::string hex(const std::array<uint8_t, N>& a) {
  return hex(a.data(), N);
}

inline std::string hex32(uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

/// Parses a hex string ("2b7e1516...") into bytes. Returns empty on odd
/// length or non-hex characters; callers pass literals, so this is a
/// programming-error guard rather than an input validator.
inline Bytes unhex(std::string_view s) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2 != 0) return {};
  Bytes out;
  out.reserve(s.size() / 2);
  for (size_t i = 0; i < s.size(); i += 2) {
    int hi = nib(s[i]), lo = nib(s[i + 1]);
    if (hi < 0 || lo < 0) return {};
    out.push_back(static_cast<uint8_t>(hi << 4 | lo));
  }
  return out;
}

/// xorshift64: the only random source in the simulator. Both the fuzzer
/// schedule and handle generation go through this, so runs are replayable
/// from a single 64-bit seed.
class Xorshift64 {
 public:
  explicit Xorshift64(uint64_t seed)
      : state_(seed ? seed : 0x9E3779B97F4A7C15ULL) {}

  uint64_t next() {
    uint64_t x = state_;
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    state_ = x;
    return x;
  }

  /// Uniform value in [0, bound). bound must be nonzero.
  uint64_t below(uint64_t bound) { return next() % bound; }

  uint32_t next32() { return static_cast<uint32_t>(next() >> 32); }

 private:
  uint64_t state_;
};

}  // namespace hsim
