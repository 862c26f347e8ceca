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

// Test-only reference implementations, deliberately independent of the
// library: the block cipher is OpenSSL's AES, the CMAC construction is
// written out from first principles on top of it, and a second CMAC path
// goes through OpenSSL's own EVP_MAC. The library must agree with both.

#pragma once

#include <openssl/evp.h>

#include <cassert>
#include <stdexcept>

#include "hsim/common.hpp"

namespace oracle {

using hsim::Block;
using hsim::Bytes;

inline Block aes128_ecb(const Block& key, const Block& pt) {
  Block ct{};
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_CIPHER_CTX_new");
  int outl = 0;
  if (EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.data(),
                         nullptr) != 1 ||
      EVP_CIPHER_CTX_set_padding(ctx, 0) != 1 ||
      EVP_EncryptUpdate(ctx, ct.data(), &outl, pt.data(), 16) != 1 ||
      outl != 16) {
    EVP_CIPHER_CTX_free(ctx);
    throw std::runtime_error("oracle ECB failed");
  }
  EVP_CIPHER_CTX_free(ctx);
  return ct;
}

inline Bytes aes128_ctr(const Block& key, const Block& nonce,
                        const Bytes& data) {
  Bytes out(data.size());
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_CIPHER_CTX_new");
  int outl = 0;
  if (EVP_EncryptInit_ex(ctx, EVP_aes_128_ctr(), nullptr, key.data(),
                         nonce.data()) != 1 ||
      (!data.empty() &&
       EVP_EncryptUpdate(ctx, out.data(), &outl, data.data(),
                         static_cast<int>(data.size())) != 1)) {
    EVP_CIPHER_CTX_free(ctx);
    throw std::runtime_error("oracle CTR failed");
  }
  EVP_CIPHER_CTX_free(ctx);
  return out;
}

// GF(2^128) doubling per RFC 4493, written independently of the library.
inline Block dbl(const Block& in) {
  Block out{};
  for (size_t i = 0; i < 16; ++i) {
    out[i] = static_cast<uint8_t>(in[i] << 1);
    if (i + 1 < 16 && (in[i + 1] & 0x80)) out[i] |= 1;
  }
  if (in[0] & 0x80) out[15] ^= 0x87;
  return out;
}

/// First-principles CMAC: subkeys from AES(0^16), 10* padding, CBC-MAC.
inline Block cmac(const Block& key, const uint8_t* msg, size_t len) {
  Block zero{};
  Block k1 = dbl(aes128_ecb(key, zero));
  Block k2 = dbl(k1);

  size_t n = (len + 15) / 16;
  bool complete = (n != 0) && (len % 16 == 0);
  if (n == 0) n = 1;

  Block mlast{};
  if (complete) {
    for (size_t i = 0; i < 16; ++i)
      mlast[i] = static_cast<uint8_t>(msg[16 * (n - 1) + i] ^ k1[i]);
  } else {
    size_t rem = len % 16;
    for (size_t i = 0; i < rem; ++i) mlast[i] = msg[16 * (n - 1) + i];
    mlast[rem] = 0x80;
    for (size_t i = 0; i < 16; ++i) mlast[i] ^= k2[i];
  }

  Block x{};
  for (size_t b = 0; b + 1 < n; ++b) {
    Block y{};
    for (size_t i = 0; i < 16; ++i)
      y[i] = static_cast<uint8_t>(x[i] ^ msg[16 * b + i]);
    x = aes128_ecb(key, y);
  }
  Block y{};
  for (size_t i = 0; i < 16; ++i) y[i] = static_cast<uint8_t>(x[i] ^ mlast[i]);
  return aes128_ecb(key, y);
}

inline Block cmac(const Block& key, const Bytes& msg) {
  return cmac(key, msg.data(), msg.size());
}

inline Block cmac(const Block& key, std::string_view msg) {
  return cmac(key, reinterpret_cast<const uint8_t*>(msg.data()), msg.size());
}

/// Second independent path: OpenSSL's own CMAC via EVP_MAC.
inline Block cmac_evp(const Block& key, const Bytes& msg) {
  Block tag{};
  EVP_MAC* mac = EVP_MAC_fetch(nullptr, "CMAC", nullptr);
  if (!mac) throw std::runtime_error("EVP_MAC_fetch CMAC");
  EVP_MAC_CTX* ctx = EVP_MAC_CTX_new(mac);
  if (!ctx) {
    EVP_MAC_free(mac);
    throw std::runtime_error("EVP_MAC_CTX_new");
  }
  char cipher_name[] = "AES-128-CBC";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string("cipher", cipher_name, 0),
      OSSL_PARAM_construct_end()};
  size_t outl = 0;
  if (EVP_MAC_init(ctx, key.data(), key.size(), params) != 1 ||
      EVP_MAC_update(ctx, msg.data(), msg.size()) != 1 ||
      EVP_MAC_final(ctx, tag.data(), &outl, tag.size()) != 1 || outl != 16) {
    EVP_MAC_CTX_free(ctx);
    EVP_MAC_free(mac);
    throw std::runtime_error("oracle EVP CMAC failed");
  }
  EVP_MAC_CTX_free(ctx);
  EVP_MAC_free(mac);
  return tag;
}

}  // namespace oracle
