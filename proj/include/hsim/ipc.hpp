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

// IPC request wire codec. Little-endian layout:
//   u32 magic "IPC0" | u32 command_id | u32 n_args (<= 8) | u32 buffer_len |
//   n_args x u32 | buffer bytes
// The total size must match exactly; anything else is a BadMessage.

#pragma once

#include "hsim/common.hpp"
#include "hsim/trace.hpp"

namespace hsim {

inline constexpr uint32_t kIpcMagic = 0x49504330;  // "IPC0"
inline constexpr uint32_t kIpcMaxArgs = 8;

struct IpcRequest {
  uint32_t command_id = 0;
  std::vector<uint32_t> args;
  Bytes buffer;
};

/// What a service hands back on success. Replies have no wire format;
/// callers inside the simulator consume them directly.
struct IpcReply {
  std::vector<uint32_t> words;
  Bytes buffer;
};

inline Bytes ipc_encode(const IpcRequest& req) {
  Bytes out;
  append_le32(out, kIpcMagic);
  append_le32(out, req.command_id);
  append_le32(out, static_cast<uint32_t>(req.args.size()));
  append_le32(out, static_cast<uint32_t>(req.buffer.size()));
  for (uint32_t a : req.args) append_le32(out, a);
  append_bytes(out, req.buffer);
  return out;
}

inline Result<IpcRequest> ipc_decode(const Bytes& wire) {
  auto bad = [&](const char* why) {
    return Fault{ErrKind::BadMessage, Actor::UserlandProcess, std::nullopt, why};
  };
  if (wire.size() < 16) return bad("short header");
  if (rd_le32(wire.data()) != kIpcMagic) return bad("bad magic");
  IpcRequest req;
  req.command_id = rd_le32(wire.data() + 4);
  uint32_t n_args = rd_le32(wire.data() + 8);
  uint32_t buffer_len = rd_le32(wire.data() + 12);
  if (n_args > kIpcMaxArgs) return bad("too many args");
  uint64_t want = 16 + uint64_t{n_args} * 4 + buffer_len;
  if (wire.size() != want) return bad("length mismatch");
  for (uint32_t i = 0; i < n_args; ++i)
    req.args.push_back(rd_le32(wire.data() + 16 + i * 4));
  req.buffer.assign(wire.begin() + 16 + n_args * 4, wire.end());
  return req;
}

}  // namespace hsim
