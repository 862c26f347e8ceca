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

// Userland-reachable services: the named-port connect path, the service
// manager with its PID-declared permission model, the pl:u font reader,
// and the session-limited fsp-ldr loader interface.

#pragma once

#include <algorithm>

#include "hsim/device.hpp"
#include "hsim/ipc.hpp"

namespace hsim {

// pl:u server image layout. The font table sits inside a larger private
// image; whatever surrounds it is reachable by an unchecked index.
inline constexpr uint32_t kPluImageSize = 0x1000;
inline constexpr uint32_t kPluFontOffset = 0x200;
inline constexpr uint32_t kPluSecretOffset = 0x340;

inline constexpr uint32_t kMaxPortNameLen = 11;

namespace detail {

/// Opaque fresh session tokens. Each handle mixes the boot-time salt with
/// the grant sequence number, so runs replay exactly but integers pulled
/// out of thin air never collide with a live handle in practice.
inline uint32_t fresh_handle(Device& dev) {
  for (;;) {
    uint64_t seq = dev.svc.next_handle_seq++;
    Xorshift64 rng(dev.svc.handle_salt ^ (seq * 0x9E3779B97F4A7C15ULL));
    uint32_t h = rng.next32();
    if (h != 0 && !dev.svc.sessions.count(h) && !dev.svc.code_fs.count(h))
      return h;
  }
}

inline Process* process_by_pid(Device& dev, uint32_t pid) {
  for (auto& [name, p] : dev.svc.processes)
    if (p.pid == pid) return &p;
  return nullptr;
}

inline uint32_t open_session(Device& dev, const std::string& service,
                             uint32_t owner_pid) {
  uint32_t h = fresh_handle(dev);
  dev.svc.sessions[h] = Session{h, service, owner_pid, false, 0};
  dev.svc.services[service].open_handles.push_back(h);
  return h;
}

}  // namespace detail

inline Status close_session(Device& dev, uint32_t handle) {
  auto it = dev.svc.sessions.find(handle);
  if (it == dev.svc.sessions.end())
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "close: no such session");
  auto& handles = dev.svc.services[it->second.service].open_handles;
  std::erase(handles, handle);
  dev.svc.sessions.erase(it);
  return ok_status();
}

inline Result<uint32_t> svc_connect_to_named_port(Device& dev,
                                                  const Process& proc,
                                                  std::string_view name) {
  if (name.size() > kMaxPortNameLen)
    return dev.fail(ErrKind::BadMessage, Actor::UserlandProcess, std::nullopt,
                    "port name too long");
  auto it = dev.svc.services.find(std::string(name));
  if (it == dev.svc.services.end() || !it->second.is_port)
    return dev.fail(ErrKind::PortNotFound, Actor::UserlandProcess, std::nullopt,
                    "port '" + std::string(name) + "'");
  if (it->second.open_handles.size() >= it->second.max_sessions)
    return dev.fail(ErrKind::SessionLimitReached, Actor::UserlandProcess,
                    std::nullopt, "port '" + std::string(name) + "' saturated");
  uint32_t h = detail::open_session(dev, it->first, proc.pid);
  dev.trace.emit(EventKind::Service, Actor::UserlandProcess, std::nullopt,
                 "connect " + std::string(name) + " pid=" +
                     std::to_string(proc.pid));
  return h;
}

inline Status sm_initialize(Device& dev, uint32_t session, uint32_t pid) {
  auto it = dev.svc.sessions.find(session);
  if (it == dev.svc.sessions.end() || it->second.service != "sm:")
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "sm: initialize on non-sm session");
  // The manager takes the caller's word for it; nothing ties the declared
  // pid to the process that opened the session. Repeats overwrite.
  it->second.initialized = true;
  it->second.declared_pid = pid;
  dev.trace.emit(EventKind::Service, Actor::UserlandProcess, std::nullopt,
                 "sm:initialize declared_pid=" + std::to_string(pid));
  return ok_status();
}

inline Result<uint32_t> sm_get_service(Device& dev, uint32_t session,
                                       std::string_view name) {
  auto it = dev.svc.sessions.find(session);
  if (it == dev.svc.sessions.end() || it->second.service != "sm:")
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "sm: get-service on non-sm session");
  const Session& sm = it->second;
  if (dev.profile().sm_requires_initialize && !sm.initialized)
    return dev.fail(ErrKind::NotInitialized, Actor::UserlandProcess,
                    std::nullopt, "sm: session skipped initialize");

  // Declared pids below 8 are the kernel-built servers and go anywhere.
  // Everyone else needs the service in their permission list, looked up
  // by the pid they declared.
  bool permitted = sm.declared_pid < 8;
  if (!permitted) {
    if (Process* p = detail::process_by_pid(dev, sm.declared_pid)) {
      permitted = std::find(p->allowed_services.begin(),
                            p->allowed_services.end(),
                            name) != p->allowed_services.end();
    }
  }
  if (!permitted)
    return dev.fail(ErrKind::AccessDenied, Actor::UserlandProcess, std::nullopt,
                    "sm: '" + std::string(name) + "' not permitted for pid " +
                        std::to_string(sm.declared_pid));

  auto svc_it = dev.svc.services.find(std::string(name));
  if (svc_it == dev.svc.services.end())
    return dev.fail(ErrKind::PortNotFound, Actor::UserlandProcess, std::nullopt,
                    "service '" + std::string(name) + "'");
  ServiceEntry& entry = svc_it->second;
  if (dev.profile().fspldr_dependency_enforced && entry.name == "fsp-ldr") {
    auto ldr = dev.svc.processes.find("ldr");
    if (ldr == dev.svc.processes.end() || !ldr->second.alive)
      return dev.fail(ErrKind::ServiceUnavailable, Actor::UserlandProcess,
                      std::nullopt, "fsp-ldr refuses sessions while ldr is down");
  }
  if (entry.open_handles.size() >= entry.max_sessions)
    return dev.fail(ErrKind::SessionLimitReached, Actor::UserlandProcess,
                    std::nullopt, "'" + entry.name + "' saturated");

  uint32_t h = detail::open_session(dev, entry.name, sm.owner_pid);
  dev.trace.emit(EventKind::Service, Actor::UserlandProcess, std::nullopt,
                 "sm:get-service " + std::string(name) + " declared_pid=" +
                     std::to_string(sm.declared_pid));
  return h;
}

inline Result<uint32_t> pl_get_font_data(Device& dev, uint32_t session,
                                         int64_t index) {
  auto it = dev.svc.sessions.find(session);
  if (it == dev.svc.sessions.end() || it->second.service != "pl:u")
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "pl:u read on non-pl:u session");
  dev.trace.emit(EventKind::Service, Actor::UserlandProcess, std::nullopt,
                 "pl:u get-font-data index=" + std::to_string(index));
  if (dev.profile().pl_u_bounds_checked &&
      (index < 0 || index >= kPluFontWords))
    return dev.fail(ErrKind::OutOfRange, Actor::UserlandProcess, std::nullopt,
                    "pl:u index " + std::to_string(index));
  int64_t off = kPluFontOffset + index * 4;
  if (off < 0 || off + 4 > static_cast<int64_t>(dev.svc.plu_image.size()))
    return dev.fail(ErrKind::OutOfRange, Actor::UserlandProcess, std::nullopt,
                    "pl:u server read fault at image offset " +
                        std::to_string(off));
  return rd_le32(dev.svc.plu_image.data() + off);
}

inline Result<uint32_t> fsp_ldr_open_code_fs(Device& dev, uint32_t session,
                                             uint64_t title_id) {
  auto it = dev.svc.sessions.find(session);
  if (it == dev.svc.sessions.end() || it->second.service != "fsp-ldr")
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "fsp-ldr open on non-fsp-ldr session");
  for (const TitleModule& m : dev.svc.modules) {
    if (m.title_id == title_id) {
      uint32_t h = detail::fresh_handle(dev);
      dev.svc.code_fs[h] = title_id;
      dev.trace.emit(EventKind::Service, Actor::UserlandProcess, std::nullopt,
                     "fsp-ldr open-code-fs " + m.name);
      return h;
    }
  }
  return dev.fail(ErrKind::UnknownTitle, Actor::UserlandProcess, std::nullopt,
                  "title " + hex32(static_cast<uint32_t>(title_id >> 32)) +
                      hex32(static_cast<uint32_t>(title_id)));
}

inline Result<Bytes> code_fs_read(Device& dev, uint32_t handle) {
  auto it = dev.svc.code_fs.find(handle);
  if (it == dev.svc.code_fs.end())
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "code-fs read on unknown handle");
  for (const TitleModule& m : dev.svc.modules)
    if (m.title_id == it->second) return m.blob;
  return dev.fail(ErrKind::UnknownTitle, Actor::UserlandProcess, std::nullopt,
                  "code-fs title vanished");
}

inline Status crash_process(Device& dev, std::string_view name) {
  auto it = dev.svc.processes.find(std::string(name));
  if (it == dev.svc.processes.end() || !it->second.alive)
    return dev.fail(ErrKind::NoSuchProcess, Actor::UserlandProcess,
                    std::nullopt, "process '" + std::string(name) + "'");
  it->second.alive = false;
  // Everything the process held as a client goes away with it; service
  // slots it occupied are freed for the next caller.
  std::vector<uint32_t> doomed;
  for (const auto& [h, sess] : dev.svc.sessions)
    if (sess.owner_pid == it->second.pid) doomed.push_back(h);
  for (uint32_t h : doomed) (void)close_session(dev, h);
  dev.trace.emit(EventKind::Service, Actor::UserlandProcess, std::nullopt,
                 "process " + std::string(name) + " crashed, " +
                     std::to_string(doomed.size()) + " session(s) closed");
  return ok_status();
}

inline Process& register_process(Device& dev, const std::string& name,
                                 uint32_t pid,
                                 std::vector<std::string> allowed = {}) {
  Process& p = dev.svc.processes[name];
  p.name = name;
  p.pid = pid;
  p.alive = true;
  p.allowed_services = std::move(allowed);
  return p;
}

/// Deterministic 1 KiB module image, expanded from the per-device blob key.
inline Bytes synth_module_blob(const Device& dev, std::string_view name) {
  Bytes out;
  for (uint32_t i = 0; i < 64; ++i) {
    Bytes msg = bytes_of(name);
    msg.push_back(':');
    append_le32(msg, i);
    Block b = aes::cmac(dev.silicon().k_blob, msg);
    append_bytes(out, b.data(), b.size());
  }
  return out;
}

inline Block plu_planted_secret(const Device& dev) {
  return aes::cmac(dev.silicon().k_blob, bytes_of("PLU-SECRET"));
}

/// Registers the kernel-built servers, the boot services, the title
/// registry, and the pl:u server image. The boot chain calls this when the
/// service layer comes up; tests call it directly to skip booting.
inline void install_builtin_world(Device& dev) {
  dev.svc = ServiceState{};
  dev.svc.handle_salt = rd_le64(dev.derive("HANDLES").data());

  // "fs, ldr, ncm, pm, sm and finally, boot": the six kernel-carried
  // servers, pids 1..6. Pids below 8 need no permission lists.
  const char* kip_names[] = {"fs", "ldr", "ncm", "pm", "sm", "boot"};
  uint32_t pid = 1;
  for (const char* n : kip_names) register_process(dev, n, pid++);

  dev.svc.services["sm:"] = ServiceEntry{"sm:", 32, "sm", true, {}};
  dev.svc.services["pl:u"] = ServiceEntry{"pl:u", 8, "ns", false, {}};
  dev.svc.services["fsp-ldr"] = ServiceEntry{"fsp-ldr", 1, "fs", false, {}};
  dev.svc.services["bsd:u"] = ServiceEntry{"bsd:u", 8, "bsd", false, {}};

  // ldr holds fsp-ldr's one session from boot onward.
  detail::open_session(dev, "fsp-ldr", dev.svc.processes["ldr"].pid);

  // Title registry: the six servers plus the ns sysmodule image.
  const char* title_names[] = {"fs", "ldr", "ncm", "pm", "sm", "boot", "ns"};
  uint64_t tid = 0x0100'0000'0000'0001ULL;
  for (const char* n : title_names)
    dev.svc.modules.push_back(TitleModule{n, tid++, synth_module_blob(dev, n)});

  // pl:u server image: private filler, the font table, and a planted
  // secret 0x40 bytes past the table end.
  dev.svc.plu_image.assign(kPluImageSize, 0);
  for (uint32_t i = 0; i * 16 < kPluImageSize; ++i) {
    Bytes msg = bytes_of("PLU-FILL");
    append_le32(msg, i);
    Block b = aes::cmac(dev.silicon().k_blob, msg);
    std::memcpy(dev.svc.plu_image.data() + i * 16, b.data(), 16);
  }
  for (uint32_t j = 0; j < kPluFontWords; ++j) {
    Bytes msg = bytes_of("FONT");
    append_le32(msg, j);
    Block b = aes::cmac(dev.silicon().k_blob, msg);
    std::memcpy(dev.svc.plu_image.data() + kPluFontOffset + j * 4, b.data(), 4);
  }
  Block secret = plu_planted_secret(dev);
  std::memcpy(dev.svc.plu_image.data() + kPluSecretOffset, secret.data(), 16);
  dev.svc.plu_secret_offset = kPluSecretOffset;
}

/// One font word recomputed the way install_builtin_world lays it down;
/// tests and the harness use this as the expected in-bounds value.
inline uint32_t plu_font_word(const Device& dev, uint32_t j) {
  Bytes msg = bytes_of("FONT");
  append_le32(msg, j);
  return rd_le32(aes::cmac(dev.silicon().k_blob, msg).data());
}

// ---------------------------------------------------------------------------
// Wire-level dispatch: what a request arriving on a session does. This is
// the fuzzer's IPC surface.

inline Result<IpcReply> ipc_dispatch(Device& dev, uint32_t session,
                                     const Bytes& wire) {
  auto decoded = ipc_decode(wire);
  if (!decoded.ok()) {
    dev.trace.emit(EventKind::FaultEvent, Actor::UserlandProcess, std::nullopt,
                   decoded.fault().render());
    return decoded.fault();
  }
  const IpcRequest& req = decoded.value();

  auto it = dev.svc.sessions.find(session);
  if (it == dev.svc.sessions.end())
    return dev.fail(ErrKind::InvalidSession, Actor::UserlandProcess,
                    std::nullopt, "dispatch on unknown session");
  const std::string& service = it->second.service;

  auto need_args = [&](size_t n) { return req.args.size() >= n; };

  if (service == "sm:") {
    if (req.command_id == 0) {
      if (!need_args(1))
        return dev.fail(ErrKind::BadMessage, Actor::UserlandProcess,
                        std::nullopt, "sm:initialize needs a pid word");
      auto st = sm_initialize(dev, session, req.args[0]);
      if (!st.ok()) return st.fault();
      return IpcReply{};
    }
    if (req.command_id == 1) {
      std::string name(req.buffer.begin(), req.buffer.end());
      while (!name.empty() && name.back() == '\0') name.pop_back();
      auto h = sm_get_service(dev, session, name);
      if (!h.ok()) return h.fault();
      return IpcReply{{h.value()}, {}};
    }
  } else if (service == "pl:u") {
    if (req.command_id == 1) {
      if (!need_args(1))
        return dev.fail(ErrKind::BadMessage, Actor::UserlandProcess,
                        std::nullopt, "pl:u read needs an index word");
      auto w = pl_get_font_data(dev, session,
                                static_cast<int32_t>(req.args[0]));
      if (!w.ok()) return w.fault();
      return IpcReply{{w.value()}, {}};
    }
  } else if (service == "fsp-ldr") {
    if (req.command_id == 0) {
      if (!need_args(2))
        return dev.fail(ErrKind::BadMessage, Actor::UserlandProcess,
                        std::nullopt, "open-code-fs needs a title id");
      uint64_t tid = uint64_t{req.args[1]} << 32 | req.args[0];
      auto h = fsp_ldr_open_code_fs(dev, session, tid);
      if (!h.ok()) return h.fault();
      return IpcReply{{h.value()}, {}};
    }
  }
  return dev.fail(ErrKind::BadMessage, Actor::UserlandProcess, std::nullopt,
                  "unknown command " + std::to_string(req.command_id) +
                      " for " + service);
}

}  // namespace hsim
