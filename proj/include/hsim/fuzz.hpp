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

// Mutational black-box fuzzing of the device's externally reachable
// parsers. Each input runs against a device built from scratch, so a
// finding is a pure function of (device seed, profile, input bytes) and
// replays bit-exactly from its saved reproducer.

#pragma once

#include <set>

#include "hsim/boot.hpp"
#include "hsim/services.hpp"

namespace hsim {

enum class FuzzSurface : uint8_t { Rcm, Ipc };

inline const char* to_string(FuzzSurface s) {
  return s == FuzzSurface::Rcm ? "rcm" : "ipc";
}

inline std::optional<FuzzSurface> parse_surface(std::string_view s) {
  if (s == "rcm") return FuzzSurface::Rcm;
  if (s == "ipc") return FuzzSurface::Ipc;
  return std::nullopt;
}

struct FuzzFinding {
  FuzzSurface surface = FuzzSurface::Rcm;
  uint64_t iteration = 0;  // which mutation of the campaign produced it
  Bytes input;             // the exact bytes; replaying them reproduces it
  Fault fault;
  bool escape = false;  // control flow left the parser's own code
  std::string reproducer_path;  // set once the input is saved to disk
};

struct FuzzResult {
  FuzzSurface surface = FuzzSurface::Rcm;
  std::string profile;
  uint64_t rng_seed = 0;
  uint64_t device_seed = 0;
  uint64_t iterations = 0;
  uint64_t total_hits = 0;  // finding-worthy outcomes before dedup
  uint64_t escape_count = 0;
  std::vector<FuzzFinding> findings;  // deduped, in discovery order
};

// ---------------------------------------------------------------------------
// Seed corpus: well-formed inputs for each surface. Interesting behavior
// comes from the mutations, not from pre-aimed seeds.

inline std::vector<Bytes> fuzz_corpus(FuzzSurface surface) {
  std::vector<Bytes> corpus;
  if (surface == FuzzSurface::Rcm) {
    Bytes small(0x100, 0x41);
    corpus.push_back(rcm_frame(0x100, small));
    Bytes cap(kRcmBufferCap, 0x42);
    corpus.push_back(rcm_frame(kRcmBufferCap, cap));
    // Long but still benign: the copy stays short of the return slot.
    Bytes tall(kBpmpReturnSlot - kRcmBufferAddr - 8, 0x43);
    corpus.push_back(rcm_frame(static_cast<uint32_t>(tall.size()), tall));
  } else {
    auto msg = [](uint8_t selector, uint32_t cmd, std::vector<uint32_t> args,
                  std::string_view buffer) {
      IpcRequest req;
      req.command_id = cmd;
      req.args = std::move(args);
      req.buffer = bytes_of(buffer);
      Bytes b;
      b.push_back(selector);
      append_bytes(b, ipc_encode(req));
      return b;
    };
    corpus.push_back(msg(0, 0, {40}, ""));          // sm: initialize
    corpus.push_back(msg(0, 1, {}, "pl:u"));        // sm: get-service
    corpus.push_back(msg(0, 1, {}, "fsp-ldr"));     // sm: get-service
    corpus.push_back(msg(1, 1, {5}, ""));           // pl:u get-font-data
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Mutation engine.

namespace detail {

inline Bytes mutate_input(Xorshift64& rng, const std::vector<Bytes>& corpus) {
  Bytes cur = corpus[rng.below(corpus.size())];
  uint64_t rounds = 1 + rng.below(3);
  for (uint64_t r = 0; r < rounds; ++r) {
    switch (rng.below(5)) {
      case 0: {  // single bit flip
        if (cur.empty()) break;
        uint64_t bit = rng.below(cur.size() * 8);
        cur[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
        break;
      }
      case 1: {  // byte shuffle: a handful of random swaps
        if (cur.size() < 2) break;
        for (uint64_t k = 0, swaps = 1 + rng.below(8); k < swaps; ++k)
          std::swap(cur[rng.below(cur.size())], cur[rng.below(cur.size())]);
        break;
      }
      case 2: {  // length field: scale the leading u32 by 0, 1, 2 or big
        if (cur.size() < 4) break;
        uint32_t v = rd_le32(cur.data());
        switch (rng.below(4)) {
          case 0: v = 0; break;
          case 1: break;
          case 2: v *= 2; break;
          default: v |= 0x4000'0000u; break;
        }
        wr_le32(cur.data(), v);
        break;
      }
      case 3: {  // truncate
        if (cur.empty()) break;
        cur.resize(rng.below(cur.size()));
        break;
      }
      default: {  // splice with another corpus entry
        const Bytes& other = corpus[rng.below(corpus.size())];
        size_t head = cur.empty() ? 0 : rng.below(cur.size());
        size_t tail = other.empty() ? 0 : rng.below(other.size());
        cur.resize(head);
        cur.insert(cur.end(), other.begin() + static_cast<long>(tail),
                   other.end());
        break;
      }
    }
  }
  return cur;
}

struct FuzzProbe {
  std::optional<Fault> fault;
  bool escape = false;
  uint32_t dedup_pc = 0;
};

}  // namespace detail

/// Feeds one input to one surface of a freshly built device and reports
/// what the device did with it. This is also the replay primitive: the
/// same (surface, device seed, profile, input) always probes identically.
inline detail::FuzzProbe fuzz_probe(FuzzSurface surface, uint64_t device_seed,
                                    const Profile& profile,
                                    const Bytes& input) {
  detail::FuzzProbe out;
  Device dev = make_device(device_seed, profile);

  if (surface == FuzzSurface::Rcm) {
    rcm_enter(dev);
    auto r = rcm_receive(dev, input);
    if (!r.ok()) {
      out.fault = r.fault();
      out.dedup_pc = r.fault().addr.value_or(0);
      return out;
    }
    const RunResult& run = r.value().run;
    if (run.escaped) {
      out.escape = true;
      out.dedup_pc = run.escape_pc;
      out.fault = Fault{ErrKind::ControlFlowEscape, Actor::BpmpCore,
                        run.escape_pc, "control left the receive stub"};
      return out;
    }
    if (run.fault) {
      out.fault = run.fault;
      out.dedup_pc = run.fault->addr.value_or(0);
    }
    return out;
  }

  // IPC surface: the first byte picks which prepared session the message
  // lands on; the rest is the wire. Session setup is the honest path and
  // succeeds on every profile.
  install_builtin_world(dev);
  Process& proc = register_process(dev, "fuzz", 40, {"pl:u"});
  auto sm = svc_connect_to_named_port(dev, proc, "sm:");
  auto init = sm_initialize(dev, sm.value(), proc.pid);
  auto pl = sm_get_service(dev, sm.value(), "pl:u");
  (void)init;

  uint8_t selector = input.empty() ? 0 : input[0];
  Bytes wire(input.begin() + (input.empty() ? 0 : 1), input.end());
  uint32_t session = (selector & 1) ? pl.value() : sm.value();
  auto r = ipc_dispatch(dev, session, wire);
  if (!r.ok()) {
    out.fault = r.fault();
    out.dedup_pc = r.fault().addr.value_or(0);
  }
  return out;
}

/// A whole campaign: `iterations` mutated inputs, each against a fresh
/// device. Findings are deduplicated by (fault kind, faulting location)
/// and keep the first input that exhibited them.
inline FuzzResult fuzz(FuzzSurface surface, uint64_t rng_seed,
                       uint64_t iterations, const Profile& profile,
                       uint64_t device_seed = 7) {
  FuzzResult out;
  out.surface = surface;
  out.profile = profile.name;
  out.rng_seed = rng_seed;
  out.device_seed = device_seed;
  out.iterations = iterations;

  std::vector<Bytes> corpus = fuzz_corpus(surface);
  Xorshift64 rng(rng_seed);
  std::set<uint64_t> seen;

  for (uint64_t i = 0; i < iterations; ++i) {
    Bytes input = detail::mutate_input(rng, corpus);
    detail::FuzzProbe p = fuzz_probe(surface, device_seed, profile, input);
    if (!p.fault) continue;
    ++out.total_hits;
    uint64_t key =
        (uint64_t{static_cast<uint8_t>(p.fault->kind)} << 32) | p.dedup_pc;
    if (!seen.insert(key).second) continue;
    if (p.escape) ++out.escape_count;
    FuzzFinding f;
    f.surface = surface;
    f.iteration = i;
    f.input = std::move(input);
    f.fault = *p.fault;
    f.escape = p.escape;
    out.findings.push_back(std::move(f));
  }
  return out;
}

/// Re-runs a finding's exact input on a new device and checks the device
/// does the same thing again, field for field.
inline bool replay_matches(const FuzzFinding& f, uint64_t device_seed,
                           const Profile& profile) {
  detail::FuzzProbe p = fuzz_probe(f.surface, device_seed, profile, f.input);
  if (!p.fault) return false;
  return p.escape == f.escape && p.fault->kind == f.fault.kind &&
         p.fault->actor == f.fault.actor && p.fault->addr == f.fault.addr &&
         p.fault->detail == f.fault.detail;
}

}  // namespace hsim
