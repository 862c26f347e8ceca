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

#include "hsim/fuzz.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hsim;

namespace {

std::string flatten(const FuzzFinding& f) {
  return std::to_string(f.iteration) + "|" + hex(f.input) + "|" +
         f.fault.render() + "|" + (f.escape ? "1" : "0");
}

}  // namespace

TEST_CASE("campaigns are a pure function of their seeds") {
  FuzzResult a = fuzz(FuzzSurface::Rcm, 42, 5000, *find_profile("F1_0"));
  FuzzResult b = fuzz(FuzzSurface::Rcm, 42, 5000, *find_profile("F1_0"));
  REQUIRE(a.findings.size() == b.findings.size());
  for (size_t i = 0; i < a.findings.size(); ++i)
    CHECK(flatten(a.findings[i]) == flatten(b.findings[i]));
  CHECK(a.total_hits == b.total_hits);
  CHECK(a.escape_count == b.escape_count);

  FuzzResult c = fuzz(FuzzSurface::Rcm, 43, 5000, *find_profile("F1_0"));
  bool identical = c.findings.size() == a.findings.size();
  if (identical)
    for (size_t i = 0; i < a.findings.size(); ++i)
      if (flatten(a.findings[i]) != flatten(c.findings[i])) identical = false;
  CHECK_FALSE(identical);
}

TEST_CASE("the unchecked receive path yields control-flow escapes") {
  FuzzResult r = fuzz(FuzzSurface::Rcm, 42, 5000, *find_profile("F1_0"));
  CHECK(r.escape_count >= 1);
  bool saw = false;
  for (const FuzzFinding& f : r.findings)
    if (f.escape) {
      saw = true;
      CHECK(f.fault.kind == ErrKind::ControlFlowEscape);
      REQUIRE(f.fault.addr.has_value());
    }
  CHECK(saw);
}

TEST_CASE("the length check eliminates the escape class entirely") {
  FuzzResult r = fuzz(FuzzSurface::Rcm, 42, 20000, *find_profile("FIXED"));
  CHECK(r.escape_count == 0);
  for (const FuzzFinding& f : r.findings) {
    CHECK_FALSE(f.escape);
    CHECK(f.fault.kind != ErrKind::ControlFlowEscape);
    // Rejections are fine; memory corruption is not.
    CHECK(f.fault.kind != ErrKind::UnmappedAccess);
    CHECK(f.fault.kind != ErrKind::InvalidOpcode);
  }
  // The mitigated parser still rejects garbage loudly.
  CHECK_FALSE(r.findings.empty());
}

TEST_CASE("every finding replays bit-exactly on a fresh device") {
  FuzzResult rcm = fuzz(FuzzSurface::Rcm, 42, 5000, *find_profile("F1_0"));
  REQUIRE_FALSE(rcm.findings.empty());
  for (const FuzzFinding& f : rcm.findings)
    CHECK(replay_matches(f, rcm.device_seed, *find_profile("F1_0")));

  FuzzResult ipc = fuzz(FuzzSurface::Ipc, 42, 2000, *find_profile("F1_0"));
  REQUIRE_FALSE(ipc.findings.empty());
  for (const FuzzFinding& f : ipc.findings)
    CHECK(replay_matches(f, ipc.device_seed, *find_profile("F1_0")));

  // A finding replayed against the wrong era is a different story.
  bool all_same = true;
  for (const FuzzFinding& f : rcm.findings)
    if (!replay_matches(f, rcm.device_seed, *find_profile("FIXED")))
      all_same = false;
  CHECK_FALSE(all_same);
}

TEST_CASE("findings are unique by fault kind and location") {
  FuzzResult r = fuzz(FuzzSurface::Rcm, 42, 10000, *find_profile("F1_0"));
  std::set<std::pair<int, uint32_t>> keys;
  for (const FuzzFinding& f : r.findings) {
    auto key = std::make_pair(static_cast<int>(f.fault.kind),
                              f.fault.addr.value_or(0));
    CHECK(keys.insert(key).second);
  }
  CHECK(r.total_hits >= r.findings.size());
}

TEST_CASE("message fuzzing exercises the service dispatch surface") {
  FuzzResult r = fuzz(FuzzSurface::Ipc, 42, 3000, *find_profile("F1_0"));
  CHECK(r.escape_count == 0);  // no guest code runs on this surface
  std::set<ErrKind> kinds;
  for (const FuzzFinding& f : r.findings) kinds.insert(f.fault.kind);
  CHECK(kinds.count(ErrKind::BadMessage) == 1);
  // Mutated arguments reach past the parser into service handlers.
  CHECK(kinds.size() >= 2);
}

TEST_CASE("corpus entries are themselves well-formed") {
  for (const Bytes& b : fuzz_corpus(FuzzSurface::Rcm)) {
    Device dev = make_device(7, *find_profile("F1_0"));
    rcm_enter(dev);
    auto r = rcm_receive(dev, b);
    REQUIRE(r.ok());
    CHECK_FALSE(r.value().run.escaped);
    CHECK_FALSE(r.value().run.fault.has_value());
  }
  for (const Bytes& b : fuzz_corpus(FuzzSurface::Ipc)) {
    REQUIRE_FALSE(b.empty());
    auto req = ipc_decode(Bytes(b.begin() + 1, b.end()));
    CHECK(req.ok());
  }
}

TEST_CASE("surface names parse and print") {
  CHECK(parse_surface("rcm") == FuzzSurface::Rcm);
  CHECK(parse_surface("ipc") == FuzzSurface::Ipc);
  CHECK_FALSE(parse_surface("usb").has_value());
  CHECK(std::string(to_string(FuzzSurface::Rcm)) == "rcm");
  CHECK(std::string(to_string(FuzzSurface::Ipc)) == "ipc");
}
