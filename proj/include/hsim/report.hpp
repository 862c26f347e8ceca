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

// Machine- and human-readable renderings of attack reports, matrices and
// fuzzing campaigns. JSON objects keep their keys sorted (the library's
// default), so every rendering of the same data is byte-identical.

#pragma once

#include <json.hpp>

#include "hsim/fuzz.hpp"
#include "hsim/scenario.hpp"

namespace hsim {

using Json = nlohmann::json;

inline Json to_json(const Fault& f) {
  Json j;
  j["kind"] = to_string(f.kind);
  j["actor"] = to_string(f.actor);
  j["addr"] = f.addr ? Json(hex32(*f.addr)) : Json(nullptr);
  j["detail"] = f.detail;
  return j;
}

inline Json to_json(const AttackReport& r) {
  Json j;
  j["scenario"] = r.scenario;
  j["profile"] = r.profile;
  j["seed"] = r.seed;
  j["success"] = r.success;
  j["expected"] = r.expected;
  Json secrets = Json::array();
  for (const SecretRecord& s : r.secrets)
    secrets.push_back(Json{{"name", s.name}, {"hex", s.hex_value}});
  j["secrets"] = std::move(secrets);
  j["trace"] = r.trace;
  j["fault"] = r.fault ? to_json(*r.fault) : Json(nullptr);
  return j;
}

inline Json to_json(const MatrixResult& m) {
  Json cells = Json::array();
  for (const MatrixCell& c : m.cells)
    cells.push_back(Json{{"scenario", c.scenario},
                         {"profile", c.profile},
                         {"success", c.success},
                         {"expected", c.expected},
                         {"match", c.match()}});
  Json reports = Json::array();
  for (const AttackReport& r : m.reports) reports.push_back(to_json(r));
  Json j;
  j["cells"] = std::move(cells);
  j["reports"] = std::move(reports);
  j["mismatches"] = m.mismatches;
  return j;
}

inline Json to_json(const FuzzFinding& f) {
  Json j;
  j["surface"] = to_string(f.surface);
  j["iteration"] = f.iteration;
  j["input"] = hex(f.input);
  j["fault"] = to_json(f.fault);
  j["escape"] = f.escape;
  j["reproducer"] =
      f.reproducer_path.empty() ? Json(nullptr) : Json(f.reproducer_path);
  return j;
}

inline Json to_json(const FuzzResult& r) {
  Json findings = Json::array();
  for (const FuzzFinding& f : r.findings) findings.push_back(to_json(f));
  Json j;
  j["surface"] = to_string(r.surface);
  j["profile"] = r.profile;
  j["rng_seed"] = r.rng_seed;
  j["device_seed"] = r.device_seed;
  j["iterations"] = r.iterations;
  j["total_hits"] = r.total_hits;
  j["escape_count"] = r.escape_count;
  j["findings"] = std::move(findings);
  return j;
}

/// Sidecar metadata that makes a saved reproducer self-describing: which
/// surface and device to feed the raw bytes back into, and where in the
/// campaign they came from.
inline Json reproducer_metadata(const FuzzFinding& f, const FuzzResult& r) {
  Json j;
  j["surface"] = to_string(f.surface);
  j["rng_seed"] = r.rng_seed;
  j["iteration"] = f.iteration;
  j["device_seed"] = r.device_seed;
  j["profile"] = r.profile;
  j["fault"] = to_json(f.fault);
  return j;
}

// ---------------------------------------------------------------------------
// Text renderings.

inline std::string render_text(const AttackReport& r) {
  std::string s = "scenario " + r.scenario + " on " + r.profile + ": " +
                  (r.success ? "SUCCESS" : "blocked") +
                  (r.success == r.expected ? "" : " (UNEXPECTED)") + "\n";
  for (const SecretRecord& sec : r.secrets)
    s += "  extracted " + sec.name + " = " + sec.hex_value + "\n";
  if (r.fault) s += "  blocked by: " + r.fault->render() + "\n";
  s += "  trace: " + std::to_string(r.trace.size()) + " events\n";
  return s;
}

inline std::string render_text(const MatrixResult& m) {
  std::string s;
  std::string last;
  for (const MatrixCell& c : m.cells) {
    if (c.scenario != last) {
      if (!last.empty()) s += "\n";
      s += c.scenario;
      s.append(c.scenario.size() < 18 ? 18 - c.scenario.size() : 1, ' ');
      last = c.scenario;
    }
    s += " " + c.profile + (c.success ? "+" : "-") +
         (c.match() ? "" : "!");
  }
  s += "\nmismatches: " + std::to_string(m.mismatches) + "\n";
  return s;
}

inline std::string render_text(const FuzzResult& r) {
  std::string s = "fuzz " + std::string(to_string(r.surface)) + " on " +
                  r.profile + ": " + std::to_string(r.iterations) +
                  " iterations, " + std::to_string(r.total_hits) +
                  " raw hits, " + std::to_string(r.findings.size()) +
                  " unique findings, " + std::to_string(r.escape_count) +
                  " control-flow escapes\n";
  for (const FuzzFinding& f : r.findings)
    s += "  iter " + std::to_string(f.iteration) +
         (f.escape ? " [escape] " : " ") + f.fault.render() + "\n";
  return s;
}

}  // namespace hsim
