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

// Batch front end: boots devices, feeds recovery-mode input, runs attack
// scenarios and matrices, fuzzes the input surfaces, and inspects saved
// device snapshots.
//
// Exit codes: 0 success, 1 usage or input error, 2 boot/receive rejection,
// 3 matrix mismatch.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hsim/hsim.hpp"

namespace fs = std::filesystem;
using namespace hsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRejected = 2;
constexpr int kExitMismatch = 3;

struct CliConfig {
  std::string profile_flag;  // empty: fall back to env, then F1_0
  uint64_t seed = 1;
  std::string format = "text";
  std::string out_path;       // empty: stdout
  std::string snapshot_path;  // --snapshot: write (boot/rcm-send), read (dump)
  unsigned workers = 1;

  bool json() const { return format == "json"; }

  const Profile* resolve_profile() const {
    std::string name = profile_flag;
    if (name.empty()) {
      if (const char* env = std::getenv("HSIM_PROFILE")) name = env;
      if (name.empty()) name = "F1_0";
    }
    return find_profile(name);
  }
};

std::optional<Bytes> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in),
               std::istreambuf_iterator<char>());
}

bool write_file(const std::string& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return false;
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  return static_cast<bool>(out);
}

/// Sends the final report to --out or stdout.
int emit(const CliConfig& cfg, const std::string& text, int code) {
  if (cfg.out_path.empty()) {
    std::cout << text;
    return code;
  }
  std::ofstream out(cfg.out_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "cannot write " << cfg.out_path << "\n";
    return kExitUsage;
  }
  out << text;
  return code;
}

int take_snapshot(const CliConfig& cfg, const Device& dev) {
  if (cfg.snapshot_path.empty()) return kExitOk;
  if (!write_file(cfg.snapshot_path, snapshot_device(dev))) {
    std::cerr << "cannot write snapshot " << cfg.snapshot_path << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_boot(const CliConfig& cfg, const std::string& package1_path) {
  const Profile* prof = cfg.resolve_profile();
  if (!prof) {
    std::cerr << "unknown profile\n";
    return kExitUsage;
  }
  Device dev = make_device(cfg.seed, *prof);
  if (!package1_path.empty()) {
    auto raw = read_file(package1_path);
    if (!raw) {
      std::cerr << "cannot read " << package1_path << "\n";
      return kExitUsage;
    }
    auto p1 = decode_package1(*raw);
    if (!p1) {
      std::cerr << "not a package1 image: " << package1_path << "\n";
      return kExitUsage;
    }
    dev.package1 = *p1;
  }

  BootOutcome out = coldboot(dev);
  std::string text;
  if (cfg.json()) {
    Json j;
    j["profile"] = prof->name;
    j["seed"] = cfg.seed;
    j["result"] = to_string(out.result);
    j["at"] = out.at;
    j["stages"] = dev.stage_trace;
    text = j.dump(2) + "\n";
  } else {
    text = "profile: " + std::string(prof->name) + "\nstages: ";
    for (size_t i = 0; i < dev.stage_trace.size(); ++i)
      text += (i ? " \xE2\x86\x92 " : "") + dev.stage_trace[i];
    text += "\nresult: " + std::string(to_string(out.result));
    if (!out.at.empty()) text += " (" + out.at + ")";
    text += "\n";
  }
  if (int rc = take_snapshot(cfg, dev); rc != kExitOk) return rc;
  return emit(cfg, text, out.ok() ? kExitOk : kExitRejected);
}

int cmd_rcm_send(const CliConfig& cfg, const std::string& frame_path) {
  const Profile* prof = cfg.resolve_profile();
  if (!prof) {
    std::cerr << "unknown profile\n";
    return kExitUsage;
  }
  auto wire = read_file(frame_path);
  if (!wire) {
    std::cerr << "cannot read " << frame_path << "\n";
    return kExitUsage;
  }
  Device dev = make_device(cfg.seed, *prof);
  rcm_enter(dev);
  auto out = rcm_receive(dev, *wire);

  std::string text;
  int code = kExitOk;
  if (cfg.json()) {
    Json j;
    j["profile"] = prof->name;
    j["frame_len"] = wire->size();
    if (out.ok()) {
      const RcmOutcome& rc = out.value();
      j["accepted"] = true;
      j["declared"] = rc.declared;
      j["escaped"] = rc.run.escaped;
      j["escape_pc"] = rc.run.escaped ? Json(hex32(rc.run.escape_pc)) : Json(nullptr);
      j["fault"] = rc.run.fault ? to_json(*rc.run.fault) : Json(nullptr);
    } else {
      j["accepted"] = false;
      j["fault"] = to_json(out.fault());
      code = kExitRejected;
    }
    text = j.dump(2) + "\n";
  } else {
    if (out.ok()) {
      const RcmOutcome& rc = out.value();
      text = "frame accepted, declared length " + std::to_string(rc.declared) +
             "\n";
      if (rc.run.escaped)
        text += "control-flow escape to " + hex32(rc.run.escape_pc) + "\n";
      if (rc.run.fault) text += "run fault: " + rc.run.fault->render() + "\n";
      if (!rc.run.escaped && !rc.run.fault) text += "handled cleanly\n";
    } else {
      text = "frame rejected: " + out.fault().render() + "\n";
      code = kExitRejected;
    }
  }
  if (int rc = take_snapshot(cfg, dev); rc != kExitOk) return rc;
  return emit(cfg, text, code);
}

int cmd_scenario(const CliConfig& cfg, const std::string& id) {
  const Profile* prof = cfg.resolve_profile();
  if (!prof) {
    std::cerr << "unknown profile\n";
    return kExitUsage;
  }
  if (id == "all") {
    MatrixResult m = run_matrix(cfg.seed, cfg.workers);
    std::string text =
        cfg.json() ? to_json(m).dump(2) + "\n" : render_text(m);
    return emit(cfg, text, m.mismatches == 0 ? kExitOk : kExitMismatch);
  }

  bool known = false;
  for (std::string_view s : scenario_ids()) known = known || s == id;
  if (!known) {
    std::cerr << "unknown scenario " << id << "\n";
    return kExitUsage;
  }
  Device final_device = make_device(cfg.seed, *prof);
  AttackReport r = run_scenario(cfg.seed, *prof, id, &final_device);
  if (int rc = take_snapshot(cfg, final_device); rc != kExitOk) return rc;
  std::string text =
      cfg.json() ? to_json(r).dump(2) + "\n" : render_text(r);
  return emit(cfg, text, r.success == r.expected ? kExitOk : kExitMismatch);
}

int cmd_fuzz(const CliConfig& cfg, const std::string& surface_name,
             uint64_t budget, uint64_t rng_seed) {
  const Profile* prof = cfg.resolve_profile();
  if (!prof) {
    std::cerr << "unknown profile\n";
    return kExitUsage;
  }
  auto surface = parse_surface(surface_name);
  if (!surface) {
    std::cerr << "unknown surface " << surface_name << "\n";
    return kExitUsage;
  }
  if (budget == 0) {
    std::cerr << "budget must be positive\n";
    return kExitUsage;
  }

  FuzzResult r = fuzz(*surface, rng_seed, budget, *prof, cfg.seed);

  // With an output directory, findings and reproducers land there and the
  // summary names each reproducer.
  if (!cfg.out_path.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.out_path, ec);
    if (ec) {
      std::cerr << "cannot create " << cfg.out_path << "\n";
      return kExitUsage;
    }
    for (FuzzFinding& f : r.findings) {
      std::string base = "repro-" + std::to_string(f.iteration);
      f.reproducer_path = base + ".bin";
      if (!write_file(cfg.out_path + "/" + base + ".bin", f.input)) {
        std::cerr << "cannot write reproducer " << base << "\n";
        return kExitUsage;
      }
      std::string meta = reproducer_metadata(f, r).dump(2) + "\n";
      if (!write_file(cfg.out_path + "/" + base + ".json",
                      Bytes(meta.begin(), meta.end()))) {
        std::cerr << "cannot write reproducer metadata " << base << "\n";
        return kExitUsage;
      }
    }
    std::string campaign = to_json(r).dump(2) + "\n";
    if (!write_file(cfg.out_path + "/campaign.json",
                    Bytes(campaign.begin(), campaign.end()))) {
      std::cerr << "cannot write campaign report\n";
      return kExitUsage;
    }
  }

  std::string text = cfg.json() ? to_json(r).dump(2) + "\n" : render_text(r);
  std::cout << text;
  return kExitOk;
}

int cmd_dump_state(const CliConfig& cfg) {
  if (cfg.snapshot_path.empty()) {
    std::cerr << "dump-state needs --snapshot <path>\n";
    return kExitUsage;
  }
  auto raw = read_file(cfg.snapshot_path);
  if (!raw) {
    std::cerr << "cannot read snapshot " << cfg.snapshot_path << "\n";
    return kExitUsage;
  }
  auto dev = restore_device(*raw);
  if (!dev) {
    std::cerr << "not a device snapshot: " << cfg.snapshot_path << "\n";
    return kExitUsage;
  }

  const Profile& p = dev->profile();
  auto space_row = [&](SpaceId s) {
    const Bytes& b = dev->backing(s);
    size_t nonzero = 0;
    for (uint8_t v : b) nonzero += v != 0;
    return std::pair<size_t, size_t>(b.size(), nonzero);
  };
  const SpaceId spaces[] = {SpaceId::Dram, SpaceId::Tzram, SpaceId::BpmpMem,
                            SpaceId::TsecImem, SpaceId::TsecDmem};

  std::string text;
  if (cfg.json()) {
    Json j;
    j["profile"] = p.name;
    j["seed"] = dev->seed();
    j["state"] = to_string(dev->state);
    j["stages"] = dev->stage_trace;
    Json flags;
    flags["pmc_userland_writable"] = p.pmc_userland_writable;
    flags["ahb_dma_enabled"] = p.ahb_dma_enabled;
    flags["se_unvalidated_restore"] = p.se_unvalidated_restore;
    flags["pl_u_bounds_checked"] = p.pl_u_bounds_checked;
    flags["sm_requires_initialize"] = p.sm_requires_initialize;
    flags["fspldr_dependency_enforced"] = p.fspldr_dependency_enforced;
    flags["rcm_length_checked"] = p.rcm_length_checked;
    flags["tsec_secureboot_present"] = p.tsec_secureboot_present;
    flags["tsec_smmu_bypass"] = p.tsec_smmu_bypass;
    flags["keygenldr_size_checked"] = p.keygenldr_size_checked;
    j["flags"] = std::move(flags);
    Json pmc = Json::array();
    for (uint32_t v : dev->pmc) pmc.push_back(hex32(v));
    j["pmc"] = std::move(pmc);
    Json mem;
    for (SpaceId s : spaces) {
      auto [size, nonzero] = space_row(s);
      mem[to_string(s)] = Json{{"size", size}, {"nonzero_bytes", nonzero}};
    }
    j["memory"] = std::move(mem);
    Json slots = Json::array();
    for (const SeSlot& slot : dev->se)
      slots.push_back(slot.loaded ? "sealed" : "empty");
    j["keyslots"] = std::move(slots);
    Json tsec;
    tsec["mode"] = dev->tsec.mode == FalconMode::HS ? "HS" : "NS";
    tsec["scrambled"] = dev->tsec.scrambled;
    tsec["root_delivered"] = dev->tsec.root_delivered;
    tsec["smmu_bypass"] = dev->tsec.smmu_bypass;
    j["tsec"] = std::move(tsec);
    j["bpmp"] = Json{{"pc", hex32(dev->bpmp.pc)},
                     {"halted", dev->bpmp.halted}};
    text = j.dump(2) + "\n";
  } else {
    text = "profile: " + std::string(p.name) + "  seed: " +
           std::to_string(dev->seed()) + "  state: " +
           to_string(dev->state) + "\n";
    text += "flags:";
    text += std::string(" pmc_userland_writable=") +
            (p.pmc_userland_writable ? "1" : "0");
    text += std::string(" ahb_dma_enabled=") + (p.ahb_dma_enabled ? "1" : "0");
    text += std::string(" se_unvalidated_restore=") +
            (p.se_unvalidated_restore ? "1" : "0");
    text += std::string(" pl_u_bounds_checked=") +
            (p.pl_u_bounds_checked ? "1" : "0");
    text += std::string(" sm_requires_initialize=") +
            (p.sm_requires_initialize ? "1" : "0");
    text += std::string(" fspldr_dependency_enforced=") +
            (p.fspldr_dependency_enforced ? "1" : "0");
    text += std::string(" rcm_length_checked=") +
            (p.rcm_length_checked ? "1" : "0");
    text += std::string(" tsec_secureboot_present=") +
            (p.tsec_secureboot_present ? "1" : "0");
    text += std::string(" tsec_smmu_bypass=") +
            (p.tsec_smmu_bypass ? "1" : "0");
    text += std::string(" keygenldr_size_checked=") +
            (p.keygenldr_size_checked ? "1" : "0");
    text += "\n";
    if (!dev->stage_trace.empty()) {
      text += "stages:";
      for (const std::string& s : dev->stage_trace) text += " " + s;
      text += "\n";
    }
    text += "pmc:";
    for (size_t i = 0; i < dev->pmc.size(); ++i) {
      if (i % 8 == 0) text += "\n  ";
      text += hex32(dev->pmc[i]) + " ";
    }
    text += "\nmemory:\n";
    for (SpaceId s : spaces) {
      auto [size, nonzero] = space_row(s);
      text += "  " + std::string(to_string(s)) + ": " + std::to_string(size) +
              " bytes, " + std::to_string(nonzero) + " nonzero\n";
    }
    text += "keyslots:";
    for (size_t i = 0; i < dev->se.size(); ++i)
      text += " " + std::to_string(i) + "=" +
              (dev->se[i].loaded ? "sealed" : "empty");
    text += "\ntsec: mode=" +
            std::string(dev->tsec.mode == FalconMode::HS ? "HS" : "NS") +
            " scrambled=" + (dev->tsec.scrambled ? "1" : "0") +
            " root_delivered=" + (dev->tsec.root_delivered ? "1" : "0") + "\n";
    text += "bpmp: pc=" + hex32(dev->bpmp.pc) +
            " halted=" + (dev->bpmp.halted ? "1" : "0") + "\n";
  }
  return emit(cfg, text, kExitOk);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic secure-platform simulator and attack harness"};
  app.require_subcommand(1);

  CliConfig cfg;
  app.add_option("--profile", cfg.profile_flag,
                 "mitigation profile (default: HSIM_PROFILE env or F1_0)");
  app.add_option("--seed", cfg.seed, "device seed (default 1)");
  app.add_option("--format", cfg.format, "output format")
      ->check(CLI::IsMember({"text", "json"}));
  app.add_option("--out", cfg.out_path, "write report to this path");
  app.add_option("--snapshot", cfg.snapshot_path,
                 "device snapshot path (written by boot/rcm-send, read by "
                 "dump-state)");
  app.fallthrough();

  auto* boot = app.add_subcommand("boot", "cold-boot a device");
  std::string package1_path;
  boot->add_option("--package1", package1_path,
                   "boot this package1 image file instead of the factory one");

  auto* rcm = app.add_subcommand("rcm-send", "feed a recovery-mode frame");
  std::string frame_path;
  rcm->add_option("file", frame_path, "frame file")->required();

  auto* scenario =
      app.add_subcommand("scenario", "run one attack scenario or 'all'");
  std::string scenario_id;
  scenario->add_option("id", scenario_id, "scenario id or 'all'")->required();
  scenario->add_option("--workers", cfg.workers,
                       "worker threads for 'all' (default 1)");

  auto* fz = app.add_subcommand("fuzz", "mutational fuzzing campaign");
  std::string surface_name;
  uint64_t budget = 10000, rng_seed = 42;
  fz->add_option("surface", surface_name, "rcm or ipc")->required();
  fz->add_option("--budget", budget, "iteration count (default 10000)");
  fz->add_option("--rng", rng_seed, "campaign rng seed (default 42)");

  auto* dump = app.add_subcommand("dump-state", "inspect a device snapshot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (boot->parsed()) return cmd_boot(cfg, package1_path);
  if (rcm->parsed()) return cmd_rcm_send(cfg, frame_path);
  if (scenario->parsed()) return cmd_scenario(cfg, scenario_id);
  if (fz->parsed()) return cmd_fuzz(cfg, surface_name, budget, rng_seed);
  if (dump->parsed()) return cmd_dump_state(cfg);
  return kExitUsage;
}
