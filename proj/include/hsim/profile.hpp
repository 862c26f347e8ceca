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

// Mitigation profiles. Each named profile is a frozen set of flaw toggles
// describing one firmware era of the simulated platform; FIXED closes
// everything at once, including holes no shipped era ever closed together.

#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace hsim {

struct Profile {
  const char* name = "F1_0";
  bool pmc_userland_writable = false;
  bool ahb_dma_enabled = false;
  bool se_unvalidated_restore = false;
  bool pl_u_bounds_checked = false;
  bool sm_requires_initialize = false;
  bool fspldr_dependency_enforced = false;
  bool rcm_length_checked = false;
  bool tsec_secureboot_present = false;
  bool tsec_smmu_bypass = false;
  bool keygenldr_size_checked = false;
};

inline constexpr std::array<Profile, 6> kProfiles = {{
    // name     pmc    ahb    se-rst plu-bc sm-init fsp-dep rcm-len sb     bypass kgl-sz
    {"F1_0", true, true, true, false, false, false, false, false, false, false},
    {"F2_0", false, true, true, false, false, false, false, false, false, false},
    {"F6_0", false, false, false, true, true, false, false, false, false, false},
    {"F6_2", false, false, false, true, true, false, false, true, false, false},
    {"F7_0", false, false, false, true, true, false, false, true, true, false},
    {"FIXED", false, false, false, true, true, true, true, true, true, true},
}};

inline const Profile* find_profile(std::string_view name) {
  for (const Profile& p : kProfiles) {
    if (name == p.name) return &p;
  }
  return nullptr;
}

}  // namespace hsim
