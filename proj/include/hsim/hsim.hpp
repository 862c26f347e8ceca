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

// Umbrella header: the whole simulator, harness and tooling surface.

#pragma once

#include "hsim/aes.hpp"
#include "hsim/boot.hpp"
#include "hsim/common.hpp"
#include "hsim/cpu.hpp"
#include "hsim/device.hpp"
#include "hsim/fuzz.hpp"
#include "hsim/ipc.hpp"
#include "hsim/isa.hpp"
#include "hsim/profile.hpp"
#include "hsim/report.hpp"
#include "hsim/scenario.hpp"
#include "hsim/secmon.hpp"
#include "hsim/services.hpp"
#include "hsim/snapshot.hpp"
#include "hsim/trace.hpp"
#include "hsim/tsec.hpp"
