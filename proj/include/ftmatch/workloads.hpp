// SPDX-License-Identifier: Apache-2.0
//
// BSP proxy kernels (a conjugate-gradient solver and a 2-D Jacobi stencil)
// wired into checkpointing, fault injection, and the recovery policies.
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ftmatch/checkpoint.hpp"
#include "ftmatch/faultinject.hpp"
#include "ftmatch/recovery.hpp"
#include "ftmatch/sim.hpp"

namespace ftmatch::wl {

struct Dims {
    int x = 0, y = 0, z = 0;  // z unused by the 2-D stencil
};

// "small" | "medium" | "large" | "WxH[xD]"; presets depend on the workload.
Dims parse_input(const std::string& workload, const std::string& input);
Dims desk_default(const std::string& workload);

struct RunSpec {
    std::string workload = "cg";  // "cg" | "jacobi"
    Dims dims;
    int nranks = 4;
    long iters = 60;
    long interval = 10;
    rec::Policy policy = rec::Policy::None;
    fi::FaultPlan fault;
    sim::CostModel cost;
    uint64_t seed = 0;
    std::filesystem::path store_root;
    ckpt::Level level = ckpt::Level::L1;
    double jacobi_boundary = 1.0;  // top-edge temperature of the 2-D stencil
};

struct ResultRecord {
    bool completed = false;
    double answer = 0;       // decomposition-invariant checksum of the solution
    double residual = 0;     // final residual
    uint64_t solution_digest = 0;  // digest of the assembled solution bytes
    long iterations = 0;
    int incarnations = 1;
    std::vector<sim::VirtualClock> clocks;      // per rank, summed over incarnations
    sim::VirtualClock critical_path;            // max over ranks, per category
    std::vector<sim::FaultEvent> fault_events;
};

// Executes the standard resilient skeleton: protect, status/recover at
// entry, then the main loop with per-iteration fault injection and periodic
// checkpoints, under the chosen policy.
ResultRecord run(const RunSpec& spec);

}  // namespace ftmatch::wl
