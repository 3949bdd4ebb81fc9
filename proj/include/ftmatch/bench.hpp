// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: sweeps workload x policy x scale x fault-on/off with
// repetitions, reporting the virtual-time breakdown per run as CSV plus an
// aggregated findings summary.
#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "ftmatch/sim.hpp"

namespace ftmatch::bench {

struct Config {
    std::vector<std::string> workloads{"cg", "jacobi"};
    std::vector<std::string> policies{"restart-fti", "ulfm-fti", "reinit-fti"};
    std::vector<int> nranks{4, 8, 16, 32};
    std::map<std::string, std::string> inputs;  // per-workload input spec
    long iters = 30;
    long interval = 10;
    int repetitions = 5;
    uint64_t seed = 1;
    int fault_count = 1;
    int fault_rank = -1;   // fixed target rank, -1 = random
    long fault_iter = -1;  // fixed target iteration, -1 = random
    sim::CostModel cost;
    std::filesystem::path output_dir = "bench_out";
};

Config load_config(const std::filesystem::path& file);
std::string resolved_config_json(const Config& cfg);

inline constexpr const char* kCsvHeader =
    "workload,policy,nranks,input,faulted,rep,app,ckpt_write,ckpt_read,recovery,total";

struct SuiteResult {
    std::filesystem::path csv;       // results.csv
    std::filesystem::path summary;   // summary.txt
    std::filesystem::path resolved;  // config.resolved.json
    int rows = 0;
    int failures = 0;  // rows recorded as failed (suite continues)
};

SuiteResult run_suite(const Config& cfg);

// Aggregates a results CSV into per-scale recovery ratios, the checkpoint
// share of total time, and a scale-trend flag per policy. An empty CSV
// yields an empty summary.
std::string summarize_csv(std::istream& csv);

}  // namespace ftmatch::bench
