// SPDX-License-Identifier: Apache-2.0
//
// ftmatch — fault-tolerance laboratory front end.
//
//   ftmatch run      single workload execution with optional fault injection
//   ftmatch bench    full sweep from a JSON config (results.csv, summary.txt)
//   ftmatch summarize  re-aggregate an existing results.csv
//   ftmatch gentrace   emit a workload execution trace for ckptfind
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ftmatch/bench.hpp"
#include "ftmatch/tracegen.hpp"
#include "ftmatch/workloads.hpp"

namespace fs = std::filesystem;
using namespace ftmatch;

namespace {

struct RunArgs {
    std::string workload = "cg";
    std::string input = "desk";
    int nranks = 4;
    long iters = 60;
    long interval = 10;
    std::string design = "none";
    std::string level = "L1";
    std::string store;
    bool procfi = false;
    uint64_t fi_seed = 0;
    int fi_rank = -1;
    long fi_iter = -1;
    int fi_count = 1;
};

int cmd_run(const RunArgs& a) {
    wl::RunSpec spec;
    spec.workload = a.workload;
    spec.dims = wl::parse_input(a.workload, a.input);
    spec.nranks = a.nranks;
    spec.iters = a.iters;
    spec.interval = a.interval;
    spec.policy = rec::parse_policy(a.design);
    spec.level = ckpt::parse_level(a.level);
    spec.seed = a.fi_seed;
    spec.store_root = a.store.empty() ? fs::temp_directory_path() /
                                            ("ftmatch_run_" + std::to_string(::getpid()))
                                      : fs::path(a.store);
    if (a.procfi) {
        spec.fault.enabled = true;
        spec.fault.seed = a.fi_seed;
        spec.fault.count = a.fi_count;
        if (a.fi_rank >= 0) spec.fault.rank = a.fi_rank;
        if (a.fi_iter >= 1) spec.fault.iter = a.fi_iter;
    }
    auto res = wl::run(spec);
    if (a.store.empty()) {
        std::error_code ec;
        fs::remove_all(spec.store_root, ec);
    }
    std::cout.precision(17);
    std::cout << "workload:     " << a.workload << " " << a.input << "\n"
              << "nranks:       " << a.nranks << "\n"
              << "design:       " << a.design << "\n"
              << "completed:    " << (res.completed ? "yes" : "no") << "\n"
              << "iterations:   " << res.iterations << "\n"
              << "incarnations: " << res.incarnations << "\n"
              << "answer:       " << res.answer << "\n"
              << "residual:     " << res.residual << "\n"
              << "digest:       " << std::hex << res.solution_digest << std::dec << "\n";
    const auto& c = res.critical_path;
    std::cout << "app:          " << c.app << "\n"
              << "ckpt_write:   " << c.ckpt_write << "\n"
              << "ckpt_read:    " << c.ckpt_read << "\n"
              << "recovery:     " << c.recovery << "\n"
              << "total:        " << c.total() << "\n";
    for (const auto& f : res.fault_events)
        std::cout << "fault:        rank " << f.rank << " at iteration " << f.iteration
                  << " (t=" << f.virtual_time << ")\n";
    return res.completed ? 0 : 1;
}

int cmd_bench(const std::string& config_file) {
    auto cfg = bench::load_config(config_file);
    auto sr = bench::run_suite(cfg);
    std::cout << "wrote " << sr.csv.string() << " (" << sr.rows << " rows, "
              << sr.failures << " failures)\n"
              << "wrote " << sr.summary.string() << "\n"
              << "wrote " << sr.resolved.string() << "\n";
    return sr.failures == 0 ? 0 : 1;
}

int cmd_summarize(const std::string& csv_file) {
    std::ifstream in(csv_file);
    if (!in) {
        std::cerr << "ftmatch: cannot open " << csv_file << "\n";
        return 1;
    }
    std::cout << bench::summarize_csv(in);
    return 0;
}

int cmd_gentrace(const std::string& workload, int nx, int ny, long iters,
                 const std::string& output) {
    std::string trace = workload == "cg" ? tg::cg_trace(nx, static_cast<int>(iters))
                                         : tg::jacobi_trace(nx, ny, static_cast<int>(iters));
    if (output.empty()) {
        std::cout << trace;
    } else {
        std::ofstream out(output, std::ios::trunc);
        out << trace;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic fault-tolerance laboratory"};
    app.require_subcommand(1);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "execute one workload");
    run->add_option("--workload", ra.workload)->check(CLI::IsMember({"cg", "jacobi"}));
    run->add_option("--input", ra.input, "small|medium|large|WxH[xD]");
    run->add_option("--nranks", ra.nranks)->check(CLI::PositiveNumber);
    run->add_option("--iters", ra.iters)->check(CLI::PositiveNumber);
    run->add_option("--ckpt-interval", ra.interval)->check(CLI::PositiveNumber);
    run->add_option("--ft-design", ra.design)
        ->check(CLI::IsMember({"restart-fti", "ulfm-fti", "reinit-fti", "none"}));
    run->add_option("--ckpt-level", ra.level)->check(CLI::IsMember({"L1", "L2", "L3", "L4"}));
    run->add_option("--store", ra.store, "checkpoint store root (default: temp dir)");
    run->add_flag("--procfi", ra.procfi, "enable process-failure injection");
    run->add_option("--fi-seed", ra.fi_seed);
    run->add_option("--fi-rank", ra.fi_rank);
    run->add_option("--fi-iter", ra.fi_iter);
    run->add_option("--fi-count", ra.fi_count)->check(CLI::PositiveNumber);

    std::string config_file;
    auto* benchcmd = app.add_subcommand("bench", "run the configured sweep");
    benchcmd->add_option("--config", config_file, "JSON config file")->required();

    std::string csv_file;
    auto* summarize = app.add_subcommand("summarize", "aggregate a results CSV");
    summarize->add_option("csv", csv_file)->required();

    std::string gt_workload = "jacobi", gt_output;
    int gt_nx = 8, gt_ny = 8;
    long gt_iters = 4;
    auto* gentrace = app.add_subcommand("gentrace", "emit a workload trace");
    gentrace->add_option("--workload", gt_workload)->check(CLI::IsMember({"cg", "jacobi"}));
    gentrace->add_option("--nx", gt_nx)->check(CLI::PositiveNumber);
    gentrace->add_option("--ny", gt_ny)->check(CLI::PositiveNumber);
    gentrace->add_option("--iters", gt_iters)->check(CLI::PositiveNumber);
    gentrace->add_option("-o,--output", gt_output);

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed()) return cmd_run(ra);
        if (benchcmd->parsed()) return cmd_bench(config_file);
        if (summarize->parsed()) return cmd_summarize(csv_file);
        if (gentrace->parsed()) return cmd_gentrace(gt_workload, gt_nx, gt_ny, gt_iters, gt_output);
    } catch (const std::exception& e) {
        std::cerr << "ftmatch: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
