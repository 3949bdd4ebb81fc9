// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ftmatch/workloads.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftmatch::bench {

namespace {

std::string default_input(const std::string& workload) {
    // Desk-scale grids whose decomposed axis divides every swept rank count.
    return workload == "cg" ? "16x16x32" : "64x64";
}

void apply_cost_overrides(sim::CostModel& cm, const json& j) {
    if (j.contains("compute_per_element")) cm.compute_per_element = j["compute_per_element"];
    if (j.contains("msg_latency")) cm.msg_latency = j["msg_latency"];
    if (j.contains("msg_per_byte")) cm.msg_per_byte = j["msg_per_byte"];
    if (j.contains("ckpt_write_per_byte")) {
        auto v = j["ckpt_write_per_byte"].get<std::vector<double>>();
        for (std::size_t i = 0; i < v.size() && i < 4; ++i) cm.ckpt_write_per_byte[i] = v[i];
    }
    if (j.contains("ckpt_read_per_byte")) cm.ckpt_read_per_byte = j["ckpt_read_per_byte"];
    if (j.contains("redeploy_per_rank")) cm.redeploy_per_rank = j["redeploy_per_rank"];
    if (j.contains("ulfm_heartbeat_per_step_per_rank"))
        cm.ulfm_heartbeat_per_step_per_rank = j["ulfm_heartbeat_per_step_per_rank"];
    if (j.contains("collective_round_cost")) cm.collective_round_cost = j["collective_round_cost"];
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Config load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config file: " + file.string());
    json j = json::parse(in);
    Config cfg;
    if (j.contains("workloads")) cfg.workloads = j["workloads"].get<std::vector<std::string>>();
    if (j.contains("policies")) cfg.policies = j["policies"].get<std::vector<std::string>>();
    if (j.contains("nranks")) cfg.nranks = j["nranks"].get<std::vector<int>>();
    if (j.contains("inputs"))
        for (auto& [k, v] : j["inputs"].items()) cfg.inputs[k] = v.get<std::string>();
    if (j.contains("iters")) cfg.iters = j["iters"];
    if (j.contains("interval")) cfg.interval = j["interval"];
    if (j.contains("repetitions")) cfg.repetitions = j["repetitions"];
    if (j.contains("seed")) cfg.seed = j["seed"];
    if (j.contains("fault")) {
        const auto& f = j["fault"];
        if (f.contains("count")) cfg.fault_count = f["count"];
        if (f.contains("rank")) cfg.fault_rank = f["rank"];
        if (f.contains("iter")) cfg.fault_iter = f["iter"];
    }
    if (j.contains("cost")) apply_cost_overrides(cfg.cost, j["cost"]);
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    return cfg;
}

std::string resolved_config_json(const Config& cfg) {
    json j;
    j["workloads"] = cfg.workloads;
    j["policies"] = cfg.policies;
    j["nranks"] = cfg.nranks;
    json inputs;
    for (const auto& w : cfg.workloads)
        inputs[w] = cfg.inputs.count(w) ? cfg.inputs.at(w) : default_input(w);
    j["inputs"] = inputs;
    j["iters"] = cfg.iters;
    j["interval"] = cfg.interval;
    j["repetitions"] = cfg.repetitions;
    j["seed"] = cfg.seed;
    j["fault"] = {{"count", cfg.fault_count},
                  {"rank", cfg.fault_rank},
                  {"iter", cfg.fault_iter}};
    j["cost"] = {{"compute_per_element", cfg.cost.compute_per_element},
                 {"msg_latency", cfg.cost.msg_latency},
                 {"msg_per_byte", cfg.cost.msg_per_byte},
                 {"ckpt_write_per_byte", cfg.cost.ckpt_write_per_byte},
                 {"ckpt_read_per_byte", cfg.cost.ckpt_read_per_byte},
                 {"redeploy_per_rank", cfg.cost.redeploy_per_rank},
                 {"ulfm_heartbeat_per_step_per_rank", cfg.cost.ulfm_heartbeat_per_step_per_rank},
                 {"collective_round_cost", cfg.cost.collective_round_cost}};
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2) + "\n";
}

SuiteResult run_suite(const Config& cfg) {
    fs::create_directories(cfg.output_dir);
    SuiteResult sr;
    sr.csv = cfg.output_dir / "results.csv";
    sr.summary = cfg.output_dir / "summary.txt";
    sr.resolved = cfg.output_dir / "config.resolved.json";

    {
        std::ofstream rc(sr.resolved, std::ios::trunc);
        rc << resolved_config_json(cfg);
    }

    std::ostringstream csv;
    csv << kCsvHeader << "\n";
    int cell = 0;
    for (const auto& workload : cfg.workloads) {
        std::string input =
            cfg.inputs.count(workload) ? cfg.inputs.at(workload) : default_input(workload);
        for (const auto& policy : cfg.policies) {
            for (int n : cfg.nranks) {
                for (int faulted = 0; faulted <= 1; ++faulted) {
                    for (int rep = 1; rep <= cfg.repetitions; ++rep) {
                        ++cell;
                        wl::RunSpec spec;
                        spec.workload = workload;
                        spec.dims = wl::parse_input(workload, input);
                        spec.nranks = n;
                        spec.iters = cfg.iters;
                        spec.interval = cfg.interval;
                        spec.policy = rec::parse_policy(policy);
                        spec.cost = cfg.cost;
                        spec.seed = cfg.seed ^ static_cast<uint64_t>(rep);
                        spec.store_root =
                            cfg.output_dir / "store" / ("cell" + std::to_string(cell));
                        if (faulted) {
                            spec.fault.enabled = true;
                            spec.fault.seed = cfg.seed ^ static_cast<uint64_t>(rep);
                            spec.fault.count = cfg.fault_count;
                            if (cfg.fault_rank >= 0) spec.fault.rank = cfg.fault_rank;
                            if (cfg.fault_iter >= 1) spec.fault.iter = cfg.fault_iter;
                        }
                        csv << workload << "," << policy << "," << n << "," << input
                            << "," << faulted << "," << rep << ",";
                        try {
                            auto res = wl::run(spec);
                            if (!res.completed) throw std::runtime_error("run aborted");
                            const auto& c = res.critical_path;
                            csv << fmt(c.app) << "," << fmt(c.ckpt_write) << ","
                                << fmt(c.ckpt_read) << "," << fmt(c.recovery) << ","
                                << fmt(c.app + c.ckpt_write + c.ckpt_read + c.recovery);
                        } catch (const std::exception&) {
                            ++sr.failures;  // record and continue the sweep
                            csv << "nan,nan,nan,nan,nan";
                        }
                        csv << "\n";
                        ++sr.rows;
                        std::error_code ec;
                        fs::remove_all(spec.store_root, ec);
                    }
                }
            }
        }
    }

    {
        std::ofstream out(sr.csv, std::ios::trunc);
        out << csv.str();
    }
    {
        std::istringstream in(csv.str());
        std::ofstream out(sr.summary, std::ios::trunc);
        out << summarize_csv(in);
    }
    return sr;
}

std::string summarize_csv(std::istream& csv) {
    std::string header;
    if (!std::getline(csv, header)) return "";
    {
        std::string want = kCsvHeader;
        if (header != want)
            throw std::runtime_error("unexpected CSV header: " + header);
    }
    struct Agg {
        double sum = 0;
        int count = 0;
        double mean() const { return count ? sum / count : 0.0; }
    };
    // (policy, nranks) -> mean recovery over faulted rows.
    std::map<std::pair<std::string, int>, Agg> recovery;
    std::map<std::string, Agg> ckpt_share;  // per policy, over all rows
    std::vector<int> scales;
    std::vector<std::string> policies;
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string workload, policy, nranks_s, input, faulted_s, rep_s, app_s, cw_s,
            cr_s, rec_s, total_s;
        std::getline(ss, workload, ',');
        std::getline(ss, policy, ',');
        std::getline(ss, nranks_s, ',');
        std::getline(ss, input, ',');
        std::getline(ss, faulted_s, ',');
        std::getline(ss, rep_s, ',');
        std::getline(ss, app_s, ',');
        std::getline(ss, cw_s, ',');
        std::getline(ss, cr_s, ',');
        std::getline(ss, rec_s, ',');
        std::getline(ss, total_s, ',');
        if (total_s.empty()) throw std::runtime_error("short CSV row: " + line);
        double rec_v = std::strtod(rec_s.c_str(), nullptr);
        double cw_v = std::strtod(cw_s.c_str(), nullptr);
        double total_v = std::strtod(total_s.c_str(), nullptr);
        if (std::isnan(total_v)) continue;  // failed row
        int n = std::stoi(nranks_s);
        if (std::find(scales.begin(), scales.end(), n) == scales.end()) scales.push_back(n);
        if (std::find(policies.begin(), policies.end(), policy) == policies.end())
            policies.push_back(policy);
        if (faulted_s == "1") {
            auto& a = recovery[{policy, n}];
            a.sum += rec_v;
            a.count += 1;
        }
        if (total_v > 0) {
            auto& s = ckpt_share[policy];
            s.sum += cw_v / total_v;
            s.count += 1;
        }
        ++rows;
    }
    if (rows == 0) return "";
    std::sort(scales.begin(), scales.end());

    std::ostringstream os;
    os.precision(4);
    os << "recovery time by scale (mean over faulted runs)\n";
    for (int n : scales) {
        os << "  nranks=" << n << ":";
        for (const auto& p : policies) {
            auto it = recovery.find({p, n});
            os << " " << p << "=" << (it != recovery.end() ? it->second.mean() : 0.0);
        }
        auto rn = recovery.find({"reinit-fti", n});
        if (rn != recovery.end() && rn->second.mean() > 0) {
            double base = rn->second.mean();
            auto rr = recovery.find({"restart-fti", n});
            auto ru = recovery.find({"ulfm-fti", n});
            if (rr != recovery.end())
                os << " restart/reinit=" << rr->second.mean() / base;
            if (ru != recovery.end())
                os << " ulfm/reinit=" << ru->second.mean() / base;
        }
        os << "\n";
    }
    os << "checkpoint-write share of total\n";
    for (const auto& p : policies)
        os << "  " << p << "=" << ckpt_share[p].mean() << "\n";
    os << "recovery scale trend\n";
    for (const auto& p : policies) {
        bool increasing = true, constant = true, any = false;
        double prev = -1;
        for (int n : scales) {
            auto it = recovery.find({p, n});
            if (it == recovery.end() || it->second.count == 0) continue;
            double m = it->second.mean();
            any = true;
            if (prev >= 0) {
                if (m <= prev) increasing = false;
                if (m != prev) constant = false;
            }
            prev = m;
        }
        os << "  " << p << "="
           << (!any ? "n/a" : constant ? "constant" : increasing ? "increasing" : "mixed")
           << "\n";
    }
    return os.str();
}

}  // namespace ftmatch::bench
