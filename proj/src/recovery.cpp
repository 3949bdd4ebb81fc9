// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/recovery.hpp"

#include <cmath>

namespace ftmatch::rec {

namespace {

bool is_failure(sim::ErrorClass c) {
    return c == sim::ErrorClass::PeerFailed || c == sim::ErrorClass::Revoked;
}

int log2_rounds(int n) {
    int r = 0;
    int v = 1;
    while (v < n) { v <<= 1; ++r; }
    return r;
}

}  // namespace

Policy parse_policy(const std::string& text) {
    if (text == "restart-fti") return Policy::Restart;
    if (text == "ulfm-fti") return Policy::Ulfm;
    if (text == "reinit-fti") return Policy::Reinit;
    if (text == "none") return Policy::None;
    throw std::invalid_argument("unknown fault-tolerance design: " + text);
}

const char* policy_name(Policy p) {
    switch (p) {
        case Policy::None: return "none";
        case Policy::Restart: return "restart-fti";
        case Policy::Ulfm: return "ulfm-fti";
        case Policy::Reinit: return "reinit-fti";
    }
    return "none";
}

bool UlfmHandler::on_failure(sim::Rank& r, const sim::SimError& e) {
    if (!is_failure(e.cls())) return false;  // abort path
    sim::Rank::CategoryScope scope(r, sim::Category::Recovery);
    const int n = r.world_size();
    for (;;) {
        try {
            r.revoke();
            // Revocation propagation is a broadcast over the world.
            r.charge(r.cost().collective_round_cost * log2_rounds(n));
            auto shrunk = r.shrink();
            int vacancies = n - static_cast<int>(r.world().comm_members(shrunk).size());
            r.spawn_replacements(shrunk, vacancies);
            auto merged = r.merge();
            if (!r.agree_on(merged, true)) continue;
            r.install(merged);
            r.log_event("repair", "epoch=" + std::to_string(r.epoch()));
            return true;
        } catch (const sim::SimError& e2) {
            if (!is_failure(e2.cls())) throw;
            // Another failure mid-repair: restart the sequence from revoke.
        }
    }
}

bool ReinitHandler::on_failure(sim::Rank& r, const sim::SimError& e) {
    if (!is_failure(e.cls())) return false;
    sim::Rank::CategoryScope scope(r, sim::Category::Recovery);
    // Constant cost regardless of world size: the runtime already knows the
    // failed set, so recovery is a fixed rendezvous, not a repair protocol.
    r.charge(r.cost().collective_round_cost * kRecoveryRounds);
    r.reinit_restart();
    r.log_event("reinit", "epoch=" + std::to_string(r.epoch()));
    return true;
}

RunResult run_with_policy(int nranks, Policy policy, sim::Program program,
                          sim::WorldOptions opts) {
    switch (policy) {
        case Policy::None:
        case Policy::Restart:
            opts.handler = nullptr;
            break;
        case Policy::Ulfm:
            opts.handler = std::make_shared<UlfmHandler>();
            break;
        case Policy::Reinit:
            opts.handler = std::make_shared<ReinitHandler>();
            break;
    }

    RunResult res;
    res.clocks.resize(nranks);
    res.results.resize(nranks);
    constexpr int kMaxIncarnations = 64;
    for (int inc = 1;; ++inc) {
        auto w = sim::spawn_world(nranks, program, opts);
        auto out = w->run();
        res.incarnations = inc;
        for (int q = 0; q < nranks; ++q) res.clocks[q] += w->clock(q);
        for (const auto& f : w->fault_events()) res.fault_events.push_back(f);
        if (out.completed) {
            for (int q = 0; q < nranks; ++q)
                if (const sim::Bytes* b = w->result(q)) res.results[q] = *b;
            res.completed = true;
            return res;
        }
        bool failure = out.error && is_failure(out.error->cls());
        if (policy != Policy::Restart || !failure) {
            res.error = out.error;
            return res;
        }
        if (inc >= kMaxIncarnations)
            throw UnrecoverableFailure("restart limit exceeded: the program keeps failing");
        // Tear-down and redeploy: every rank pays for re-launching the job.
        for (int q = 0; q < nranks; ++q)
            res.clocks[q].add(sim::Category::Recovery,
                              opts.cost.redeploy_per_rank * static_cast<double>(nranks));
    }
}

}  // namespace ftmatch::rec
