// SPDX-License-Identifier: Apache-2.0
//
// The three fault-tolerance designs as pluggable policies: full-redeploy
// restart, online non-shrinking world repair, and runtime-level rollback.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftmatch/sim.hpp"

namespace ftmatch::rec {

enum class Policy { None, Restart, Ulfm, Reinit };

Policy parse_policy(const std::string& text);  // restart-fti|ulfm-fti|reinit-fti|none
const char* policy_name(Policy p);

struct UnrecoverableFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Online repair: revoke -> shrink -> spawn replacements -> merge -> agree,
// then swap the world slot and unwind every survivor to the program entry.
// A failure during repair restarts the sequence from revoke.
class UlfmHandler : public sim::FailureHandler {
  public:
    bool on_failure(sim::Rank& r, const sim::SimError& e) override;
};

// Runtime rollback: respawn failed ranks and unwind all survivors to the
// program entry. Charged recovery cost is a constant number of collective
// rounds, independent of world size.
class ReinitHandler : public sim::FailureHandler {
  public:
    static constexpr int kRecoveryRounds = 3;
    bool on_failure(sim::Rank& r, const sim::SimError& e) override;
};

struct RunResult {
    bool completed = false;
    int incarnations = 1;  // worlds spawned (>1 only under Restart)
    std::vector<sim::VirtualClock> clocks;       // summed across incarnations
    std::vector<sim::FaultEvent> fault_events;   // concatenated
    std::vector<std::optional<sim::Bytes>> results;  // from the final world
    std::optional<sim::SimError> error;
};

// Runs `program` on `nranks` logical processes under `policy`. Restart
// tears the world down on failure, charges the redeploy cost, and reruns;
// the other policies install their failure handler and run one world.
RunResult run_with_policy(int nranks, Policy policy, sim::Program program,
                          sim::WorldOptions opts = {});

}  // namespace ftmatch::rec
