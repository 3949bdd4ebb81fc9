// SPDX-License-Identifier: Apache-2.0
//
// Deterministic, seeded process-failure injection at (rank, iteration)
// targets, placed at the head of the workload's main loop.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "ftmatch/sim.hpp"

namespace ftmatch::fi {

struct FaultPlan {
    bool enabled = false;
    uint64_t seed = 0;
    std::optional<int> rank;   // fixed target; unset = drawn uniformly
    std::optional<long> iter;  // fixed iteration; unset = uniform in [1, max_iter]
    int count = 1;
};

// Concrete (rank, iteration) pairs, reproducible from the seed. Pairs are
// distinct so each can fire exactly once.
std::vector<std::pair<int, long>> resolve(const FaultPlan& plan, int world_size,
                                          long max_iter);

// Owns the resolved plan plus the fired-entry tombstones. One injector is
// shared across recovery re-entries and world restarts, so a fired entry
// never fires again when the same iteration is re-executed after rollback.
class Injector {
  public:
    Injector() = default;
    Injector(const FaultPlan& plan, int world_size, long max_iter)
        : entries_(resolve(plan, world_size, max_iter)) {}
    explicit Injector(std::vector<std::pair<int, long>> entries)
        : entries_(std::move(entries)) {}

    // Kills the calling rank (throws) iff (rank, iteration) matches an
    // unfired entry. Call at each iteration head.
    void maybe_inject(sim::Rank& r, long iteration);

    const std::vector<std::pair<int, long>>& entries() const { return entries_; }
    int fired_count() const { return static_cast<int>(fired_.size()); }

  private:
    std::vector<std::pair<int, long>> entries_;
    std::set<std::pair<int, long>> fired_;
};

}  // namespace ftmatch::fi
