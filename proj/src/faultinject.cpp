// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/faultinject.hpp"

#include <random>
#include <stdexcept>

namespace ftmatch::fi {

std::vector<std::pair<int, long>> resolve(const FaultPlan& plan, int world_size,
                                          long max_iter) {
    if (world_size < 1 || max_iter < 1)
        throw std::invalid_argument("world_size and max_iter must be positive");
    if (plan.rank && (*plan.rank < 0 || *plan.rank >= world_size))
        throw std::invalid_argument("fault target rank out of range: " +
                                    std::to_string(*plan.rank));
    if (plan.iter && (*plan.iter < 1 || *plan.iter > max_iter))
        throw std::invalid_argument("fault target iteration out of range: " +
                                    std::to_string(*plan.iter));
    std::vector<std::pair<int, long>> out;
    if (!plan.enabled || plan.count <= 0) return out;
    if (plan.rank && plan.iter && plan.count > 1)
        throw std::invalid_argument("a fully fixed plan cannot fire more than once");

    std::mt19937_64 rng(plan.seed);
    std::uniform_int_distribution<int> dr(0, world_size - 1);
    std::uniform_int_distribution<long> di(1, max_iter);
    std::set<std::pair<int, long>> seen;
    while (static_cast<int>(out.size()) < plan.count) {
        int r = plan.rank ? *plan.rank : dr(rng);
        long k = plan.iter ? *plan.iter : di(rng);
        if (seen.insert({r, k}).second) out.emplace_back(r, k);
        if (seen.size() >= static_cast<std::size_t>(world_size) *
                               static_cast<std::size_t>(max_iter))
            break;  // exhausted the target space
    }
    return out;
}

void Injector::maybe_inject(sim::Rank& r, long iteration) {
    for (const auto& e : entries_) {
        if (e.first != r.id() || e.second != iteration) continue;
        if (fired_.count(e)) continue;
        fired_.insert(e);
        r.self_kill(iteration);  // does not return
    }
}

}  // namespace ftmatch::fi
