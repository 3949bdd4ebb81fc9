// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "ftmatch/sim.hpp"

using namespace ftmatch;
using sim::Bytes;

namespace {

Bytes bytes(std::initializer_list<uint8_t> b) { return Bytes(b); }

}  // namespace

TEST_CASE("spawn_world rejects non-positive n") {
    CHECK_THROWS(sim::spawn_world(0, [](sim::Rank&) {}));
}

TEST_CASE("single-rank world terminates normally") {
    auto w = sim::spawn_world(1, [](sim::Rank& r) { r.set_result(bytes({1})); });
    auto out = w->run();
    CHECK(out.completed);
    REQUIRE(w->result(0) != nullptr);
}

TEST_CASE("send/recv round trip charges both clocks") {
    auto w = sim::spawn_world(2, [](sim::Rank& r) {
        if (r.id() == 0) {
            Bytes payload = {1, 2, 3, 4, 5, 6, 7, 8};
            r.send(1, 0, payload);
        } else {
            Bytes got = r.recv(0, 0);
            CHECK(got == Bytes({1, 2, 3, 4, 5, 6, 7, 8}));
        }
    });
    auto out = w->run();
    CHECK(out.completed);
    // msg_latency 100 + 8 bytes * 0.1
    CHECK(w->clock(0).app == doctest::Approx(100.8));
    CHECK(w->clock(1).app == doctest::Approx(100.8));
}

TEST_CASE("fifo per (src,dst,tag)") {
    auto w = sim::spawn_world(2, [](sim::Rank& r) {
        if (r.id() == 0) {
            for (uint8_t i = 0; i < 5; ++i) r.send(1, 7, Bytes{i});
        } else {
            for (uint8_t i = 0; i < 5; ++i) CHECK(r.recv(0, 7) == Bytes{i});
        }
    });
    CHECK(w->run().completed);
}

TEST_CASE("recv from a failed peer raises PeerFailed") {
    bool saw_peer_failed = false;
    auto w = sim::spawn_world(2, [&](sim::Rank& r) {
        if (r.id() == 0) r.self_kill(1);
        else {
            try {
                r.recv(0, 0);
            } catch (const sim::SimError& e) {
                if (e.cls() == sim::ErrorClass::PeerFailed) saw_peer_failed = true;
                throw;
            }
        }
    });
    auto out = w->run();
    CHECK(!out.completed);
    CHECK(saw_peer_failed);
}

TEST_CASE("send after revoke raises Revoked") {
    bool saw_revoked = false;
    auto w = sim::spawn_world(2, [&](sim::Rank& r) {
        if (r.id() == 0) {
            r.revoke();
            try {
                r.send(1, 0, bytes({1}));
            } catch (const sim::SimError& e) {
                saw_revoked = e.cls() == sim::ErrorClass::Revoked;
                return;  // swallow: revoked by design in this scenario
            }
        } else {
            try {
                r.recv(0, 0);
            } catch (const sim::SimError&) {}
        }
    });
    w->run();
    CHECK(saw_revoked);
}

TEST_CASE("revoke interrupts a blocked recv; revoke is idempotent") {
    bool interrupted = false;
    auto w = sim::spawn_world(4, [&](sim::Rank& r) {
        if (r.id() == 3) {
            try {
                r.recv(0, 9);  // never sent
            } catch (const sim::SimError& e) {
                interrupted = e.cls() == sim::ErrorClass::Revoked;
            }
        } else if (r.id() == 1) {
            r.yield();
            r.revoke();
            r.revoke();  // no-op
        }
    });
    w->run();
    CHECK(interrupted);
}

TEST_CASE("allreduce sums rank ids over 4 ranks") {
    auto w = sim::spawn_world(4, [](sim::Rank& r) {
        double s = r.allreduce_sum(static_cast<double>(r.id()));
        CHECK(s == 6.0);
    });
    CHECK(w->run().completed);
}

TEST_CASE("allreduce over 1 rank is identity and charges nothing") {
    auto w = sim::spawn_world(1, [](sim::Rank& r) {
        CHECK(r.allreduce_sum(3.5) == 3.5);
    });
    CHECK(w->run().completed);
    CHECK(w->clock(0).total() == 0.0);
}

TEST_CASE("allreduce with one failed member fails at all survivors") {
    int peer_failed_count = 0;
    auto w = sim::spawn_world(4, [&](sim::Rank& r) {
        if (r.id() == 2) r.self_kill(0);
        try {
            r.allreduce_sum(1.0);
        } catch (const sim::SimError& e) {
            if (e.cls() == sim::ErrorClass::PeerFailed) ++peer_failed_count;
            throw;
        }
    });
    auto out = w->run();
    CHECK(!out.completed);
    CHECK(peer_failed_count == 3);
}

TEST_CASE("agree computes AND at every member") {
    SUBCASE("all true") {
        auto w = sim::spawn_world(4, [](sim::Rank& r) { CHECK(r.agree(true)); });
        CHECK(w->run().completed);
    }
    SUBCASE("one false") {
        auto w = sim::spawn_world(4, [](sim::Rank& r) {
            CHECK_FALSE(r.agree(r.id() != 2));
        });
        CHECK(w->run().completed);
    }
}

TEST_CASE("shrink compacts survivors preserving order") {
    SUBCASE("one failure") {
        auto w = sim::spawn_world(4, [](sim::Rank& r) {
            if (r.id() == 2) r.self_kill(0);
            r.yield();
            auto s = r.shrink();
            auto mem = r.world().comm_members(s);
            CHECK(mem == std::vector<int>{0, 1, 3});
            CHECK(r.world().comm_epoch(s) == 1);
        });
        w->run();
    }
    SUBCASE("no failure: same membership, new epoch") {
        auto w = sim::spawn_world(3, [](sim::Rank& r) {
            auto s = r.shrink();
            CHECK(r.world().comm_members(s) == std::vector<int>{0, 1, 2});
            CHECK(r.world().comm_epoch(s) == 1);
        });
        CHECK(w->run().completed);
    }
    SUBCASE("two failures of 4") {
        auto w = sim::spawn_world(4, [](sim::Rank& r) {
            if (r.id() == 1 || r.id() == 3) r.self_kill(0);
            r.yield();
            auto s = r.shrink();
            CHECK(r.world().comm_members(s) == std::vector<int>{0, 2});
        });
        w->run();
    }
}

TEST_CASE("shrink/spawn/merge restores original positions; install swaps slot") {
    auto w = sim::spawn_world(4, [](sim::Rank& r) {
        if (!r.entry_info().survivor) {
            // Respawned replacement: fills rank 2.
            CHECK(r.id() == 2);
            return;
        }
        if (r.id() == 2 && r.epoch() == 0) r.self_kill(0);
        if (r.epoch() == 0) {
            r.yield();
            auto s = r.shrink();
            r.spawn_replacements(s, 1);
            auto m = r.merge();
            CHECK(r.world().comm_members(m) == std::vector<int>{0, 1, 2, 3});
            CHECK(r.agree_on(m, true));
            r.install(m);
            CHECK(r.epoch() == 1);
            CHECK(r.world().slot() == 1);
        }
    });
    w->run();
    CHECK(w->epoch() == 1);
    CHECK(w->process_state(2) == sim::ProcessState::Respawned);
    CHECK(w->process_state(0) == sim::ProcessState::Alive);
}

TEST_CASE("kill is idempotent and logs one fault event") {
    auto w = sim::spawn_world(4, [](sim::Rank& r) {
        if (r.id() == 0) {
            r.kill(2);
            r.kill(2);
        }
        if (r.id() != 2) r.yield();
    });
    w->run();
    CHECK(w->fault_events().size() == 1);
    CHECK(w->fault_events()[0].rank == 2);
}

TEST_CASE("charge accumulates by category with additivity") {
    auto w = sim::spawn_world(1, [](sim::Rank& r) {
        r.charge(sim::Category::App, 3);
        r.charge(sim::Category::App, 4);
        r.charge(sim::Category::App, 0);
        CHECK_THROWS(r.charge(sim::Category::App, -1));
        r.charge(sim::Category::Recovery, 2);
    });
    CHECK(w->run().completed);
    CHECK(w->clock(0).app == 7.0);
    CHECK(w->clock(0).recovery == 2.0);
    CHECK(w->clock(0).total() == 9.0);
}

TEST_CASE("determinism: identical seeds yield identical event logs") {
    auto make = [] {
        sim::WorldOptions opts;
        opts.seed = 7;
        return sim::spawn_world(4, [](sim::Rank& r) {
            for (int k = 0; k < 3; ++k) {
                if (r.id() > 0) r.send(0, k, Bytes{static_cast<uint8_t>(r.id())});
                else
                    for (int s = 1; s < 4; ++s) r.recv(s, k);
                r.allreduce_sum(r.id() * 1.25);
            }
        }, std::move(opts));
    };
    auto w1 = make();
    auto w2 = make();
    CHECK(w1->run().completed);
    CHECK(w2->run().completed);
    std::ostringstream a, b;
    w1->dump_events(a);
    w2->dump_events(b);
    CHECK(a.str() == b.str());
    CHECK(a.str().find("allreduce") != std::string::npos);
    for (int r = 0; r < 4; ++r) CHECK(w1->clock(r).total() == w2->clock(r).total());
}

TEST_CASE("liveness under failure: blocked collective resolves after kill") {
    // No rank may hang forever: the run terminates (we get here) and the
    // survivors observed an error.
    int errors = 0;
    auto w = sim::spawn_world(4, [&](sim::Rank& r) {
        if (r.id() == 3) {
            r.yield();
            r.self_kill(0);
        }
        try {
            r.barrier();
        } catch (const sim::SimError&) {
            ++errors;
            throw;
        }
    });
    auto out = w->run();
    CHECK(!out.completed);
    CHECK(errors == 3);
}
