// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "ftmatch/checkpoint.hpp"
#include "ftmatch/recovery.hpp"

using namespace ftmatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("ftmatch_rec_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// A resilient iterative program: init, status/recover, main loop with
// periodic checkpoints. Kills `kill_rank` at iteration `kill_iter` once
// (tracked via the shared fired flag, which outlives world incarnations).
struct MiniApp {
    ckpt::Config cfg;
    long iters = 35;
    long interval = 10;
    int kill_rank = -1;
    long kill_iter = -1;
    std::shared_ptr<bool> fired = std::make_shared<bool>(false);

    // Observation channels for assertions.
    std::shared_ptr<std::vector<sim::ReinitState>> entries =
        std::make_shared<std::vector<sim::ReinitState>>();
    std::shared_ptr<std::vector<long>> recovered_iters =
        std::make_shared<std::vector<long>>();

    sim::Program program() {
        auto cfg = this->cfg;
        auto iters = this->iters;
        auto interval = this->interval;
        auto kill_rank = this->kill_rank;
        auto kill_iter = this->kill_iter;
        auto fired = this->fired;
        auto entries = this->entries;
        auto recovered = this->recovered_iters;
        return [=](sim::Rank& r) {
            entries->push_back(r.entry_info().reinit_state);
            double acc = 0;
            long k = 0;
            auto& ctx = ckpt::Context::attach(r, cfg);
            ctx.protect(0, "acc", &acc, sizeof acc);
            ctx.protect(1, "k", &k, sizeof k);
            if (ctx.status(r).restart) recovered->push_back(ctx.recover(r));
            while (k < iters) {
                ++k;
                if (r.id() == kill_rank && k == kill_iter && !*fired) {
                    *fired = true;
                    r.self_kill(k);
                }
                acc += r.allreduce_sum(static_cast<double>(r.id() + 1) / k);
                if (k % interval == 0) ctx.checkpoint(r, k);
            }
            sim::Bytes out(sizeof acc);
            std::memcpy(out.data(), &acc, sizeof acc);
            r.set_result(std::move(out));
        };
    }
};

double result_of(const rec::RunResult& res, int rank) {
    REQUIRE(res.results[rank].has_value());
    double v;
    REQUIRE(res.results[rank]->size() == sizeof v);
    std::memcpy(&v, res.results[rank]->data(), sizeof v);
    return v;
}

}  // namespace

TEST_CASE("policy names round trip; unknown rejected") {
    for (auto p : {rec::Policy::None, rec::Policy::Restart, rec::Policy::Ulfm,
                   rec::Policy::Reinit})
        CHECK(rec::parse_policy(rec::policy_name(p)) == p);
    CHECK_THROWS(rec::parse_policy("lanes"));
}

TEST_CASE("no failure: every policy matches the none-policy result exactly") {
    TempDir base;
    auto run = [&](rec::Policy p) {
        MiniApp app;
        app.cfg = {base.path / rec::policy_name(p), ckpt::Level::L1, 4};
        return rec::run_with_policy(4, p, app.program());
    };
    auto none = run(rec::Policy::None);
    REQUIRE(none.completed);
    for (auto p : {rec::Policy::Restart, rec::Policy::Ulfm, rec::Policy::Reinit}) {
        auto res = run(p);
        REQUIRE(res.completed);
        CHECK(res.incarnations == 1);
        for (int q = 0; q < 4; ++q) {
            CHECK(result_of(res, q) == result_of(none, q));
            CHECK(res.clocks[q].recovery == 0.0);
        }
    }
}

TEST_CASE("single failure: all three policies reproduce the failure-free answer") {
    TempDir base;
    auto clean = [&] {
        MiniApp app;
        app.cfg = {base.path / "clean", ckpt::Level::L1, 4};
        return rec::run_with_policy(4, rec::Policy::None, app.program());
    }();
    REQUIRE(clean.completed);

    for (auto p : {rec::Policy::Restart, rec::Policy::Ulfm, rec::Policy::Reinit}) {
        CAPTURE(rec::policy_name(p));
        MiniApp app;
        app.cfg = {base.path / rec::policy_name(p), ckpt::Level::L1, 4};
        app.kill_rank = 1;
        app.kill_iter = 17;
        auto res = rec::run_with_policy(4, p, app.program());
        REQUIRE(res.completed);
        REQUIRE(res.fault_events.size() == 1);
        CHECK(res.fault_events[0].rank == 1);
        // Rollback lands on the last checkpoint before the failure.
        REQUIRE(!app.recovered_iters->empty());
        for (long k : *app.recovered_iters) CHECK(k == 10);
        for (int q = 0; q < 4; ++q) {
            CHECK(result_of(res, q) == result_of(clean, q));
            // The killed rank's replacement never runs the failure handler
            // itself, so only survivors accrue recovery time here.
            if (q != 1) CHECK(res.clocks[q].recovery > 0.0);
        }
    }
}

TEST_CASE("repair re-entry states: survivors vs respawn") {
    TempDir base;
    for (auto p : {rec::Policy::Ulfm, rec::Policy::Reinit}) {
        CAPTURE(rec::policy_name(p));
        MiniApp app;
        app.cfg = {base.path / rec::policy_name(p), ckpt::Level::L1, 4};
        app.kill_rank = 0;
        app.kill_iter = 12;
        auto res = rec::run_with_policy(4, p, app.program());
        REQUIRE(res.completed);
        CHECK(res.incarnations == 1);
        int fresh = 0, survivors = 0, respawns = 0;
        for (auto s : *app.entries) switch (s) {
            case sim::ReinitState::New: ++fresh; break;
            case sim::ReinitState::RestartedSurvivor: ++survivors; break;
            case sim::ReinitState::RestartedRespawn: ++respawns; break;
        }
        CHECK(fresh == 4);
        CHECK(survivors == 3);
        CHECK(respawns == 1);
    }
}

TEST_CASE("restart policy tears the world down and pays the redeploy bill") {
    TempDir base;
    MiniApp app;
    app.cfg = {base.path, ckpt::Level::L1, 4};
    app.kill_rank = 2;
    app.kill_iter = 17;
    auto res = rec::run_with_policy(4, rec::Policy::Restart, app.program());
    REQUIRE(res.completed);
    CHECK(res.incarnations == 2);
    // Second incarnation enters fresh (New), having never seen a handler.
    for (auto s : *app.entries) CHECK(s == sim::ReinitState::New);
    sim::CostModel cm;
    for (int q = 0; q < 4; ++q)
        CHECK(res.clocks[q].recovery == cm.redeploy_per_rank * 4);
}

TEST_CASE("failure before the first checkpoint restarts from scratch") {
    TempDir base;
    MiniApp app;
    app.cfg = {base.path, ckpt::Level::L1, 4};
    app.iters = 20;
    app.kill_rank = 0;
    app.kill_iter = 5;
    auto res = rec::run_with_policy(4, rec::Policy::Restart, app.program());
    REQUIRE(res.completed);
    CHECK(app.recovered_iters->empty());  // fresh start, nothing recovered
    MiniApp clean;
    clean.cfg = {base.path / "clean", ckpt::Level::L1, 4};
    clean.iters = 20;
    auto cres = rec::run_with_policy(4, rec::Policy::None, clean.program());
    for (int q = 0; q < 4; ++q) CHECK(result_of(res, q) == result_of(cres, q));
}

TEST_CASE("double failure during the agree step: repair retries until success") {
    TempDir base;
    MiniApp app;
    app.cfg = {base.path, ckpt::Level::L1, 4};
    app.kill_rank = 1;
    app.kill_iter = 17;
    sim::WorldOptions opts;
    opts.handler = std::make_shared<rec::UlfmHandler>();
    auto w = sim::spawn_world(4, app.program(), opts);
    w->set_kill_on_agree(3, 1);  // rank 3 dies inside its first agree call
    auto out = w->run();
    CHECK(out.completed);
    CHECK(w->fault_events().size() == 2);
    CHECK(w->epoch() >= 1);
    double expect = -1;
    {
        MiniApp clean;
        clean.cfg = {base.path / "clean", ckpt::Level::L1, 4};
        auto cres = rec::run_with_policy(4, rec::Policy::None, clean.program());
        expect = result_of(cres, 0);
    }
    double got;
    REQUIRE(w->result(0) != nullptr);
    std::memcpy(&got, w->result(0)->data(), sizeof got);
    CHECK(got == expect);
}

TEST_CASE("two sequential failures under rollback: recovered iteration advances") {
    TempDir base;
    auto recovered = std::make_shared<std::vector<long>>();
    auto firedA = std::make_shared<bool>(false);
    auto firedB = std::make_shared<bool>(false);
    ckpt::Config cfg{base.path / "both", ckpt::Level::L1, 4};
    sim::Program both = [=](sim::Rank& r) {
        double acc = 0;
        long k = 0;
        auto& ctx = ckpt::Context::attach(r, cfg);
        ctx.protect(0, "acc", &acc, sizeof acc);
        ctx.protect(1, "k", &k, sizeof k);
        if (ctx.status(r).restart) recovered->push_back(ctx.recover(r));
        while (k < 40) {
            ++k;
            if (r.id() == 2 && k == 13 && !*firedA) { *firedA = true; r.self_kill(k); }
            if (r.id() == 3 && k == 27 && !*firedB) { *firedB = true; r.self_kill(k); }
            acc += r.allreduce_sum(static_cast<double>(r.id() + 1) / k);
            if (k % 10 == 0) ctx.checkpoint(r, k);
        }
    };
    auto res = rec::run_with_policy(4, rec::Policy::Reinit, both);
    REQUIRE(res.completed);
    CHECK(res.fault_events.size() == 2);
    // First rollback recovers iteration 10, second recovers 20: monotone.
    std::set<long> seen(recovered->begin(), recovered->end());
    CHECK(seen == std::set<long>{10, 20});
}

TEST_CASE("recovery cost ordering: restart > repair > rollback") {
    TempDir base;
    auto recovery_cost = [&](rec::Policy p) {
        MiniApp app;
        app.cfg = {base.path / rec::policy_name(p), ckpt::Level::L1, 4};
        app.kill_rank = 1;
        app.kill_iter = 17;
        auto res = rec::run_with_policy(4, p, app.program());
        REQUIRE(res.completed);
        double worst = 0;
        for (auto& c : res.clocks) worst = std::max(worst, c.recovery);
        return worst;
    };
    double restart = recovery_cost(rec::Policy::Restart);
    double ulfm = recovery_cost(rec::Policy::Ulfm);
    double reinit = recovery_cost(rec::Policy::Reinit);
    CHECK(restart > ulfm);
    CHECK(ulfm > reinit);
}

TEST_CASE("rollback recovery rounds are scale-independent; repair grows with n") {
    TempDir base;
    auto recovery_cost = [&](rec::Policy p, int n) {
        MiniApp app;
        app.cfg = {base.path / (std::string(rec::policy_name(p)) + std::to_string(n)),
                   ckpt::Level::L1, 4};
        app.kill_rank = 1;
        app.kill_iter = 17;
        auto res = rec::run_with_policy(n, p, app.program());
        REQUIRE(res.completed);
        double worst = 0;
        for (auto& c : res.clocks) worst = std::max(worst, c.recovery);
        return worst;
    };
    sim::CostModel cm;
    double prev_ulfm = 0;
    for (int n : {4, 8, 16, 32}) {
        double reinit = recovery_cost(rec::Policy::Reinit, n);
        CHECK(reinit == cm.collective_round_cost * rec::ReinitHandler::kRecoveryRounds);
        double ulfm = recovery_cost(rec::Policy::Ulfm, n);
        CHECK(ulfm > prev_ulfm);
        prev_ulfm = ulfm;
    }
}

TEST_CASE("non-failure error classes abort instead of repairing") {
    sim::WorldOptions opts;
    opts.handler = std::make_shared<rec::UlfmHandler>();
    auto w = sim::spawn_world(2, [](sim::Rank& r) {
        if (r.id() == 0) throw sim::SimError(sim::ErrorClass::Unrecoverable, "scripted");
        r.barrier();
    }, std::move(opts));
    auto out = w->run();
    CHECK_FALSE(out.completed);
}
