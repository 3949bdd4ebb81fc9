// SPDX-License-Identifier: Apache-2.0
//
// Deterministic in-process simulation of a message-passing world.
//
// Logical ranks are OS threads, but exactly one runs at a time: a baton
// (current_) is passed between the scheduler and procs under one mutex,
// so every cross-rank interaction is serialized and every scheduling
// choice that could affect observable results is drawn from the seed.

#include "ftmatch/sim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>
#include <tuple>

namespace ftmatch::sim {

namespace {
constexpr int kScheduler = -1;

int log2_rounds(std::size_t n) {
    int r = 0;
    std::size_t v = 1;
    while (v < n) { v <<= 1; ++r; }
    return r;  // ceil(log2(n)), 0 for n <= 1
}
}  // namespace

// ---------------------------------------------------------------------------

struct World::Proc {
    int idx = 0;
    int rank = -1;  // position in the world (original rank id); -1 until merged
    ProcessState pstate = ProcessState::Alive;
    enum RunState { Parked, Ready, Running, Waiting, Done, Dead };
    RunState rstate = Parked;
    uint64_t wait_version = 0;
    bool kill_pending = false;
    long kill_iter = -1;
    bool discarded = false;   // parked replacement of an abandoned repair round
    bool in_recovery = false; // executing the failure handler
    EntryInfo entry;
    Category category = Category::App;
    std::map<std::pair<uint64_t, int>, int> coll_seq;
    int agree_calls = 0;
    std::thread th;
};

struct World::Comm {
    uint64_t id = 0;
    uint64_t epoch = 0;
    bool revoked = false;
    std::vector<int> members;  // proc indices; position = rank within this comm

    int rank_of(int proc_idx) const {
        for (std::size_t i = 0; i < members.size(); ++i)
            if (members[i] == proc_idx) return static_cast<int>(i);
        return -1;
    }
};

namespace {
enum Kind { kAllreduce = 0, kBarrier, kAllgather, kAgree, kShrink, kSpawn, kMerge, kKindCount };
constexpr const char* kKindName[] = {"allreduce", "barrier",  "allgather", "agree",
                                     "shrink",    "spawn",    "merge"};
}  // namespace

struct World::Site {
    std::map<int, Bytes> contrib;  // keyed by comm rank
    bool complete = false;
    bool poisoned = false;
    Bytes result;
    std::vector<Bytes> gathered;
    uint64_t made_comm = 0;
    std::size_t member_count = 0;  // at completion, for round charging
};

using Proc = World::Proc;
using Comm = World::Comm;
using Site = World::Site;

// ---------------------------------------------------------------------------

struct World::Impl {
    World& self;
    int n;
    Program program;
    WorldOptions opts;

    std::mutex mu;
    std::condition_variable cv;
    int current = kScheduler;
    uint64_t version = 1;
    bool shutdown = false;
    bool started = false;

    std::vector<std::unique_ptr<Proc>> procs;
    std::map<uint64_t, Comm> comms;
    uint64_t next_comm_id = 1;
    std::array<uint64_t, 2> world_slots{0, 0};
    int world_slot = 0;
    uint64_t world_epoch = 0;

    std::map<std::tuple<uint64_t, int, int, int>, std::deque<Bytes>> mail;
    std::map<std::tuple<uint64_t, int, int>, Site> sites;

    std::vector<VirtualClock> clocks;
    std::vector<std::shared_ptr<void>> attachments;
    std::vector<std::optional<Bytes>> results;

    bool aborting = false;
    std::optional<SimError> abort_error;

    // Reinit runtime recovery rendezvous.
    bool recovering = false;
    std::set<int> rendezvous;

    // Pending ULFM replacements between spawn and install.
    std::vector<int> pending_spawn;
    uint64_t pending_shrunk = 0;

    std::vector<FaultEvent> fault_events;
    std::vector<Event> events;
    std::mt19937_64 sched_rng;

    int kill_on_agree_rank = -1;
    int kill_on_agree_nth = 0;

    Impl(World& w, int n_, Program p, WorldOptions o)
        : self(w), n(n_), program(std::move(p)), opts(std::move(o)), sched_rng(opts.seed) {
        clocks.resize(n);
        attachments.resize(n);
        results.resize(n);
        Comm w0;
        w0.id = next_comm_id++;
        w0.epoch = 0;
        for (int r = 0; r < n; ++r) w0.members.push_back(r);
        comms[w0.id] = w0;
        world_slots[0] = w0.id;
        for (int r = 0; r < n; ++r) {
            auto p2 = std::make_unique<Proc>();
            p2->idx = r;
            p2->rank = r;
            p2->rstate = Proc::Ready;
            procs.push_back(std::move(p2));
        }
        for (int r = 0; r < n; ++r)
            procs[r]->th = std::thread([this, r] { proc_main(r); });
    }

    Comm& world_comm_ref() { return comms.at(world_slots[world_slot]); }

    void bump() { ++version; }

    void log(int rank, std::string kind, std::string details) {
        if (!opts.record_events) return;
        double t = (rank >= 0 && rank < n) ? clocks[rank].total() : 0.0;
        events.push_back({t, rank, std::move(kind), std::move(details)});
    }

    void charge(Proc& p, double amount) {
        if (p.rank >= 0) clocks[p.rank].add(p.category, amount);
    }

    // --- baton ---

    // Hand the baton to the scheduler and wait to be scheduled again.
    void suspend(Proc& p, std::unique_lock<std::mutex>& lk, Proc::RunState st) {
        p.rstate = st;
        p.wait_version = version;
        current = kScheduler;
        cv.notify_all();
        cv.wait(lk, [&] { return current == p.idx || shutdown; });
        if (shutdown && current != p.idx) throw SimError(ErrorClass::Aborted, "world shutdown");
        p.rstate = Proc::Running;
    }

    void release_baton(Proc& p) {
        (void)p;
        current = kScheduler;
        cv.notify_all();
    }

    void check_signals(Proc& p) {
        if (shutdown) throw SimError(ErrorClass::Aborted, "world shutdown");
        if (p.kill_pending) {
            p.kill_pending = false;
            throw KilledSignal{p.kill_iter};
        }
        if (aborting)
            throw SimError(ErrorClass::Aborted,
                           abort_error ? abort_error->what() : "world aborted");
        if (recovering && !p.in_recovery)
            throw SimError(ErrorClass::PeerFailed, "runtime recovery in progress");
    }

    void abort_world(const SimError& e) {
        if (!aborting) {
            aborting = true;
            abort_error = e;
            bump();
        }
    }

    // --- failure ---

    void do_kill(Proc& victim, long iteration, bool self) {
        if (victim.pstate == ProcessState::Failed) return;  // idempotent
        victim.pstate = ProcessState::Failed;
        if (!self) {
            victim.kill_pending = true;
            victim.kill_iter = iteration;
        }
        fault_events.push_back({victim.rank, iteration,
                                victim.rank >= 0 ? clocks[victim.rank].total() : 0.0});
        log(victim.rank, "kill", "iteration=" + std::to_string(iteration));
        bump();
    }

    // --- collectives ---

    bool is_normal_kind(int kind) const {
        return kind == kAllreduce || kind == kBarrier || kind == kAllgather;
    }

    void try_finalize(const Comm& c, int kind, Site& s, const Reducer* red) {
        if (s.complete || s.poisoned) return;
        std::vector<int> expected;  // comm ranks
        for (std::size_t i = 0; i < c.members.size(); ++i) {
            Proc& q = *procs[c.members[i]];
            if (kind == kShrink) {
                if (q.pstate != ProcessState::Failed &&
                    q.rstate != Proc::Done && q.rstate != Proc::Dead)
                    expected.push_back(static_cast<int>(i));
            } else {
                if (q.pstate == ProcessState::Failed || q.rstate == Proc::Dead) {
                    s.poisoned = true;
                    bump();
                    return;
                }
                if (q.rstate == Proc::Parked) continue;  // pre-install replacement
                expected.push_back(static_cast<int>(i));
            }
        }
        for (int e : expected)
            if (!s.contrib.count(e)) return;
        // Finalize.
        s.member_count = expected.size();
        switch (kind) {
            case kAllreduce: {
                bool first = true;
                Bytes acc;
                for (int e : expected) {
                    if (first) { acc = s.contrib[e]; first = false; }
                    else acc = (*red)(acc, s.contrib[e]);
                }
                s.result = std::move(acc);
                break;
            }
            case kBarrier:
                break;
            case kAllgather:
                for (int e : expected) s.gathered.push_back(s.contrib[e]);
                break;
            case kAgree: {
                uint8_t v = 1;
                for (int e : expected) v &= (s.contrib[e].empty() ? 0 : s.contrib[e][0]);
                s.result = {v};
                break;
            }
            case kShrink: {
                Comm nc;
                nc.id = next_comm_id++;
                nc.epoch = world_epoch + 1;
                for (int e : expected) nc.members.push_back(c.members[e]);
                comms[nc.id] = nc;
                s.made_comm = nc.id;
                break;
            }
            case kSpawn: {
                int k = 0;
                std::memcpy(&k, s.contrib[expected[0]].data(), sizeof(int));
                // Abandon replacements from a failed earlier round.
                for (int idx : pending_spawn) {
                    procs[idx]->discarded = true;
                }
                pending_spawn.clear();
                for (int j = 0; j < k; ++j) {
                    auto np = std::make_unique<Proc>();
                    np->idx = static_cast<int>(procs.size());
                    np->rank = -1;
                    np->pstate = ProcessState::Respawned;
                    np->rstate = Proc::Parked;
                    np->entry = {false, ReinitState::RestartedRespawn};
                    int nidx = np->idx;
                    procs.push_back(std::move(np));
                    procs[nidx]->th = std::thread([this, nidx] { proc_main(nidx); });
                    pending_spawn.push_back(nidx);
                }
                pending_shrunk = c.id;
                break;
            }
            case kMerge: {
                // Survivors keep their original positions; replacements
                // fill the vacancies in ascending rank order.
                std::vector<int> merged(n, -1);
                for (int m : c.members) merged[procs[m]->rank] = m;
                std::size_t next_spawn = 0;
                for (int r = 0; r < n; ++r) {
                    if (merged[r] == -1) {
                        assert(next_spawn < pending_spawn.size());
                        merged[r] = pending_spawn[next_spawn++];
                        procs[merged[r]]->rank = r;
                    }
                }
                Comm nc;
                nc.id = next_comm_id++;
                nc.epoch = world_epoch + 1;
                nc.members = std::move(merged);
                comms[nc.id] = nc;
                s.made_comm = nc.id;
                break;
            }
        }
        s.complete = true;
        bump();
        cv.notify_all();
    }

    // Generic collective entry. Pins the communicator at entry; never
    // completes across an epoch change.
    Site& collective(Proc& p, std::unique_lock<std::mutex>& lk, uint64_t comm_id, int kind,
                     Bytes contrib, const Reducer* red) {
        if (shutdown) throw SimError(ErrorClass::Aborted, "world shutdown");
        if (p.kill_pending) {
            p.kill_pending = false;
            throw KilledSignal{p.kill_iter};
        }
        Comm& c = comms.at(comm_id);
        int myrank = c.rank_of(p.idx);
        if (myrank < 0) throw SimError(ErrorClass::Other, "not a member of communicator");
        if (is_normal_kind(kind)) {
            if (c.revoked) throw SimError(ErrorClass::Revoked, "communicator revoked");
            // Failure of any member outranks a pending world abort: the
            // caller is entitled to see the per-operation error class.
            for (int m : c.members)
                if (procs[m]->pstate == ProcessState::Failed)
                    throw SimError(ErrorClass::PeerFailed, "collective member failed");
        }
        check_signals(p);
        if (kind == kAgree && p.rank == kill_on_agree_rank) {
            if (++p.agree_calls == kill_on_agree_nth) {
                do_kill(p, -1, true);
                throw KilledSignal{-1};
            }
        }
        int seq = p.coll_seq[{comm_id, kind}]++;
        Site& s = sites[{comm_id, kind, seq}];
        s.contrib[myrank] = std::move(contrib);
        bump();
        log(p.rank, kKindName[kind], "comm=" + std::to_string(comm_id) +
                                         " seq=" + std::to_string(seq));
        for (;;) {
            try_finalize(c, kind, s, red);
            if (s.poisoned) throw SimError(ErrorClass::PeerFailed, "collective member failed");
            if (s.complete) {
                charge(p, opts.cost.collective_round_cost * log2_rounds(s.member_count));
                return s;
            }
            if (is_normal_kind(kind) && c.revoked)
                throw SimError(ErrorClass::Revoked, "communicator revoked");
            check_signals(p);
            suspend(p, lk, Proc::Waiting);
        }
    }

    // --- reinit runtime recovery ---

    void finalize_reinit() {
        const Comm& cur = world_comm_ref();
        std::vector<int> members = cur.members;
        for (int r = 0; r < n; ++r) {
            Proc& q = *procs[members[r]];
            if (q.pstate == ProcessState::Failed || q.rstate == Proc::Dead) {
                auto np = std::make_unique<Proc>();
                np->idx = static_cast<int>(procs.size());
                np->rank = r;
                np->pstate = ProcessState::Respawned;
                np->rstate = Proc::Ready;
                np->entry = {false, ReinitState::RestartedRespawn};
                int nidx = np->idx;
                members[r] = nidx;
                procs.push_back(std::move(np));
                procs[nidx]->th = std::thread([this, nidx] { proc_main(nidx); });
            } else {
                q.entry = {true, ReinitState::RestartedSurvivor};
            }
        }
        Comm nc;
        nc.id = next_comm_id++;
        nc.epoch = world_epoch + 1;
        nc.members = std::move(members);
        comms[nc.id] = nc;
        world_slots[world_slot] = nc.id;
        world_epoch = nc.epoch;
        recovering = false;
        rendezvous.clear();
        log(-1, "reinit", "epoch=" + std::to_string(world_epoch));
        bump();
    }

    void reinit_restart(Proc& p, std::unique_lock<std::mutex>& lk) {
        if (!recovering) {
            recovering = true;
            rendezvous.clear();
            bump();
        }
        const uint64_t my_round_epoch = world_epoch;
        rendezvous.insert(p.idx);
        bump();
        for (;;) {
            if (world_epoch != my_round_epoch || !recovering) return;  // finalized
            bool all_in = true;
            for (int m : world_comm_ref().members) {
                Proc& q = *procs[m];
                if (q.pstate == ProcessState::Failed) continue;
                if (q.rstate == Proc::Done || q.rstate == Proc::Dead) continue;
                if (!rendezvous.count(q.idx)) { all_in = false; break; }
            }
            if (all_in) {
                finalize_reinit();
                return;
            }
            if (shutdown) throw SimError(ErrorClass::Aborted, "world shutdown");
            if (p.kill_pending) {
                p.kill_pending = false;
                throw KilledSignal{p.kill_iter};
            }
            suspend(p, lk, Proc::Waiting);
        }
    }

    // --- proc lifecycle ---

    void proc_main(int idx) {
        std::unique_lock<std::mutex> lk(mu);
        Proc& p = *procs[idx];
        cv.wait(lk, [&] { return current == idx || shutdown || p.discarded; });
        if (shutdown || p.discarded) {
            p.rstate = Proc::Dead;
            if (current == idx) release_baton(p);
            return;
        }
        p.rstate = Proc::Running;
        Rank ctx(self, idx);
        bool again = true;
        while (again) {
            again = false;
            lk.unlock();
            try {
                program(ctx);
                lk.lock();
                p.rstate = Proc::Done;
                log(p.rank, "done", "");
            } catch (KilledSignal&) {
                lk.lock();
                p.rstate = Proc::Dead;
            } catch (UnwindSignal&) {
                lk.lock();
                p.entry = {true, ReinitState::RestartedSurvivor};
                again = true;
            } catch (SimError& e) {
                bool handled = false;
                if (opts.handler && is_failure_class(e.cls())) {
                    {
                        std::lock_guard<std::mutex> g(mu);
                        p.in_recovery = true;
                    }
                    try {
                        handled = opts.handler->on_failure(ctx, e);
                    } catch (KilledSignal&) {
                        lk.lock();
                        p.in_recovery = false;
                        p.rstate = Proc::Dead;
                        bump();
                        release_baton(p);
                        return;
                    } catch (UnwindSignal&) {
                        handled = true;
                    } catch (SimError& e2) {
                        lk.lock();
                        p.in_recovery = false;
                        if (e2.cls() != ErrorClass::Aborted) abort_world(e2);
                        p.rstate = Proc::Dead;
                        bump();
                        release_baton(p);
                        return;
                    }
                    {
                        std::lock_guard<std::mutex> g(mu);
                        p.in_recovery = false;
                    }
                }
                lk.lock();
                if (handled) {
                    p.entry = {true, ReinitState::RestartedSurvivor};
                    again = true;
                } else {
                    if (e.cls() != ErrorClass::Aborted) abort_world(e);
                    p.rstate = Proc::Dead;
                }
            } catch (...) {
                lk.lock();
                abort_world(SimError(ErrorClass::Other, "uncaught exception in program"));
                p.rstate = Proc::Dead;
            }
        }
        bump();
        release_baton(p);
    }

    // --- scheduler ---

    World::Outcome drive() {
        std::unique_lock<std::mutex> lk(mu);
        for (;;) {
            std::vector<int> cand;
            bool any_pending = false;
            for (auto& up : procs) {
                Proc& p = *up;
                if (p.rstate == Proc::Ready) cand.push_back(p.idx);
                else if (p.rstate == Proc::Waiting) {
                    any_pending = true;
                    if (p.wait_version < version) cand.push_back(p.idx);
                }
            }
            if (cand.empty()) {
                if (!any_pending) break;  // everyone Done/Dead/Parked
                // All waiters have seen the latest state: nothing can
                // change it, so this is a genuine deadlock.
                abort_world(SimError(ErrorClass::Deadlock, "simulation deadlock"));
                continue;
            }
            int pick = cand[sched_rng() % cand.size()];
            current = pick;
            cv.notify_all();
            cv.wait(lk, [&] { return current == kScheduler; });
        }
        World::Outcome out;
        out.completed = !aborting;
        if (aborting) out.error = abort_error;
        if (out.completed) {
            // A killed rank without repair means the run did not complete.
            const Comm& c = world_comm_ref();
            for (int m : c.members)
                if (procs[m]->rstate != Proc::Done) out.completed = false;
        }
        return out;
    }

    void stop_threads() {
        {
            std::lock_guard<std::mutex> g(mu);
            shutdown = true;
            bump();
            cv.notify_all();
        }
        // Threads blocked in suspend() exit on the shutdown flag; keep
        // notifying until all are joinable.
        for (auto& up : procs)
            if (up->th.joinable()) up->th.join();
    }
};

// ---------------------------------------------------------------------------
// World

World::World(int n, Program program, WorldOptions opts) : n_(n) {
    if (n < 1) throw std::invalid_argument("World: n must be >= 1");
    impl_ = std::make_unique<Impl>(*this, n, std::move(program), std::move(opts));
}

World::~World() {
    if (impl_) impl_->stop_threads();
}

World::Outcome World::run() {
    {
        std::lock_guard<std::mutex> g(impl_->mu);
        if (impl_->started) throw std::logic_error("World::run called twice");
        impl_->started = true;
    }
    Outcome out = impl_->drive();
    impl_->stop_threads();
    return out;
}

uint64_t World::epoch() const {
    std::lock_guard<std::mutex> g(impl_->mu);
    return impl_->world_epoch;
}

int World::slot() const {
    std::lock_guard<std::mutex> g(impl_->mu);
    return impl_->world_slot;
}

ProcessState World::process_state(int rank) const {
    std::lock_guard<std::mutex> g(impl_->mu);
    const auto& c = impl_->comms.at(impl_->world_slots[impl_->world_slot]);
    return impl_->procs[c.members.at(rank)]->pstate;
}

const VirtualClock& World::clock(int rank) const { return impl_->clocks.at(rank); }

const std::vector<FaultEvent>& World::fault_events() const { return impl_->fault_events; }

const std::vector<Event>& World::events() const { return impl_->events; }

void World::dump_events(std::ostream& os) const {
    for (const auto& e : impl_->events)
        os << e.virtual_time << ' ' << e.rank << ' ' << e.kind << ' ' << e.details << '\n';
}

const Bytes* World::result(int rank) const {
    const auto& r = impl_->results.at(rank);
    return r ? &*r : nullptr;
}

std::vector<int> World::comm_members(CommHandle c) const {
    std::lock_guard<std::mutex> g(impl_->mu);
    std::vector<int> out;
    for (int m : impl_->comms.at(c.id).members) out.push_back(impl_->procs[m]->rank);
    return out;
}

uint64_t World::comm_epoch(CommHandle c) const {
    std::lock_guard<std::mutex> g(impl_->mu);
    return impl_->comms.at(c.id).epoch;
}

bool World::comm_revoked(CommHandle c) const {
    std::lock_guard<std::mutex> g(impl_->mu);
    return impl_->comms.at(c.id).revoked;
}

CommHandle World::world_comm() const {
    std::lock_guard<std::mutex> g(impl_->mu);
    return {impl_->world_slots[impl_->world_slot]};
}

void World::set_kill_on_agree(int rank, int nth) {
    std::lock_guard<std::mutex> g(impl_->mu);
    impl_->kill_on_agree_rank = rank;
    impl_->kill_on_agree_nth = nth;
}

// ---------------------------------------------------------------------------
// Rank

namespace {
Bytes pack_double(double v) {
    Bytes b(sizeof(double));
    std::memcpy(b.data(), &v, sizeof(double));
    return b;
}
double unpack_double(const Bytes& b) {
    double v = 0;
    std::memcpy(&v, b.data(), sizeof(double));
    return v;
}
}  // namespace

int Rank::id() const { return w_.impl_->procs[proc_]->rank; }

int Rank::world_size() const { return w_.impl_->n; }

uint64_t Rank::epoch() const {
    std::lock_guard<std::mutex> g(w_.impl_->mu);
    return w_.impl_->world_epoch;
}

const EntryInfo& Rank::entry_info() const { return w_.impl_->procs[proc_]->entry; }

const CostModel& Rank::cost() const { return w_.impl_->opts.cost; }

void Rank::send(int dst, int tag, std::span<const uint8_t> payload) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    im.check_signals(p);
    Comm& c = im.world_comm_ref();
    int me = c.rank_of(p.idx);
    if (me < 0) throw SimError(ErrorClass::Other, "send: not a member");
    if (dst < 0 || dst >= static_cast<int>(c.members.size()))
        throw SimError(ErrorClass::Other, "send: destination out of range");
    if (c.revoked) throw SimError(ErrorClass::Revoked, "send on revoked communicator");
    Proc& d = *im.procs[c.members[dst]];
    if (d.pstate == ProcessState::Failed)
        throw SimError(ErrorClass::PeerFailed, "send: peer failed");
    im.mail[{c.id, me, dst, tag}].emplace_back(payload.begin(), payload.end());
    im.charge(p, im.opts.cost.msg_latency + im.opts.cost.msg_per_byte * payload.size());
    im.log(p.rank, "send", "dst=" + std::to_string(dst) + " tag=" + std::to_string(tag) +
                               " len=" + std::to_string(payload.size()));
    im.bump();
    im.suspend(p, lk, Proc::Ready);
}

Bytes Rank::recv(int src, int tag) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    im.check_signals(p);
    Comm& c = im.world_comm_ref();  // pinned for the whole operation
    const uint64_t cid = c.id;
    int me = c.rank_of(p.idx);
    if (me < 0) throw SimError(ErrorClass::Other, "recv: not a member");
    if (src < 0 || src >= static_cast<int>(c.members.size()))
        throw SimError(ErrorClass::Other, "recv: source out of range");
    for (;;) {
        Comm& cc = im.comms.at(cid);
        if (cc.revoked) throw SimError(ErrorClass::Revoked, "recv on revoked communicator");
        auto it = im.mail.find({cid, src, me, tag});
        if (it != im.mail.end() && !it->second.empty()) {
            Bytes b = std::move(it->second.front());
            it->second.pop_front();
            im.charge(p, im.opts.cost.msg_latency + im.opts.cost.msg_per_byte * b.size());
            im.log(p.rank, "recv", "src=" + std::to_string(src) +
                                       " tag=" + std::to_string(tag) +
                                       " len=" + std::to_string(b.size()));
            im.bump();
            return b;
        }
        Proc& s = *im.procs[cc.members[src]];
        if (s.pstate == ProcessState::Failed)
            throw SimError(ErrorClass::PeerFailed, "recv: peer failed");
        im.check_signals(p);
        im.suspend(p, lk, Proc::Waiting);
    }
}

void Rank::barrier() {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    im.collective(p, lk, im.world_slots[im.world_slot], kBarrier, {}, nullptr);
}

Bytes Rank::allreduce(std::span<const uint8_t> contrib, const Reducer& op) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    Site& s = im.collective(p, lk, im.world_slots[im.world_slot], kAllreduce,
                            Bytes(contrib.begin(), contrib.end()), &op);
    return s.result;
}

double Rank::allreduce_sum(double v) {
    static const Reducer sum = [](const Bytes& a, const Bytes& b) {
        return pack_double(unpack_double(a) + unpack_double(b));
    };
    return unpack_double(allreduce(pack_double(v), sum));
}

std::vector<Bytes> Rank::allgather(std::span<const uint8_t> contrib) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    Site& s = im.collective(p, lk, im.world_slots[im.world_slot], kAllgather,
                            Bytes(contrib.begin(), contrib.end()), nullptr);
    return s.gathered;
}

std::vector<double> Rank::allgather_doubles(std::span<const double> contrib) {
    auto parts = allgather(std::span<const uint8_t>(
        reinterpret_cast<const uint8_t*>(contrib.data()), contrib.size() * sizeof(double)));
    std::vector<double> out;
    for (const auto& b : parts) {
        std::size_t k = b.size() / sizeof(double);
        std::size_t off = out.size();
        out.resize(off + k);
        std::memcpy(out.data() + off, b.data(), b.size());
    }
    return out;
}

bool Rank::agree(bool flag) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    Site& s = im.collective(p, lk, im.world_slots[im.world_slot], kAgree,
                            Bytes{static_cast<uint8_t>(flag ? 1 : 0)}, nullptr);
    return s.result[0] != 0;
}

void Rank::charge(Category c, double amount) {
    if (amount < 0) throw std::invalid_argument("charge: negative amount");
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    Proc& p = *im.procs[proc_];
    if (p.rank >= 0) im.clocks[p.rank].add(c, amount);
}

void Rank::charge(double amount) {
    charge(w_.impl_->procs[proc_]->category, amount);
}

Category Rank::category() const { return w_.impl_->procs[proc_]->category; }

Rank::CategoryScope::CategoryScope(Rank& r, Category c) : r_(r) {
    auto& p = *r.w_.impl_->procs[r.proc_];
    prev_ = p.category;
    p.category = c;
}

Rank::CategoryScope::~CategoryScope() { r_.w_.impl_->procs[r_.proc_]->category = prev_; }

void Rank::self_kill(long iteration) {
    auto& im = *w_.impl_;
    {
        std::lock_guard<std::mutex> g(im.mu);
        Proc& p = *im.procs[proc_];
        im.do_kill(p, iteration, true);
    }
    throw KilledSignal{iteration};
}

void Rank::kill(int rank) {
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    const Comm& c = im.world_comm_ref();
    if (rank < 0 || rank >= static_cast<int>(c.members.size()))
        throw std::invalid_argument("kill: rank out of range");
    im.do_kill(*im.procs[c.members[rank]], -1, false);
}

void Rank::log_event(std::string kind, std::string details) {
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    im.log(im.procs[proc_]->rank, std::move(kind), std::move(details));
}

void Rank::yield() {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    im.check_signals(p);
    im.suspend(p, lk, Proc::Ready);
}

void Rank::revoke() {
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    Comm& c = im.world_comm_ref();
    if (c.revoked) return;  // idempotent
    c.revoked = true;
    im.log(im.procs[proc_]->rank, "revoke", "comm=" + std::to_string(c.id));
    im.bump();
    im.cv.notify_all();
}

CommHandle Rank::shrink() {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    Site& s = im.collective(p, lk, im.world_slots[im.world_slot], kShrink, {}, nullptr);
    return {s.made_comm};
}

void Rank::spawn_replacements(CommHandle shrunk, int k) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    Bytes b(sizeof(int));
    std::memcpy(b.data(), &k, sizeof(int));
    im.collective(p, lk, shrunk.id, kSpawn, std::move(b), nullptr);
}

CommHandle Rank::merge() {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    if (im.pending_shrunk == 0)
        throw SimError(ErrorClass::Other, "merge: no pending replacements");
    Site& s = im.collective(p, lk, im.pending_shrunk, kMerge, {}, nullptr);
    return {s.made_comm};
}

bool Rank::agree_on(CommHandle c, bool flag) {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    Site& s = im.collective(p, lk, c.id, kAgree, Bytes{static_cast<uint8_t>(flag ? 1 : 0)},
                            nullptr);
    return s.result[0] != 0;
}

void Rank::install(CommHandle c) {
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    const Comm& m = im.comms.at(c.id);
    if (im.world_epoch >= m.epoch) return;  // already installed this repair
    im.world_slot ^= 1;
    im.world_slots[im.world_slot] = c.id;
    im.world_epoch = m.epoch;
    for (int idx : m.members) {
        Proc& q = *im.procs[idx];
        if (q.rstate == Proc::Parked && !q.discarded) q.rstate = Proc::Ready;
    }
    im.pending_spawn.clear();
    im.pending_shrunk = 0;
    im.log(im.procs[proc_]->rank, "install",
           "epoch=" + std::to_string(im.world_epoch) + " slot=" + std::to_string(im.world_slot));
    im.bump();
    im.cv.notify_all();
}

void Rank::reinit_restart() {
    auto& im = *w_.impl_;
    std::unique_lock<std::mutex> lk(im.mu);
    Proc& p = *im.procs[proc_];
    im.reinit_restart(p, lk);
}

void Rank::set_result(Bytes b) {
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    Proc& p = *im.procs[proc_];
    if (p.rank >= 0) im.results[p.rank] = std::move(b);
}

std::shared_ptr<void>& Rank::attachment() {
    auto& im = *w_.impl_;
    std::lock_guard<std::mutex> g(im.mu);
    return im.attachments.at(im.procs[proc_]->rank);
}

}  // namespace ftmatch::sim
