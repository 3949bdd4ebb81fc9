// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace ftmatch::sim {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorClass { PeerFailed, Revoked, Unrecoverable, Aborted, Deadlock, Other };

class SimError : public std::exception {
  public:
    SimError(ErrorClass cls, std::string what) : cls_(cls), what_(std::move(what)) {}
    ErrorClass cls() const { return cls_; }
    const char* what() const noexcept override { return what_.c_str(); }

  private:
    ErrorClass cls_;
    std::string what_;
};

inline bool is_failure_class(ErrorClass c) {
    return c == ErrorClass::PeerFailed || c == ErrorClass::Revoked;
}

// Thrown inside a logical process when it is killed. Not a SimError: it
// terminates the process rather than reporting an error to it.
struct KilledSignal {
    long iteration;
};

// Thrown to unwind a logical process back to its entry function after a
// completed repair.
struct UnwindSignal {};

// ---------------------------------------------------------------------------
// Cost accounting

enum class Category { App, CkptWrite, CkptRead, Recovery };

struct VirtualClock {
    double app = 0, ckpt_write = 0, ckpt_read = 0, recovery = 0;

    double total() const { return app + ckpt_write + ckpt_read + recovery; }
    void add(Category c, double amount) {
        switch (c) {
            case Category::App: app += amount; break;
            case Category::CkptWrite: ckpt_write += amount; break;
            case Category::CkptRead: ckpt_read += amount; break;
            case Category::Recovery: recovery += amount; break;
        }
    }
    VirtualClock& operator+=(const VirtualClock& o) {
        app += o.app;
        ckpt_write += o.ckpt_write;
        ckpt_read += o.ckpt_read;
        recovery += o.recovery;
        return *this;
    }
};

struct CostModel {
    double compute_per_element = 1.0;
    double msg_latency = 100.0;
    double msg_per_byte = 0.1;
    std::array<double, 4> ckpt_write_per_byte{0.2, 0.5, 1.0, 2.0};  // L1..L4
    double ckpt_read_per_byte = 0.2;
    double redeploy_per_rank = 50000.0;  // redeploy_cost = redeploy_per_rank * n
    double ulfm_heartbeat_per_step_per_rank = 2.0;
    double collective_round_cost = 200.0;
};

// ---------------------------------------------------------------------------
// Processes and communicators

enum class ProcessState { Alive, Failed, Respawned };
enum class ReinitState { New, RestartedSurvivor, RestartedRespawn };

struct FaultEvent {
    int rank;
    long iteration;
    double virtual_time;
};

struct Event {
    double virtual_time;
    int rank;
    std::string kind;
    std::string details;
};

struct CommHandle {
    uint64_t id = 0;
};

struct EntryInfo {
    bool survivor = true;  // false at the first entry of a respawned process
    ReinitState reinit_state = ReinitState::New;
};

class World;
class Rank;
using Program = std::function<void(Rank&)>;
using Bytes = std::vector<uint8_t>;
using Reducer = std::function<Bytes(const Bytes&, const Bytes&)>;

// Installed per world; decides what happens when a SimError escapes a
// rank's program. Returning true re-enters the program at its entry.
struct FailureHandler {
    virtual ~FailureHandler() = default;
    virtual bool on_failure(Rank&, const SimError&) = 0;
};

struct WorldOptions {
    CostModel cost;
    uint64_t seed = 0;
    std::shared_ptr<FailureHandler> handler;  // null: a failure aborts the world
    bool record_events = true;
};

// Per-rank context handed to the program. Valid only on the logical
// process's own thread while the world is running.
class Rank {
  public:
    int id() const;
    int world_size() const;
    uint64_t epoch() const;
    const EntryInfo& entry_info() const;
    World& world() { return w_; }
    const CostModel& cost() const;

    // --- point-to-point (current world communicator) ---
    void send(int dst, int tag, std::span<const uint8_t> payload);
    Bytes recv(int src, int tag);

    // --- collectives (current world communicator) ---
    void barrier();
    Bytes allreduce(std::span<const uint8_t> contrib, const Reducer& op);
    double allreduce_sum(double v);
    std::vector<Bytes> allgather(std::span<const uint8_t> contrib);
    std::vector<double> allgather_doubles(std::span<const double> contrib);
    bool agree(bool flag);

    // --- cost accounting ---
    void charge(Category c, double amount);
    void charge(double amount);  // current category
    Category category() const;
    class CategoryScope {
      public:
        CategoryScope(Rank& r, Category c);
        ~CategoryScope();

      private:
        Rank& r_;
        Category prev_;
    };

    // --- failure and control ---
    [[noreturn]] void self_kill(long iteration);  // throws KilledSignal
    void kill(int rank);                          // fail another rank
    void log_event(std::string kind, std::string details);
    void yield();

    // --- ULFM-style repair primitives ---
    void revoke();                                    // revoke the world comm
    CommHandle shrink();                              // survivors, re-ranked densely
    void spawn_replacements(CommHandle shrunk, int k);
    CommHandle merge();                               // original positions restored
    bool agree_on(CommHandle c, bool flag);
    void install(CommHandle c);                       // swap world slot, bump epoch

    // --- Reinit-style runtime recovery ---
    void reinit_restart();  // rendezvous; respawns failed ranks

    // --- results ---
    void set_result(Bytes b);

    // Per-rank attachment surviving re-entry (but not world teardown).
    std::shared_ptr<void>& attachment();

    // Internal: constructed by the world for each logical process.
    Rank(World& w, int proc_idx) : w_(w), proc_(proc_idx) {}

  private:
    friend class World;
    World& w_;
    int proc_;
};

// spawn_world + run, per the module contract. A World is driven by one
// thread of control; distinct worlds may run concurrently.
class World {
  public:
    World(int n, Program program, WorldOptions opts);
    ~World();

    struct Outcome {
        bool completed = false;
        std::optional<SimError> error;
    };
    Outcome run();

    int world_size() const { return n_; }
    uint64_t epoch() const;
    int slot() const;
    ProcessState process_state(int rank) const;
    const VirtualClock& clock(int rank) const;
    const std::vector<FaultEvent>& fault_events() const;
    const std::vector<Event>& events() const;
    void dump_events(std::ostream& os) const;
    const Bytes* result(int rank) const;
    std::vector<int> comm_members(CommHandle c) const;  // original rank ids
    uint64_t comm_epoch(CommHandle c) const;
    bool comm_revoked(CommHandle c) const;
    CommHandle world_comm() const;

    // Test hook: kill `rank` when it makes its nth agree_on call.
    void set_kill_on_agree(int rank, int nth);
    // Test hook: make rank `rank`'s next checkpoint-era write fail (used
    // by the checkpoint module's IO-failure path).
    // (checkpoint module owns its own hook; nothing here.)

    struct Proc;
    struct Comm;
    struct Site;
    struct Impl;

  private:
    friend class Rank;
    std::unique_ptr<Impl> impl_;
    int n_;
};

inline std::unique_ptr<World> spawn_world(int n, Program program, WorldOptions opts = {}) {
    if (n < 1) throw std::invalid_argument("spawn_world: n must be >= 1");
    return std::make_unique<World>(n, std::move(program), std::move(opts));
}

}  // namespace ftmatch::sim
