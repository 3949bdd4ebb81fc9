// SPDX-License-Identifier: Apache-2.0
//
// Application-level multi-level checkpointing over the simulated runtime.
// Levels: L1 rank-local store, L2 adds a partner copy at (rank+1) mod n,
// L3 adds Reed-Solomon parity across fixed rank groups, L4 adds a copy in
// the shared global store.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftmatch/sim.hpp"

namespace ftmatch::ckpt {

enum class Level { L1 = 0, L2 = 1, L3 = 2, L4 = 3 };

const char* level_dir(Level l);               // "l1".."l4"
Level parse_level(const std::string& text);   // "1".."4" or "l1".."l4"

struct Config {
    std::filesystem::path store_root;
    Level level = Level::L1;
    int group_size = 4;  // L3 encoding group; parity count = ceil(g/2)
};

struct DuplicateId : std::logic_error {
    using std::logic_error::logic_error;
};
struct IOFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct Unrecoverable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// FNV-1a 64-bit, used for all content digests in the store.
uint64_t digest(const uint8_t* data, std::size_t len);

struct ObjectMeta {
    int id = 0;
    std::string name;
    std::size_t length = 0;
    uint64_t digest = 0;
};

struct Meta {
    uint64_t version = 0;
    long iteration = 0;
    Level level = Level::L1;
    int rank = 0;
    int world_size = 0;
    int partner = -1;  // L2 only
    int group = -1;    // L3 only
    std::size_t blob_length = 0;
    uint64_t blob_digest = 0;
    std::vector<ObjectMeta> objects;
};

struct Status {
    bool restart = false;          // false means fresh start
    uint64_t version = 0;          // valid when restart
    std::vector<std::string> notes;  // e.g. corruption observations
};

// Per-rank checkpoint context. Obtain via attach(); the object lives in the
// rank's attachment so it survives in-world re-entry (rollback/repair) while
// the version counter keeps increasing. A brand-new world rebuilds the
// counter from the store.
class Context {
  public:
    // Fetches (or creates) the context for this rank and resets the object
    // registry; call once per program entry, then re-protect everything.
    static Context& attach(sim::Rank& r, const Config& cfg);

    void protect(int id, std::string name, void* data, std::size_t length);

    // Collective across the current world. Serializes all protected objects,
    // commits a new version (meta file written last), and charges
    // ckpt_write_per_byte[level] * total_bytes.
    Meta checkpoint(sim::Rank& r, long iteration);

    // Deterministic store scan: the newest version that every rank of the
    // current world can recover at the configured level, if any.
    Status status(sim::Rank& r) const;

    // Restores every protected object byte-exactly from the status version
    // and returns the iteration recorded at write. Charges
    // ckpt_read_per_byte * total_bytes.
    long recover(sim::Rank& r);

    const Config& config() const { return cfg_; }
    uint64_t last_version() const { return version_; }

    bool fail_next_write = false;  // test hook: next data write reports IO failure

  private:
    explicit Context(Config cfg) : cfg_(std::move(cfg)) {}

    struct Object {
        int id;
        std::string name;
        uint8_t* data;
        std::size_t length;
    };

    std::vector<uint8_t> serialize() const;
    void deserialize(const std::vector<uint8_t>& blob);
    std::size_t total_bytes() const;

    Config cfg_;
    uint64_t version_ = 0;  // last committed version written by this context
    bool scanned_ = false;  // version_ seeded from the store yet?
    std::vector<Object> objects_;
};

// Store paths (shared with tests and the recovery driver).
std::filesystem::path rank_dir(const Config& cfg, int rank);
std::filesystem::path data_path(const Config& cfg, int rank, uint64_t version);
std::filesystem::path meta_path(const Config& cfg, int rank, uint64_t version);
std::filesystem::path partner_copy_path(const Config& cfg, int partner_rank, uint64_t version);
std::filesystem::path parity_path(const Config& cfg, int group, int parity_index,
                                  uint64_t version);
std::filesystem::path global_path(const Config& cfg, int rank, uint64_t version);

std::optional<Meta> read_meta(const std::filesystem::path& file);
void write_meta(const std::filesystem::path& file, const Meta& m);

}  // namespace ftmatch::ckpt
