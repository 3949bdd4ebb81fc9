// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ftmatch/rs.hpp"

namespace fs = std::filesystem;

namespace ftmatch::ckpt {

namespace {

std::optional<std::vector<uint8_t>> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<uint8_t> out((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    return out;
}

bool write_file_atomic(const fs::path& p, const uint8_t* data, std::size_t len) {
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return false;
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!out) return false;
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    return !ec;
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
uint32_t get_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}
uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

int group_of(int rank, int g) { return rank / g; }

// Ranks belonging to group `gid` in an n-rank world.
std::vector<int> group_ranks(int gid, int g, int n) {
    std::vector<int> out;
    for (int r = gid * g; r < std::min(n, (gid + 1) * g); ++r) out.push_back(r);
    return out;
}

}  // namespace

const char* level_dir(Level l) {
    switch (l) {
        case Level::L1: return "l1";
        case Level::L2: return "l2";
        case Level::L3: return "l3";
        case Level::L4: return "l4";
    }
    return "l1";
}

Level parse_level(const std::string& text) {
    std::string t = text;
    if (!t.empty() && (t[0] == 'l' || t[0] == 'L')) t = t.substr(1);
    if (t == "1") return Level::L1;
    if (t == "2") return Level::L2;
    if (t == "3") return Level::L3;
    if (t == "4") return Level::L4;
    throw std::invalid_argument("unknown checkpoint level: " + text);
}

uint64_t digest(const uint8_t* data, std::size_t len) {
    uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

fs::path rank_dir(const Config& cfg, int rank) {
    return cfg.store_root / level_dir(cfg.level) / std::to_string(rank);
}
fs::path data_path(const Config& cfg, int rank, uint64_t version) {
    return rank_dir(cfg, rank) / (std::to_string(version) + ".ckpt");
}
fs::path meta_path(const Config& cfg, int rank, uint64_t version) {
    return rank_dir(cfg, rank) / (std::to_string(version) + ".meta");
}
fs::path partner_copy_path(const Config& cfg, int partner_rank, uint64_t version) {
    return rank_dir(cfg, partner_rank) / (std::to_string(version) + ".partner.ckpt");
}
fs::path parity_path(const Config& cfg, int group, int parity_index, uint64_t version) {
    return cfg.store_root / level_dir(cfg.level) /
           ("group" + std::to_string(group)) /
           (std::to_string(version) + ".parity" + std::to_string(parity_index));
}
fs::path global_path(const Config& cfg, int rank, uint64_t version) {
    return cfg.store_root / "global" / std::to_string(rank) /
           (std::to_string(version) + ".ckpt");
}

void write_meta(const fs::path& file, const Meta& m) {
    std::ostringstream os;
    os << "version " << m.version << "\n"
       << "iteration " << m.iteration << "\n"
       << "level " << (static_cast<int>(m.level) + 1) << "\n"
       << "rank " << m.rank << "\n"
       << "world " << m.world_size << "\n"
       << "partner " << m.partner << "\n"
       << "group " << m.group << "\n"
       << "blob_length " << m.blob_length << "\n"
       << "blob_digest " << std::hex << m.blob_digest << std::dec << "\n"
       << "objects " << m.objects.size() << "\n";
    for (const auto& o : m.objects)
        os << "object " << o.id << " " << o.length << " " << std::hex << o.digest
           << std::dec << " " << o.name << "\n";
    std::string text = os.str();
    if (!write_file_atomic(file, reinterpret_cast<const uint8_t*>(text.data()), text.size()))
        throw IOFailure("cannot write meta file: " + file.string());
}

std::optional<Meta> read_meta(const fs::path& file) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    Meta m;
    std::string key;
    std::size_t nobjects = 0;
    while (in >> key) {
        if (key == "version") in >> m.version;
        else if (key == "iteration") in >> m.iteration;
        else if (key == "level") {
            int l;
            in >> l;
            m.level = static_cast<Level>(l - 1);
        } else if (key == "rank") in >> m.rank;
        else if (key == "world") in >> m.world_size;
        else if (key == "partner") in >> m.partner;
        else if (key == "group") in >> m.group;
        else if (key == "blob_length") in >> m.blob_length;
        else if (key == "blob_digest") in >> std::hex >> m.blob_digest >> std::dec;
        else if (key == "objects") in >> nobjects;
        else if (key == "object") {
            ObjectMeta o;
            in >> o.id >> o.length >> std::hex >> o.digest >> std::dec;
            std::getline(in, o.name);
            if (!o.name.empty() && o.name[0] == ' ') o.name.erase(0, 1);
            m.objects.push_back(std::move(o));
        } else {
            return std::nullopt;  // unknown key: treat as corrupt
        }
        if (!in && !in.eof()) return std::nullopt;
    }
    if (m.objects.size() != nobjects) return std::nullopt;
    return m;
}

// ---------------------------------------------------------------------------

Context& Context::attach(sim::Rank& r, const Config& cfg) {
    auto& slot = r.attachment();
    if (!slot) slot = std::shared_ptr<void>(new Context(cfg));
    auto* ctx = static_cast<Context*>(slot.get());
    ctx->cfg_ = cfg;
    ctx->objects_.clear();  // fresh registry on every program entry
    return *ctx;
}

void Context::protect(int id, std::string name, void* data, std::size_t length) {
    for (const auto& o : objects_)
        if (o.id == id) throw DuplicateId("object id already protected: " + std::to_string(id));
    objects_.push_back({id, std::move(name), static_cast<uint8_t*>(data), length});
}

std::size_t Context::total_bytes() const {
    std::size_t t = 0;
    for (const auto& o : objects_) t += o.length;
    return t;
}

std::vector<uint8_t> Context::serialize() const {
    std::vector<uint8_t> blob;
    put_u32(blob, static_cast<uint32_t>(objects_.size()));
    for (const auto& o : objects_) {
        put_u32(blob, static_cast<uint32_t>(o.id));
        put_u64(blob, o.length);
        put_u64(blob, digest(o.data, o.length));
        blob.insert(blob.end(), o.data, o.data + o.length);
    }
    return blob;
}

void Context::deserialize(const std::vector<uint8_t>& blob) {
    if (blob.size() < 4) throw Unrecoverable("checkpoint blob truncated");
    std::size_t pos = 4;
    uint32_t count = get_u32(blob.data());
    std::map<int, std::pair<std::size_t, std::size_t>> found;  // id -> (offset, len)
    for (uint32_t i = 0; i < count; ++i) {
        if (pos + 20 > blob.size()) throw Unrecoverable("checkpoint blob truncated");
        int id = static_cast<int>(get_u32(blob.data() + pos));
        std::size_t len = get_u64(blob.data() + pos + 4);
        uint64_t dg = get_u64(blob.data() + pos + 12);
        pos += 20;
        if (pos + len > blob.size()) throw Unrecoverable("checkpoint blob truncated");
        if (digest(blob.data() + pos, len) != dg)
            throw Unrecoverable("object digest mismatch in checkpoint blob");
        found[id] = {pos, len};
        pos += len;
    }
    for (auto& o : objects_) {
        auto it = found.find(o.id);
        if (it == found.end())
            throw Unrecoverable("protected object missing from checkpoint: " + o.name);
        if (it->second.second != o.length)
            throw Unrecoverable("protected object length changed: " + o.name);
        std::memcpy(o.data, blob.data() + it->second.first, o.length);
    }
}

namespace {

// Highest version with a committed meta in this rank's directory.
uint64_t scan_max_version(const Config& cfg, int rank) {
    uint64_t best = 0;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(rank_dir(cfg, rank), ec)) {
        const fs::path& p = e.path();
        if (p.extension() != ".meta") continue;
        uint64_t v = std::strtoull(p.stem().string().c_str(), nullptr, 10);
        best = std::max(best, v);
    }
    return best;
}

bool blob_valid(const fs::path& p, std::size_t len, uint64_t dg) {
    auto b = read_file(p);
    return b && b->size() == len && digest(b->data(), b->size()) == dg;
}

// Can `rank`'s data at version v be produced, by any means the level allows?
bool rank_recoverable(const Config& cfg, const Meta& m, std::vector<std::string>* notes) {
    if (blob_valid(data_path(cfg, m.rank, m.version), m.blob_length, m.blob_digest))
        return true;
    if (notes)
        notes->push_back("rank " + std::to_string(m.rank) + " v" +
                         std::to_string(m.version) + ": local copy missing or corrupt");
    switch (cfg.level) {
        case Level::L1:
            return false;
        case Level::L2: {
            int partner = (m.rank + 1) % m.world_size;
            return blob_valid(partner_copy_path(cfg, partner, m.version), m.blob_length,
                              m.blob_digest);
        }
        case Level::L3: {
            int gid = group_of(m.rank, cfg.group_size);
            auto ranks = group_ranks(gid, cfg.group_size, m.world_size);
            int data_shards = static_cast<int>(ranks.size());
            int parity_shards = (data_shards + 1) / 2;
            int present = 0;
            for (int q : ranks) {
                auto qm = read_meta(meta_path(cfg, q, m.version));
                if (qm && blob_valid(data_path(cfg, q, m.version), qm->blob_length,
                                     qm->blob_digest))
                    ++present;
            }
            for (int p = 0; p < parity_shards; ++p)
                if (fs::exists(parity_path(cfg, gid, p, m.version))) ++present;
            return present >= data_shards;
        }
        case Level::L4:
            return blob_valid(global_path(cfg, m.rank, m.version), m.blob_length,
                              m.blob_digest);
    }
    return false;
}

}  // namespace

Meta Context::checkpoint(sim::Rank& r, long iteration) {
    sim::Rank::CategoryScope scope(r, sim::Category::CkptWrite);
    if (objects_.empty()) throw std::logic_error("checkpoint with no protected objects");
    const int rank = r.id();
    const int n = r.world_size();
    if (!scanned_) {
        version_ = std::max(version_, scan_max_version(cfg_, rank));
        scanned_ = true;
    }
    const uint64_t v = version_ + 1;

    Meta m;
    m.version = v;
    m.iteration = iteration;
    m.level = cfg_.level;
    m.rank = rank;
    m.world_size = n;
    if (cfg_.level == Level::L2) m.partner = (rank + 1) % n;
    if (cfg_.level == Level::L3) m.group = group_of(rank, cfg_.group_size);
    for (const auto& o : objects_)
        m.objects.push_back({o.id, o.name, o.length, digest(o.data, o.length)});

    std::vector<uint8_t> blob = serialize();
    m.blob_length = blob.size();
    m.blob_digest = digest(blob.data(), blob.size());

    std::error_code ec;
    fs::create_directories(rank_dir(cfg_, rank), ec);
    bool ok = !ec;
    if (fail_next_write) {
        fail_next_write = false;
        ok = false;
    }
    if (ok) ok = write_file_atomic(data_path(cfg_, rank, v), blob.data(), blob.size());

    // Collective commit gate: one rank failing to write invalidates the
    // version everywhere, leaving the previous version untouched.
    uint8_t flag = ok ? 1 : 0;
    auto flags = r.allgather(std::span<const uint8_t>(&flag, 1));
    bool all_ok = true;
    for (const auto& f : flags) all_ok = all_ok && !f.empty() && f[0] == 1;
    if (!all_ok) {
        fs::remove(data_path(cfg_, rank, v), ec);
        throw IOFailure("checkpoint version " + std::to_string(v) +
                        " aborted: a rank failed to write");
    }

    if (cfg_.level == Level::L2) {
        fs::create_directories(rank_dir(cfg_, m.partner), ec);
        if (!write_file_atomic(partner_copy_path(cfg_, m.partner, v), blob.data(),
                               blob.size()))
            throw IOFailure("cannot write partner copy");
    } else if (cfg_.level == Level::L3) {
        r.barrier();  // every group member's data file is committed now
        int gid = m.group;
        auto ranks = group_ranks(gid, cfg_.group_size, n);
        if (rank == ranks.front()) {
            std::vector<std::vector<uint8_t>> shards;
            std::size_t pad = 0;
            for (int q : ranks) {
                auto b = read_file(data_path(cfg_, q, v));
                if (!b) throw IOFailure("group member blob unreadable");
                pad = std::max(pad, b->size());
                shards.push_back(std::move(*b));
            }
            for (auto& s : shards) s.resize(pad, 0);
            rs::Code code(static_cast<int>(shards.size()));
            auto parity = code.encode(shards);
            fs::create_directories(parity_path(cfg_, gid, 0, v).parent_path(), ec);
            for (std::size_t p = 0; p < parity.size(); ++p) {
                // 8-byte shard-length header, then parity bytes.
                std::vector<uint8_t> out;
                put_u64(out, pad);
                out.insert(out.end(), parity[p].begin(), parity[p].end());
                if (!write_file_atomic(parity_path(cfg_, gid, static_cast<int>(p), v),
                                       out.data(), out.size()))
                    throw IOFailure("cannot write parity shard");
            }
        }
    } else if (cfg_.level == Level::L4) {
        fs::create_directories(global_path(cfg_, rank, v).parent_path(), ec);
        if (!write_file_atomic(global_path(cfg_, rank, v), blob.data(), blob.size()))
            throw IOFailure("cannot write global copy");
    }

    r.barrier();  // all redundancy in place before anyone commits
    write_meta(meta_path(cfg_, rank, v), m);
    version_ = v;
    r.barrier();  // no rank proceeds until every meta is committed

    r.charge(sim::Category::CkptWrite,
             r.cost().ckpt_write_per_byte[static_cast<int>(cfg_.level)] *
                 static_cast<double>(total_bytes()));
    r.log_event("checkpoint", "version=" + std::to_string(v) +
                                  " iteration=" + std::to_string(iteration));
    return m;
}

Status Context::status(sim::Rank& r) const {
    Status st;
    const int n = r.world_size();
    uint64_t top = 0;
    for (int q = 0; q < n; ++q) top = std::max(top, scan_max_version(cfg_, q));
    for (uint64_t v = top; v >= 1; --v) {
        std::vector<Meta> metas;
        bool complete = true;
        for (int q = 0; q < n && complete; ++q) {
            auto m = read_meta(meta_path(cfg_, q, v));
            if (!m || m->world_size != n) complete = false;
            else metas.push_back(std::move(*m));
        }
        if (!complete) continue;
        bool recoverable = true;
        for (const auto& m : metas)
            if (!rank_recoverable(cfg_, m, &st.notes)) {
                recoverable = false;
                break;
            }
        if (recoverable) {
            st.restart = true;
            st.version = v;
            return st;
        }
    }
    return st;
}

long Context::recover(sim::Rank& r) {
    sim::Rank::CategoryScope scope(r, sim::Category::CkptRead);
    Status st = status(r);
    if (!st.restart) throw Unrecoverable("no recoverable checkpoint version");
    const uint64_t v = st.version;
    const int rank = r.id();
    const int n = r.world_size();
    auto m = read_meta(meta_path(cfg_, rank, v));
    if (!m) throw Unrecoverable("meta vanished during recovery");

    std::optional<std::vector<uint8_t>> blob = read_file(data_path(cfg_, rank, v));
    auto valid = [&](const std::optional<std::vector<uint8_t>>& b) {
        return b && b->size() == m->blob_length &&
               digest(b->data(), b->size()) == m->blob_digest;
    };
    if (!valid(blob)) {
        blob.reset();
        switch (cfg_.level) {
            case Level::L1:
                break;
            case Level::L2: {
                auto b = read_file(partner_copy_path(cfg_, (rank + 1) % n, v));
                if (valid(b)) blob = std::move(b);
                break;
            }
            case Level::L3: {
                int gid = group_of(rank, cfg_.group_size);
                auto ranks = group_ranks(gid, cfg_.group_size, n);
                int ds = static_cast<int>(ranks.size());
                rs::Code code(ds);
                std::vector<std::pair<int, rs::Shard>> present;
                std::size_t pad = 0;
                for (int p = 0; p < code.parity_shards(); ++p) {
                    auto b = read_file(parity_path(cfg_, gid, p, v));
                    if (!b || b->size() < 8) continue;
                    pad = get_u64(b->data());
                    present.emplace_back(ds + p,
                                         rs::Shard(b->begin() + 8, b->end()));
                }
                for (int i = 0; i < ds; ++i) {
                    auto qm = read_meta(meta_path(cfg_, ranks[i], v));
                    if (!qm) continue;
                    auto b = read_file(data_path(cfg_, ranks[i], v));
                    if (!b || b->size() != qm->blob_length ||
                        digest(b->data(), b->size()) != qm->blob_digest)
                        continue;
                    b->resize(std::max(pad, b->size()), 0);
                    present.emplace_back(i, std::move(*b));
                }
                for (const auto& [idx, s] : present) pad = std::max(pad, s.size());
                for (auto& [idx, s] : present) s.resize(pad, 0);
                auto data = code.decode(present);
                int my_index = static_cast<int>(rank - ranks.front());
                auto& mine = data[my_index];
                mine.resize(m->blob_length);
                blob = std::move(mine);
                break;
            }
            case Level::L4: {
                auto b = read_file(global_path(cfg_, rank, v));
                if (valid(b)) blob = std::move(b);
                break;
            }
        }
    }
    if (!valid(blob)) throw Unrecoverable("cannot reconstruct checkpoint data");

    deserialize(*blob);
    version_ = std::max(version_, v);
    scanned_ = true;
    r.charge(sim::Category::CkptRead,
             r.cost().ckpt_read_per_byte * static_cast<double>(total_bytes()));
    r.log_event("recover", "version=" + std::to_string(v) +
                               " iteration=" + std::to_string(m->iteration));
    return m->iteration;
}

}  // namespace ftmatch::ckpt
