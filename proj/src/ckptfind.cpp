// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/ckptfind.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace ftmatch::cf {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

uint64_t parse_hex(const std::string& tok, int line) {
    std::string t = tok;
    if (t.rfind("0x", 0) == 0 || t.rfind("0X", 0) == 0) t = t.substr(2);
    if (t.empty()) throw ParseError(line, "empty hex value");
    uint64_t v = 0;
    for (char c : t) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else throw ParseError(line, "bad hex digit in '" + tok + "'");
        v = (v << 4) | static_cast<uint64_t>(d);
    }
    return v;
}

Location parse_location(const std::string& tok, int line) {
    if (tok.rfind("r:", 0) == 0) {
        Location l;
        l.kind = Location::Kind::Register;
        l.reg = tok.substr(2);
        if (l.reg.empty()) throw ParseError(line, "empty register name");
        return l;
    }
    if (tok.rfind("m:", 0) == 0) {
        Location l;
        l.kind = Location::Kind::Memory;
        l.addr = parse_hex(tok.substr(2), line);
        return l;
    }
    throw ParseError(line, "location must be r:<name> or m:<hex-addr>: '" + tok + "'");
}

std::vector<Access> parse_accesses(const std::string& body, int line) {
    std::vector<Access> out;
    std::string t = trim(body);
    if (t.empty()) return out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string::npos) throw ParseError(line, "access needs k=v: '" + item + "'");
        out.push_back({parse_location(trim(item.substr(0, eq)), line),
                       trim(item.substr(eq + 1))});
    }
    return out;
}

}  // namespace

std::string Location::str() const {
    if (kind == Kind::Register) return "r:" + reg;
    std::ostringstream os;
    os << "m:0x" << std::hex << addr;
    return os.str();
}

std::vector<TraceRecord> parse_trace(std::istream& in) {
    std::vector<TraceRecord> records;
    std::string line;
    int lineno = 0;
    long prev_seq = -1;
    bool seen_loop = false;
    long prev_iter = -1;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        TraceRecord rec;
        std::istringstream ss(t);
        std::string tag;
        ss >> tag;
        if (tag == "R") {
            if (!(ss >> rec.seq >> rec.line_no >> rec.opcode))
                throw ParseError(lineno, "malformed instruction record");
            std::string rest;
            std::getline(ss, rest);
            // sections: | reads: ... | writes: ...
            std::vector<std::string> parts;
            std::stringstream ps(rest);
            std::string part;
            while (std::getline(ps, part, '|')) parts.push_back(trim(part));
            for (const auto& p : parts) {
                if (p.empty()) continue;
                if (p.rfind("reads:", 0) == 0)
                    rec.reads = parse_accesses(p.substr(6), lineno);
                else if (p.rfind("writes:", 0) == 0)
                    rec.writes = parse_accesses(p.substr(7), lineno);
                else
                    throw ParseError(lineno, "unknown section: '" + p + "'");
            }
        } else if (tag == "M") {
            std::string kind;
            if (!(ss >> rec.seq >> kind)) throw ParseError(lineno, "malformed marker");
            if (kind == "LOOP_BEGIN") {
                if (seen_loop) throw ParseError(lineno, "second LOOP_BEGIN marker");
                rec.marker = TraceRecord::Marker::LoopBegin;
                seen_loop = true;
            } else if (kind == "ITER_BEGIN") {
                if (!(ss >> rec.iter_index))
                    throw ParseError(lineno, "ITER_BEGIN needs an index");
                if (!seen_loop)
                    throw ParseError(lineno, "ITER_BEGIN before LOOP_BEGIN");
                if (rec.iter_index <= prev_iter)
                    throw ParseError(lineno, "iteration indices must increase");
                prev_iter = rec.iter_index;
                rec.marker = TraceRecord::Marker::IterBegin;
            } else if (kind == "ALLOC") {
                std::string base;
                if (!(ss >> base >> rec.alloc_len >> rec.alloc_name))
                    throw ParseError(lineno, "ALLOC needs <hex-base> <len> <name>");
                rec.alloc_base = parse_hex(base, lineno);
                rec.marker = TraceRecord::Marker::Alloc;
            } else {
                throw ParseError(lineno, "unknown marker: '" + kind + "'");
            }
        } else {
            throw ParseError(lineno, "line must start with R or M");
        }
        if (rec.seq <= prev_seq)
            throw ParseError(lineno, "record seq must strictly increase");
        prev_seq = rec.seq;
        records.push_back(std::move(rec));
    }
    if (!seen_loop) throw MissingLoopBegin();
    return records;
}

LocationSets build_sets(const std::vector<TraceRecord>& records) {
    LocationSets sets;
    // First pass: per-location ordered invocation values inside the loop.
    std::map<Location, std::vector<std::string>> values;
    bool in_loop = false;
    for (const auto& r : records) {
        if (r.marker == TraceRecord::Marker::LoopBegin) {
            in_loop = true;
            continue;
        }
        if (!in_loop) continue;
        for (const auto& a : r.reads) values[a.loc].push_back(a.value);
        for (const auto& a : r.writes) values[a.loc].push_back(a.value);
    }
    // Second pass: one in-loop entry per access (duplicates intact), and the
    // before-loop definition set.
    in_loop = false;
    for (const auto& r : records) {
        if (r.marker == TraceRecord::Marker::LoopBegin) {
            in_loop = true;
            continue;
        }
        if (!in_loop) {
            if (r.marker == TraceRecord::Marker::Alloc) {
                sets.allocs.push_back({r.alloc_base, r.alloc_len, r.alloc_name});
                Location l;
                l.kind = Location::Kind::Memory;
                l.addr = r.alloc_base;
                sets.before_loop.push_back({l, 0});
            } else if (r.marker == TraceRecord::Marker::None) {
                for (const auto& a : r.writes)
                    sets.before_loop.push_back({a.loc, r.line_no});
            }
            continue;
        }
        if (r.marker != TraceRecord::Marker::None) continue;
        for (const auto& a : r.reads)
            sets.in_loop.push_back({a.loc, values[a.loc], r.seq, r.line_no});
        for (const auto& a : r.writes)
            sets.in_loop.push_back({a.loc, values[a.loc], r.seq, r.line_no});
    }
    return sets;
}

LocationSets filter_varying(LocationSets sets) {
    // A location must take at least two distinct values across its in-loop
    // invocations; a single invocation cannot vary.
    auto keep = [](const InLoopEntry& e) {
        if (e.values.size() < 2) return false;
        for (const auto& v : e.values)
            if (v != e.values.front()) return true;
        return false;
    };
    std::vector<InLoopEntry> kept;
    for (auto& e : sets.in_loop)
        if (keep(e)) kept.push_back(std::move(e));
    sets.in_loop = std::move(kept);
    return sets;
}

LocationSets dedupe(LocationSets sets) {
    std::set<Location> seen;
    std::vector<InLoopEntry> in;
    for (auto& e : sets.in_loop)
        if (seen.insert(e.loc).second) in.push_back(std::move(e));
    sets.in_loop = std::move(in);
    seen.clear();
    std::vector<BeforeLoopEntry> before;
    for (auto& e : sets.before_loop)
        if (seen.insert(e.loc).second) before.push_back(std::move(e));
    sets.before_loop = std::move(before);
    return sets;
}

CheckpointSet match_locations(const LocationSets& sets) {
    CheckpointSet cs;
    for (const auto& e : sets.in_loop) {
        if (e.loc.kind == Location::Kind::Register) {
            for (const auto& b : sets.before_loop) {
                if (b.loc.kind != Location::Kind::Register || b.loc.reg != e.loc.reg)
                    continue;
                cs.locations.push_back({e.loc, b.line_no, "", std::nullopt});
                break;
            }
            continue;
        }
        // Memory: allocation-extent containment first, exact address second.
        const AllocInfo* hit = nullptr;
        for (const auto& a : sets.allocs)
            if (e.loc.addr >= a.base && e.loc.addr < a.base + a.len) {
                hit = &a;
                break;
            }
        if (hit) {
            cs.locations.push_back({e.loc, e.line_no, hit->name, *hit});
            continue;
        }
        for (const auto& b : sets.before_loop) {
            if (b.loc.kind != Location::Kind::Memory || b.loc.addr != e.loc.addr)
                continue;
            cs.locations.push_back({e.loc, b.line_no, "", std::nullopt});
            break;
        }
    }
    return cs;
}

CheckpointSet analyze(std::istream& in) {
    return match_locations(dedupe(filter_varying(build_sets(parse_trace(in)))));
}

std::vector<ReportEntry> objects(const CheckpointSet& cs) {
    std::vector<ReportEntry> out;
    std::set<std::pair<uint64_t, uint64_t>> seen_extents;
    std::set<std::string> seen_regs;
    for (const auto& e : cs.locations) {
        if (e.extent) {
            if (!seen_extents.insert({e.extent->base, e.extent->len}).second) continue;
            ReportEntry obj = e;
            obj.loc.addr = e.extent->base;  // report the allocation itself
            out.push_back(std::move(obj));
        } else if (e.loc.kind == Location::Kind::Register) {
            if (!seen_regs.insert(e.loc.reg).second) continue;
            out.push_back(e);
        } else {
            out.push_back(e);
        }
    }
    return out;
}

std::string format_report(const CheckpointSet& cs, const std::string& format) {
    std::ostringstream os;
    auto objs = objects(cs);
    if (format == "tsv") {
        os << "name\tkind\tlocation\tline\talloc_base\talloc_len\n";
        for (const auto& e : objs) {
            os << (e.name.empty() ? e.loc.str() : e.name) << "\t"
               << (e.loc.kind == Location::Kind::Register ? "register" : "memory") << "\t"
               << e.loc.str() << "\t" << e.line_no << "\t";
            if (e.extent)
                os << "0x" << std::hex << e.extent->base << std::dec << "\t"
                   << e.extent->len;
            else
                os << "-\t-";
            os << "\n";
        }
    } else if (format == "text") {
        os << "checkpoint locations (" << objs.size() << "):\n";
        for (const auto& e : objs) {
            os << "  " << (e.name.empty() ? e.loc.str() : e.name)
               << "  kind=" << (e.loc.kind == Location::Kind::Register ? "register"
                                                                       : "memory")
               << "  line=" << e.line_no;
            if (e.extent)
                os << "  alloc=0x" << std::hex << e.extent->base << std::dec << "+"
                   << e.extent->len;
            os << "\n";
        }
    } else {
        throw std::invalid_argument("unknown report format: " + format);
    }
    return os.str();
}

}  // namespace ftmatch::cf
