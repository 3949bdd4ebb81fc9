// SPDX-License-Identifier: Apache-2.0
//
// Trace-based checkpoint-set analysis: given a dynamic instruction trace
// with an annotated main loop, find the locations that must be checkpointed.
// A location qualifies when it (a) is defined or allocated before the loop,
// (b) is used inside the loop, and (c) takes at least two distinct values
// across its in-loop invocations.
#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftmatch::cf {

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};
struct MissingLoopBegin : std::runtime_error {
    MissingLoopBegin() : std::runtime_error("trace has no LOOP_BEGIN marker") {}
};

struct Location {
    enum class Kind { Register, Memory };
    Kind kind = Kind::Register;
    std::string reg;     // register name (Register)
    uint64_t addr = 0;   // byte address (Memory)

    friend bool operator==(const Location& a, const Location& b) {
        return a.kind == b.kind && (a.kind == Kind::Register ? a.reg == b.reg
                                                             : a.addr == b.addr);
    }
    friend bool operator<(const Location& a, const Location& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.kind == Kind::Register ? a.reg < b.reg : a.addr < b.addr;
    }
    std::string str() const;
};

struct Access {
    Location loc;
    std::string value;  // exact recorded token; compared by equality only
};

struct TraceRecord {
    enum class Marker { None, LoopBegin, IterBegin, Alloc };
    long seq = 0;
    int line_no = 0;  // source line (instruction records only)
    std::string opcode;
    std::vector<Access> reads;
    std::vector<Access> writes;
    Marker marker = Marker::None;
    long iter_index = 0;   // IterBegin
    uint64_t alloc_base = 0, alloc_len = 0;  // Alloc
    std::string alloc_name;                  // Alloc
};

struct AllocInfo {
    uint64_t base = 0, len = 0;
    std::string name;
};

// One in-loop entry per access, in trace order; `values` is the full ordered
// invocation value list of the location (shared by all its entries).
struct InLoopEntry {
    Location loc;
    std::vector<std::string> values;
    long first_seq = 0;
    int line_no = 0;  // line of this access's record
};

struct BeforeLoopEntry {
    Location loc;
    int line_no = 0;  // defining record's line (0 for allocations)
};

struct LocationSets {
    std::vector<InLoopEntry> in_loop;          // may contain duplicate locations
    std::vector<BeforeLoopEntry> before_loop;  // writes/allocs at seq < LoopBegin
    std::vector<AllocInfo> allocs;             // pre-loop allocation extents
};

struct ReportEntry {
    Location loc;
    int line_no = 0;
    std::string name;  // allocation name when known, else empty
    std::optional<AllocInfo> extent;
};

struct CheckpointSet {
    std::vector<ReportEntry> locations;  // first-use order
};

std::vector<TraceRecord> parse_trace(std::istream& in);
LocationSets build_sets(const std::vector<TraceRecord>& records);
LocationSets filter_varying(LocationSets sets);
LocationSets dedupe(LocationSets sets);
CheckpointSet match_locations(const LocationSets& sets);
CheckpointSet analyze(std::istream& in);

// Memory locations grouped into their allocations ("data objects");
// registers stay as-is. First-use order.
std::vector<ReportEntry> objects(const CheckpointSet& cs);

// format: "text" or "tsv".
std::string format_report(const CheckpointSet& cs, const std::string& format);

}  // namespace ftmatch::cf
