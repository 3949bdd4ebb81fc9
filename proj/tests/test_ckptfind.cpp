// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ftmatch/ckptfind.hpp"
#include "ftmatch/tracegen.hpp"

using namespace ftmatch;
using cf::Location;

namespace {

// Independent brute-force oracle: evaluates the three selection principles
// directly per location over the whole record list, with no shared logic
// beyond the parsed representation.
//   1. defined (written or allocated) before the loop marker
//   2. used (read or written) inside the loop
//   3. takes >= 2 distinct values across its in-loop invocations
std::vector<Location> oracle(const std::vector<cf::TraceRecord>& records) {
    std::size_t loop_at = records.size();
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].marker == cf::TraceRecord::Marker::LoopBegin) {
            loop_at = i;
            break;
        }
    std::set<std::string> regs_before;
    std::set<uint64_t> mem_before;
    std::vector<std::pair<uint64_t, uint64_t>> extents;
    for (std::size_t i = 0; i < loop_at; ++i) {
        const auto& r = records[i];
        if (r.marker == cf::TraceRecord::Marker::Alloc) {
            extents.emplace_back(r.alloc_base, r.alloc_len);
            mem_before.insert(r.alloc_base);
        }
        for (const auto& a : r.writes) {
            if (a.loc.kind == Location::Kind::Register) regs_before.insert(a.loc.reg);
            else mem_before.insert(a.loc.addr);
        }
    }
    std::map<Location, std::set<std::string>> distinct;
    std::map<Location, std::size_t> invocations;
    std::vector<Location> order;
    std::set<Location> seen;
    for (std::size_t i = loop_at; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.marker != cf::TraceRecord::Marker::None) continue;
        auto visit = [&](const cf::Access& a) {
            distinct[a.loc].insert(a.value);
            invocations[a.loc]++;
            if (seen.insert(a.loc).second) order.push_back(a.loc);
        };
        for (const auto& a : r.reads) visit(a);
        for (const auto& a : r.writes) visit(a);
    }
    std::vector<Location> out;
    for (const auto& loc : order) {
        if (invocations[loc] < 2 || distinct[loc].size() < 2) continue;
        bool defined = false;
        if (loc.kind == Location::Kind::Register) {
            defined = regs_before.count(loc.reg) > 0;
        } else {
            defined = mem_before.count(loc.addr) > 0;
            for (auto [base, len] : extents)
                if (loc.addr >= base && loc.addr < base + len) defined = true;
        }
        if (defined) out.push_back(loc);
    }
    return out;
}

std::vector<Location> analyzed_locations(const std::string& trace) {
    std::istringstream in(trace);
    auto cs = cf::analyze(in);
    std::vector<Location> out;
    for (const auto& e : cs.locations) out.push_back(e.loc);
    return out;
}

std::vector<Location> oracle_locations(const std::string& trace) {
    std::istringstream in(trace);
    return oracle(cf::parse_trace(in));
}

// Random but well-formed trace: a few allocations and register defs before
// the loop, then random in-loop accesses drawing values from a small pool so
// constant and varying locations both occur.
std::string random_trace(uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto pick = [&](int n) { return static_cast<int>(rng() % n); };
    std::ostringstream os;
    long seq = 0;
    int nregs = 2 + pick(8);
    int nallocs = 1 + pick(4);
    std::vector<std::pair<uint64_t, uint64_t>> allocs;
    for (int a = 0; a < nallocs; ++a) {
        uint64_t base = 0x1000 * (a + 1);
        uint64_t len = 8 * (1 + pick(8));
        allocs.emplace_back(base, len);
        if (pick(4) != 0)  // some allocations happen inside the loop instead
            os << "M " << seq++ << " ALLOC 0x" << std::hex << base << std::dec << " "
               << len << " a" << a << "\n";
    }
    int pre_defined_regs = pick(nregs + 1);
    for (int r = 0; r < pre_defined_regs; ++r)
        os << "R " << seq++ << " " << 10 + r << " store | reads: | writes: r:g" << r
           << "=" << pick(3) << "\n";
    os << "M " << seq++ << " LOOP_BEGIN\n";
    int body = pick(120);
    long iter = 0;
    for (int i = 0; i < body; ++i) {
        int what = pick(10);
        if (what == 0) {
            os << "M " << seq++ << " ITER_BEGIN " << ++iter << "\n";
        } else if (what == 1) {
            auto [base, len] = allocs[pick(nallocs)];
            os << "M " << seq++ << " ALLOC 0x" << std::hex << base << std::dec << " "
               << len << " late\n";
        } else {
            os << "R " << seq++ << " " << 100 + pick(20) << " op | reads: ";
            bool first = true;
            for (int k = pick(3); k > 0; --k) {
                if (!first) os << ",";
                first = false;
                if (pick(2) == 0) {
                    os << "r:g" << pick(nregs) << "=" << pick(3);
                } else {
                    auto [base, len] = allocs[pick(nallocs)];
                    os << "m:0x" << std::hex << base + 8 * (rng() % (len / 8 + 1))
                       << std::dec << "=" << pick(3);
                }
            }
            os << " | writes: ";
            first = true;
            for (int k = pick(3); k > 0; --k) {
                if (!first) os << ",";
                first = false;
                if (pick(2) == 0) {
                    os << "r:g" << pick(nregs) << "=" << pick(3);
                } else {
                    auto [base, len] = allocs[pick(nallocs)];
                    os << "m:0x" << std::hex << base + 8 * (rng() % (len / 8))
                       << std::dec << "=" << pick(3);
                }
            }
            os << "\n";
        }
    }
    return os.str();
}

const char* kFixture =
    "M 0 ALLOC 0x1000 64 buf\n"
    "R 1 11 store | reads: | writes: r:acc=0\n"
    "M 2 LOOP_BEGIN\n"
    "M 3 ITER_BEGIN 1\n"
    "R 4 21 fadd | reads: r:acc=0,m:0x1008=5 | writes: r:acc=5\n"
    "M 5 ITER_BEGIN 2\n"
    "R 6 21 fadd | reads: r:acc=5,m:0x1008=5 | writes: r:acc=10\n"
    "R 7 22 store | reads: | writes: m:0x1010=2\n"
    "M 8 ITER_BEGIN 3\n"
    "R 9 22 store | reads: | writes: m:0x1010=3\n";

}  // namespace

TEST_CASE("handcrafted fixture: fields, sets, and final answer") {
    std::istringstream in(kFixture);
    auto records = cf::parse_trace(in);
    REQUIRE(records.size() == 10);
    CHECK(records[0].marker == cf::TraceRecord::Marker::Alloc);
    CHECK(records[0].alloc_base == 0x1000);
    CHECK(records[0].alloc_len == 64);
    CHECK(records[0].alloc_name == "buf");
    CHECK(records[4].opcode == "fadd");
    CHECK(records[4].line_no == 21);
    REQUIRE(records[4].reads.size() == 2);
    CHECK(records[4].reads[1].loc.addr == 0x1008);
    CHECK(records[4].reads[1].value == "5");

    // acc varies (0,5,5,10); 0x1008 constant (5,5); 0x1010 varies (2,3) and
    // sits inside the before-loop allocation.
    auto got = analyzed_locations(kFixture);
    REQUIRE(got.size() == 2);
    CHECK(got[0].reg == "acc");
    CHECK(got[1].addr == 0x1010);
    CHECK(got == oracle_locations(kFixture));
}

TEST_CASE("trace without LOOP_BEGIN is rejected") {
    std::istringstream in("R 0 10 store | reads: | writes: r:a=1\n");
    CHECK_THROWS_AS(cf::parse_trace(in), cf::MissingLoopBegin);
}

TEST_CASE("malformed lines carry their line number") {
    auto expect_error_at = [](const std::string& text, int line) {
        std::istringstream in(text);
        try {
            cf::parse_trace(in);
            FAIL("expected ParseError");
        } catch (const cf::ParseError& e) {
            CHECK(e.line == line);
        }
    };
    expect_error_at("M 0 LOOP_BEGIN\nbogus line\n", 2);
    expect_error_at("M 0 LOOP_BEGIN\nR 1 10 op | reads: zz | writes: \n", 2);
    expect_error_at("M 0 LOOP_BEGIN\nM 1 ITER_BEGIN 2\nM 2 ITER_BEGIN 1\n", 3);
    expect_error_at("M 0 LOOP_BEGIN\nM 0 ITER_BEGIN 1\n", 2);  // seq not increasing
    expect_error_at("M 0 LOOP_BEGIN\nM 1 LOOP_BEGIN\n", 2);
}

TEST_CASE("empty loop body yields an empty checkpoint set") {
    std::string t = "M 0 ALLOC 0x1000 8 a\nM 1 LOOP_BEGIN\n";
    CHECK(analyzed_locations(t).empty());
}

TEST_CASE("selection principles on directed examples") {
    SUBCASE("constant in-loop values are dropped") {
        std::string t =
            "R 0 1 store | reads: | writes: r:a=3\n"
            "M 1 LOOP_BEGIN\n"
            "R 2 2 op | reads: r:a=3 | writes: \n"
            "R 3 2 op | reads: r:a=3 | writes: \n"
            "R 4 2 op | reads: r:a=3 | writes: \n";
        CHECK(analyzed_locations(t).empty());
    }
    SUBCASE("varying values are kept") {
        std::string t =
            "R 0 1 store | reads: | writes: r:a=3\n"
            "M 1 LOOP_BEGIN\n"
            "R 2 2 op | reads: r:a=3 | writes: r:a=4\n"
            "R 3 2 op | reads: r:a=4 | writes: r:a=5\n";
        auto got = analyzed_locations(t);
        REQUIRE(got.size() == 1);
        CHECK(got[0].reg == "a");
    }
    SUBCASE("a single invocation cannot vary") {
        std::string t =
            "R 0 1 store | reads: | writes: r:a=3\n"
            "M 1 LOOP_BEGIN\n"
            "R 2 2 op | reads: r:a=7 | writes: \n";
        CHECK(analyzed_locations(t).empty());
    }
    SUBCASE("in-loop-only registers are excluded") {
        std::string t =
            "M 0 LOOP_BEGIN\n"
            "R 1 2 op | reads: | writes: r:tmp=1\n"
            "R 2 2 op | reads: | writes: r:tmp=2\n";
        CHECK(analyzed_locations(t).empty());
    }
    SUBCASE("extent containment matches element addresses to the allocation") {
        std::string t =
            "M 0 ALLOC 0x1000 64 arr\n"
            "M 1 LOOP_BEGIN\n"
            "R 2 5 store | reads: | writes: m:0x1008=1\n"
            "R 3 5 store | reads: | writes: m:0x1008=2\n";
        std::istringstream in(t);
        auto cs = cf::analyze(in);
        REQUIRE(cs.locations.size() == 1);
        CHECK(cs.locations[0].name == "arr");
        REQUIRE(cs.locations[0].extent.has_value());
        CHECK(cs.locations[0].extent->base == 0x1000);
        CHECK(cs.locations[0].extent->len == 64);
    }
}

TEST_CASE("dedupe is idempotent and order-preserving") {
    std::istringstream in(kFixture);
    auto sets = cf::filter_varying(cf::build_sets(cf::parse_trace(in)));
    auto once = cf::dedupe(sets);
    auto twice = cf::dedupe(once);
    REQUIRE(once.in_loop.size() == twice.in_loop.size());
    for (std::size_t i = 0; i < once.in_loop.size(); ++i)
        CHECK(once.in_loop[i].loc == twice.in_loop[i].loc);
    std::set<Location> uniq;
    for (const auto& e : once.in_loop) CHECK(uniq.insert(e.loc).second);
}

TEST_CASE("analyze equals the brute-force oracle on 120 random traces") {
    int nonempty = 0;
    for (uint64_t seed = 1; seed <= 120; ++seed) {
        CAPTURE(seed);
        std::string t = random_trace(seed);
        auto got = analyzed_locations(t);
        auto want = oracle_locations(t);
        REQUIRE(got == want);
        if (!got.empty()) ++nonempty;
    }
    CHECK(nonempty > 20);  // the generator must exercise the positive path
}

TEST_CASE("workload traces produce exactly the protected-object sets") {
    SUBCASE("stencil sweep") {
        std::string t = tg::jacobi_trace(6, 6, 4);
        CHECK(analyzed_locations(t) == oracle_locations(t));
        std::istringstream in(t);
        auto objs = cf::objects(cf::analyze(in));
        std::set<std::string> names;
        for (const auto& o : objs)
            names.insert(o.name.empty() ? o.loc.str() : o.name);
        CHECK(names == std::set<std::string>{"grid", "r:iter", "r:res"});
    }
    SUBCASE("conjugate gradient") {
        std::string t = tg::cg_trace(8, 4);
        CHECK(analyzed_locations(t) == oracle_locations(t));
        std::istringstream in(t);
        auto objs = cf::objects(cf::analyze(in));
        std::set<std::string> names;
        for (const auto& o : objs)
            names.insert(o.name.empty() ? o.loc.str() : o.name);
        CHECK(names == std::set<std::string>{"x", "r", "p", "r:iter", "r:rho"});
    }
}

TEST_CASE("determinism: analyzing the same trace twice gives identical reports") {
    std::string t = tg::jacobi_trace(5, 5, 3);
    std::istringstream a(t), b(t);
    CHECK(cf::format_report(cf::analyze(a), "text") ==
          cf::format_report(cf::analyze(b), "text"));
}

TEST_CASE("report formats") {
    std::istringstream in(kFixture);
    auto cs = cf::analyze(in);
    auto text = cf::format_report(cs, "text");
    CHECK(text.find("r:acc") != std::string::npos);
    CHECK(text.find("buf") != std::string::npos);
    auto tsv = cf::format_report(cs, "tsv");
    CHECK(tsv.find("name\tkind\tlocation\tline") == 0);
    CHECK_THROWS(cf::format_report(cs, "xml"));
}
