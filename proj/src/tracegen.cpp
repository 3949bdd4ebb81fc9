// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/tracegen.hpp"

#include <cstdint>
#include <sstream>
#include <vector>

namespace ftmatch::tg {

namespace {

// Emits trace lines with a running sequence number.
class Emitter {
  public:
    void alloc(uint64_t base, uint64_t len, const std::string& name) {
        os_ << "M " << seq_++ << " ALLOC 0x" << std::hex << base << std::dec << " "
            << len << " " << name << "\n";
    }
    void loop_begin() { os_ << "M " << seq_++ << " LOOP_BEGIN\n"; }
    void iter_begin(long k) { os_ << "M " << seq_++ << " ITER_BEGIN " << k << "\n"; }

    class Record {
      public:
        Record(Emitter& e, int line, const std::string& opcode) : e_(e) {
            e_.os_ << "R " << e_.seq_++ << " " << line << " " << opcode;
        }
        Record& read_reg(const std::string& name, double v) {
            return add(reads_, "r:" + name, v);
        }
        Record& read_mem(uint64_t addr, double v) {
            return add(reads_, mem(addr), v);
        }
        Record& write_reg(const std::string& name, double v) {
            return add(writes_, "r:" + name, v);
        }
        Record& write_mem(uint64_t addr, double v) {
            return add(writes_, mem(addr), v);
        }
        ~Record() {
            e_.os_ << " | reads: " << reads_ << " | writes: " << writes_ << "\n";
        }

      private:
        static std::string mem(uint64_t addr) {
            std::ostringstream os;
            os << "m:0x" << std::hex << addr;
            return os.str();
        }
        Record& add(std::string& dst, const std::string& key, double v) {
            std::ostringstream os;
            os.precision(17);
            os << v;
            if (!dst.empty()) dst += ",";
            dst += key + "=" + os.str();
            return *this;
        }
        Emitter& e_;
        std::string reads_;
        std::string writes_;
    };

    Record record(int line, const std::string& opcode) { return {*this, line, opcode}; }
    std::string str() const { return os_.str(); }

  private:
    std::ostringstream os_;
    long seq_ = 0;
};

}  // namespace

std::string jacobi_trace(int nx, int ny, int iters) {
    Emitter e;
    constexpr uint64_t kGrid = 0x10000;
    constexpr uint64_t kScratch = 0x90000;
    auto cell = [&](uint64_t base, int i, int j) {
        return base + static_cast<uint64_t>((i * ny + j) * 8);
    };

    std::vector<double> g(static_cast<std::size_t>(nx) * ny, 0.0);
    for (int j = 0; j < ny; ++j) g[static_cast<std::size_t>(j)] = 1.0;  // hot top row

    e.alloc(kGrid, static_cast<uint64_t>(nx) * ny * 8, "grid");
    e.record(12, "store").write_reg("iter", 0);
    e.record(13, "store").write_reg("res", 0);
    e.loop_begin();

    double res = 0;
    for (long k = 1; k <= iters; ++k) {
        e.iter_begin(k);
        // Scratch plane allocated inside the loop: not checkpoint-worthy.
        e.alloc(kScratch, static_cast<uint64_t>(nx) * ny * 8, "scratch");
        std::vector<double> nxt = g;
        double sweep = 0;
        for (int i = 1; i < nx - 1; ++i)
            for (int j = 1; j < ny - 1; ++j) {
                double v = 0.25 * (g[(i - 1) * ny + j] + g[(i + 1) * ny + j] +
                                   g[i * ny + j - 1] + g[i * ny + j + 1]);
                e.record(21, "stencil")
                    .read_mem(cell(kGrid, i - 1, j), g[(i - 1) * ny + j])
                    .read_mem(cell(kGrid, i + 1, j), g[(i + 1) * ny + j])
                    .read_mem(cell(kGrid, i, j - 1), g[i * ny + j - 1])
                    .read_mem(cell(kGrid, i, j + 1), g[i * ny + j + 1])
                    .write_mem(cell(kScratch, i, j), v);
                sweep += (v - g[i * ny + j]) * (v - g[i * ny + j]);
                nxt[i * ny + j] = v;
            }
        for (int i = 1; i < nx - 1; ++i)
            for (int j = 1; j < ny - 1; ++j)
                e.record(26, "copy")
                    .read_mem(cell(kScratch, i, j), nxt[i * ny + j])
                    .write_mem(cell(kGrid, i, j), nxt[i * ny + j]);
        g = nxt;
        double old = res;
        res += sweep;
        e.record(29, "fadd").read_reg("res", old).write_reg("res", res);
        e.record(30, "store").write_reg("iter", static_cast<double>(k));
    }
    return e.str();
}

std::string cg_trace(int n, int iters) {
    Emitter e;
    constexpr uint64_t kX = 0x10000, kR = 0x20000, kP = 0x30000, kB = 0x40000,
                       kAp = 0x90000;
    auto at = [](uint64_t base, int i) { return base + static_cast<uint64_t>(i) * 8; };

    std::vector<double> b(n), x(n, 0.0), r(n), p(n);
    for (int i = 0; i < n; ++i) b[i] = 1.0 + 0.5 * i;
    r = b;
    p = r;
    double rho = 0;
    for (int i = 0; i < n; ++i) rho += r[i] * r[i];

    e.alloc(kX, static_cast<uint64_t>(n) * 8, "x");
    e.alloc(kR, static_cast<uint64_t>(n) * 8, "r");
    e.alloc(kP, static_cast<uint64_t>(n) * 8, "p");
    e.alloc(kB, static_cast<uint64_t>(n) * 8, "b");
    for (int i = 0; i < n; ++i) {
        e.record(40, "init")
            .read_mem(at(kB, i), b[i])
            .write_mem(at(kX, i), 0)
            .write_mem(at(kR, i), r[i])
            .write_mem(at(kP, i), p[i]);
    }
    e.record(44, "dot").write_reg("rho", rho);
    e.record(45, "store").write_reg("iter", 0);
    e.loop_begin();

    // 1-D Laplacian: A = tridiag(-1, 2, -1).
    for (long k = 1; k <= iters; ++k) {
        e.iter_begin(k);
        e.alloc(kAp, static_cast<uint64_t>(n) * 8, "Ap");
        std::vector<double> Ap(n);
        double pAp = 0;
        for (int i = 0; i < n; ++i) {
            double v = 2 * p[i] - (i > 0 ? p[i - 1] : 0) - (i + 1 < n ? p[i + 1] : 0);
            Ap[i] = v;
            pAp += p[i] * v;
            e.record(52, "spmv").read_mem(at(kP, i), p[i]).write_mem(at(kAp, i), v);
        }
        double alpha = rho / pAp;
        e.record(55, "fdiv").read_reg("rho", rho).write_reg("alpha", alpha);
        double rho_new = 0;
        for (int i = 0; i < n; ++i) {
            double xn = x[i] + alpha * p[i];
            double rn = r[i] - alpha * Ap[i];
            e.record(58, "axpy")
                .read_mem(at(kX, i), x[i])
                .read_mem(at(kAp, i), Ap[i])
                .write_mem(at(kX, i), xn)
                .write_mem(at(kR, i), rn);
            x[i] = xn;
            r[i] = rn;
            rho_new += rn * rn;
        }
        double beta = rho_new / rho;
        for (int i = 0; i < n; ++i) {
            double pn = r[i] + beta * p[i];
            e.record(63, "axpy").read_mem(at(kR, i), r[i]).write_mem(at(kP, i), pn);
            p[i] = pn;
        }
        e.record(65, "dot").read_reg("rho", rho).write_reg("rho", rho_new);
        rho = rho_new;
        e.record(66, "store").write_reg("iter", static_cast<double>(k));
    }
    return e.str();
}

}  // namespace ftmatch::tg
