// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/workloads.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ftmatch::wl {

namespace {

std::span<const uint8_t> as_bytes(const std::vector<double>& v) {
    return {reinterpret_cast<const uint8_t*>(v.data()), v.size() * sizeof(double)};
}

std::vector<double> from_bytes(const sim::Bytes& b) {
    std::vector<double> v(b.size() / sizeof(double));
    std::memcpy(v.data(), b.data(), v.size() * sizeof(double));
    return v;
}

// Sums chunk partial sums gathered in rank order. The chunking (one sum per
// global plane/row) is independent of the decomposition, so the result is
// bitwise identical for any rank count.
double chunked_sum(sim::Rank& r, const std::vector<double>& local_chunks) {
    auto all = r.allgather_doubles(
        std::span<const double>(local_chunks.data(), local_chunks.size()));
    double s = 0;
    for (double c : all) s += c;
    return s;
}

// Assembles the distributed solution in rank order and digests its bytes.
uint64_t solution_digest(sim::Rank& r, const std::vector<double>& local) {
    auto parts = r.allgather(as_bytes(local));
    uint64_t h = 1469598103934665603ull;
    for (const auto& part : parts)
        for (uint8_t byte : part) {
            h ^= byte;
            h *= 1099511628211ull;
        }
    return h;
}

void publish(sim::Rank& r, double answer, double residual, uint64_t dig) {
    sim::Bytes out(24);
    std::memcpy(out.data(), &answer, 8);
    std::memcpy(out.data() + 8, &residual, 8);
    std::memcpy(out.data() + 16, &dig, 8);
    r.set_result(std::move(out));
}

// --- conjugate gradient on a 7-point 3-D Laplacian analog, z-slab split ---

struct Cg {
    int X, Y, Z, lz, z0, n, rank;
    std::vector<double> x, rr, p;  // solution, residual vector, direction
    double rho = 0;

    Cg(const RunSpec& spec, sim::Rank& r) {
        X = spec.dims.x;
        Y = spec.dims.y;
        Z = spec.dims.z;
        n = r.world_size();
        rank = r.id();
        if (X < 1 || Y < 1 || Z < 1) throw std::invalid_argument("bad grid dims");
        if (Z % n != 0)
            throw std::invalid_argument("z extent must divide by the rank count");
        lz = Z / n;
        z0 = rank * lz;
        std::size_t cells = static_cast<std::size_t>(lz) * Y * X;
        x.assign(cells, 0.0);
        rr.assign(cells, 1.0);  // b = 1 everywhere, x0 = 0 -> r = b
        p = rr;
        rho = plane_dot(r, rr, rr);
    }

    std::size_t at(int zl, int y, int xi) const {
        return (static_cast<std::size_t>(zl) * Y + y) * X + xi;
    }

    double plane_dot(sim::Rank& r, const std::vector<double>& a,
                     const std::vector<double>& b) const {
        std::vector<double> planes(lz, 0.0);
        for (int zl = 0; zl < lz; ++zl) {
            double s = 0;
            for (int y = 0; y < Y; ++y)
                for (int xi = 0; xi < X; ++xi) s += a[at(zl, y, xi)] * b[at(zl, y, xi)];
            planes[zl] = s;
        }
        return chunked_sum(r, planes);
    }

    // Halo planes of `v` from the z neighbors (Dirichlet zero at the ends).
    void halo(sim::Rank& r, const std::vector<double>& v, std::vector<double>& lo,
              std::vector<double>& hi) const {
        std::size_t plane = static_cast<std::size_t>(Y) * X;
        lo.assign(plane, 0.0);
        hi.assign(plane, 0.0);
        if (rank + 1 < n) {
            std::vector<double> top(v.end() - static_cast<long>(plane), v.end());
            r.send(rank + 1, 0, as_bytes(top));
        }
        if (rank > 0) {
            std::vector<double> bottom(v.begin(), v.begin() + static_cast<long>(plane));
            r.send(rank - 1, 1, as_bytes(bottom));
        }
        if (rank > 0) lo = from_bytes(r.recv(rank - 1, 0));
        if (rank + 1 < n) hi = from_bytes(r.recv(rank + 1, 1));
    }

    void iterate(sim::Rank& r, long /*k*/) {
        std::vector<double> lo, hi;
        halo(r, p, lo, hi);
        std::size_t cells = x.size();
        std::vector<double> Ap(cells);
        for (int zl = 0; zl < lz; ++zl)
            for (int y = 0; y < Y; ++y)
                for (int xi = 0; xi < X; ++xi) {
                    double up = zl > 0 ? p[at(zl - 1, y, xi)]
                                       : (lo.empty() ? 0.0 : lo[static_cast<std::size_t>(y) * X + xi]);
                    double dn = zl + 1 < lz
                                    ? p[at(zl + 1, y, xi)]
                                    : (hi.empty() ? 0.0 : hi[static_cast<std::size_t>(y) * X + xi]);
                    double no = y > 0 ? p[at(zl, y - 1, xi)] : 0.0;
                    double so = y + 1 < Y ? p[at(zl, y + 1, xi)] : 0.0;
                    double we = xi > 0 ? p[at(zl, y, xi - 1)] : 0.0;
                    double ea = xi + 1 < X ? p[at(zl, y, xi + 1)] : 0.0;
                    Ap[at(zl, y, xi)] = 6.0 * p[at(zl, y, xi)] - up - dn - no - so - we - ea;
                }
        double pAp = plane_dot(r, p, Ap);
        double alpha = pAp != 0.0 ? rho / pAp : 0.0;
        for (std::size_t i = 0; i < cells; ++i) {
            x[i] += alpha * p[i];
            rr[i] -= alpha * Ap[i];
        }
        double rho_new = plane_dot(r, rr, rr);
        double beta = rho != 0.0 ? rho_new / rho : 0.0;
        for (std::size_t i = 0; i < cells; ++i) p[i] = rr[i] + beta * p[i];
        rho = rho_new;
        r.charge(sim::Category::App, r.cost().compute_per_element * static_cast<double>(cells));
    }

    void protect(ckpt::Context& ctx) {
        ctx.protect(0, "x", x.data(), x.size() * sizeof(double));
        ctx.protect(1, "r", rr.data(), rr.size() * sizeof(double));
        ctx.protect(2, "p", p.data(), p.size() * sizeof(double));
        ctx.protect(3, "rho", &rho, sizeof rho);
    }

    void finish(sim::Rank& r) {
        std::vector<double> planes(lz, 0.0);
        for (int zl = 0; zl < lz; ++zl) {
            double s = 0;
            for (int y = 0; y < Y; ++y)
                for (int xi = 0; xi < X; ++xi) s += x[at(zl, y, xi)];
            planes[zl] = s;
        }
        double answer = chunked_sum(r, planes);
        publish(r, answer, std::sqrt(rho), solution_digest(r, x));
    }

    double residual() const { return std::sqrt(rho); }
};

// --- 5-point Jacobi sweep on a 2-D grid, row-block split ---

struct Jacobi {
    int X, Y, lx, x0, n, rank;  // X rows, Y cols; rows split over ranks
    std::vector<double> cur, nxt;
    double res = 0;

    Jacobi(const RunSpec& spec, sim::Rank& r) {
        X = spec.dims.x;
        Y = spec.dims.y;
        n = r.world_size();
        rank = r.id();
        if (X < 3 || Y < 3) throw std::invalid_argument("grid too small");
        if (X % n != 0)
            throw std::invalid_argument("row count must divide by the rank count");
        lx = X / n;
        x0 = rank * lx;
        cur.assign(static_cast<std::size_t>(lx) * Y, 0.0);
        if (rank == 0)
            for (int j = 0; j < Y; ++j) cur[j] = spec.jacobi_boundary;  // top edge
        nxt = cur;
    }

    std::size_t at(int il, int j) const { return static_cast<std::size_t>(il) * Y + j; }

    void iterate(sim::Rank& r, long /*k*/) {
        std::vector<double> lo(Y, 0.0), hi(Y, 0.0);
        if (rank + 1 < n) {
            std::vector<double> bottom(cur.end() - Y, cur.end());
            r.send(rank + 1, 0, as_bytes(bottom));
        }
        if (rank > 0) {
            std::vector<double> top(cur.begin(), cur.begin() + Y);
            r.send(rank - 1, 1, as_bytes(top));
        }
        if (rank > 0) lo = from_bytes(r.recv(rank - 1, 0));
        if (rank + 1 < n) hi = from_bytes(r.recv(rank + 1, 1));

        std::vector<double> rows(lx, 0.0);
        for (int il = 0; il < lx; ++il) {
            int gi = x0 + il;
            double rowsum = 0;
            for (int j = 0; j < Y; ++j) {
                if (gi == 0 || gi == X - 1 || j == 0 || j == Y - 1) {
                    nxt[at(il, j)] = cur[at(il, j)];  // fixed boundary
                    continue;
                }
                double up = il > 0 ? cur[at(il - 1, j)] : lo[j];
                double dn = il + 1 < lx ? cur[at(il + 1, j)] : hi[j];
                double v = 0.25 * (up + dn + cur[at(il, j - 1)] + cur[at(il, j + 1)]);
                double d = v - cur[at(il, j)];
                rowsum += d * d;
                nxt[at(il, j)] = v;
            }
            rows[il] = rowsum;
        }
        res = chunked_sum(r, rows);
        cur = nxt;  // copy-back keeps the protected pointers stable
        r.charge(sim::Category::App,
                 r.cost().compute_per_element * static_cast<double>(cur.size()));
    }

    // The scratch plane is fully rewritten every sweep before use, so only
    // the current plane and the residual accumulator need preserving.
    void protect(ckpt::Context& ctx) {
        ctx.protect(0, "grid", cur.data(), cur.size() * sizeof(double));
        ctx.protect(1, "res", &res, sizeof res);
    }

    void finish(sim::Rank& r) {
        std::vector<double> rows(lx, 0.0);
        for (int il = 0; il < lx; ++il) {
            double s = 0;
            for (int j = 0; j < Y; ++j) s += cur[at(il, j)];
            rows[il] = s;
        }
        double answer = chunked_sum(r, rows);
        publish(r, answer, std::sqrt(res), solution_digest(r, cur));
    }
};

// The resilient skeleton shared by both kernels: init, status/recover, loop
// with injection at the head, checkpoint every `interval` iterations.
template <class Kernel>
sim::Program make_program(RunSpec spec, std::shared_ptr<fi::Injector> inj) {
    return [spec, inj](sim::Rank& r) {
        Kernel kern(spec, r);
        long k = 0;
        ckpt::Config cfg{spec.store_root, spec.level, 4};
        auto& ctx = ckpt::Context::attach(r, cfg);
        kern.protect(ctx);
        ctx.protect(100, "iter", &k, sizeof k);
        if (ctx.status(r).restart) ctx.recover(r);
        while (k < spec.iters) {
            ++k;
            inj->maybe_inject(r, k);
            if (spec.policy == rec::Policy::Ulfm)
                r.charge(sim::Category::App, r.cost().ulfm_heartbeat_per_step_per_rank *
                                                 static_cast<double>(r.world_size()));
            kern.iterate(r, k);
            if (spec.interval > 0 && k % spec.interval == 0) ctx.checkpoint(r, k);
        }
        kern.finish(r);
    };
}

}  // namespace

Dims desk_default(const std::string& workload) {
    if (workload == "cg") return {16, 16, 16};
    if (workload == "jacobi") return {64, 64, 0};
    throw std::invalid_argument("unknown workload: " + workload);
}

Dims parse_input(const std::string& workload, const std::string& input) {
    if (workload != "cg" && workload != "jacobi")
        throw std::invalid_argument("unknown workload: " + workload);
    bool cg = workload == "cg";
    if (input.empty() || input == "desk") return desk_default(workload);
    if (input == "small") return cg ? Dims{64, 64, 64} : Dims{64, 64, 0};
    if (input == "medium") return cg ? Dims{128, 128, 128} : Dims{128, 128, 0};
    if (input == "large") return cg ? Dims{192, 192, 192} : Dims{192, 192, 0};
    Dims d;
    char sep = 0;
    std::size_t pos = 0;
    auto next_int = [&](bool required) {
        std::size_t used = 0;
        int v = std::stoi(input.substr(pos), &used);
        pos += used;
        if (required && pos < input.size()) {
            sep = input[pos];
            if (sep != 'x' && sep != 'X')
                throw std::invalid_argument("bad input spec: " + input);
            ++pos;
        }
        return v;
    };
    try {
        d.x = next_int(true);
        d.y = next_int(false);
        if (pos < input.size() && (input[pos] == 'x' || input[pos] == 'X')) {
            ++pos;
            d.z = next_int(false);
        }
        if (pos != input.size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
        throw std::invalid_argument("bad input spec: " + input);
    }
    if (cg && d.z == 0) throw std::invalid_argument("3-D input needs WxHxD: " + input);
    return d;
}

ResultRecord run(const RunSpec& spec) {
    if (spec.interval < 1) throw std::invalid_argument("checkpoint interval must be >= 1");
    if (spec.nranks < 1) throw std::invalid_argument("need at least one rank");
    if (spec.workload == "cg") {
        if (spec.dims.x < 1 || spec.dims.y < 1 || spec.dims.z < 1)
            throw std::invalid_argument("bad grid dims");
        if (spec.dims.z % spec.nranks != 0)
            throw std::invalid_argument("z extent must divide by the rank count");
    } else if (spec.workload == "jacobi") {
        if (spec.dims.x < 3 || spec.dims.y < 3)
            throw std::invalid_argument("grid too small");
        if (spec.dims.x % spec.nranks != 0)
            throw std::invalid_argument("row count must divide by the rank count");
    }
    auto inj = std::make_shared<fi::Injector>(spec.fault, spec.nranks, spec.iters);
    sim::WorldOptions opts;
    opts.cost = spec.cost;
    opts.seed = spec.seed;
    sim::Program prog;
    if (spec.workload == "cg") prog = make_program<Cg>(spec, inj);
    else if (spec.workload == "jacobi") prog = make_program<Jacobi>(spec, inj);
    else throw std::invalid_argument("unknown workload: " + spec.workload);

    auto res = rec::run_with_policy(spec.nranks, spec.policy, std::move(prog), opts);
    ResultRecord out;
    out.completed = res.completed;
    out.iterations = spec.iters;
    out.incarnations = res.incarnations;
    out.clocks = res.clocks;
    out.fault_events = res.fault_events;
    for (const auto& c : res.clocks) {
        out.critical_path.app = std::max(out.critical_path.app, c.app);
        out.critical_path.ckpt_write = std::max(out.critical_path.ckpt_write, c.ckpt_write);
        out.critical_path.ckpt_read = std::max(out.critical_path.ckpt_read, c.ckpt_read);
        out.critical_path.recovery = std::max(out.critical_path.recovery, c.recovery);
    }
    if (res.completed && res.results[0]) {
        const sim::Bytes& b = *res.results[0];
        if (b.size() == 24) {
            std::memcpy(&out.answer, b.data(), 8);
            std::memcpy(&out.residual, b.data() + 8, 8);
            std::memcpy(&out.solution_digest, b.data() + 16, 8);
        }
    }
    return out;
}

}  // namespace ftmatch::wl
