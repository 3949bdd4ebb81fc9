// SPDX-License-Identifier: Apache-2.0
//
// Synthetic dynamic-trace generators: tiny serial analogs of the two
// workloads, emitting the line-based trace grammar the analyzer consumes.
#pragma once

#include <string>

namespace ftmatch::tg {

// Five-point stencil sweep on an nx * ny grid. The trace's checkpoint set
// is {grid allocation, iteration counter, residual accumulator}.
std::string jacobi_trace(int nx, int ny, int iters);

// Conjugate-gradient iteration on a 1-D Laplacian of size n. The trace's
// checkpoint set is {x, r, p allocations, iteration counter, rho}.
std::string cg_trace(int n, int iters);

}  // namespace ftmatch::tg
