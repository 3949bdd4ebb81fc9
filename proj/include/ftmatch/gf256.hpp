// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace ftmatch::gf256 {

// Arithmetic in GF(2^8) with the 0x11d reduction polynomial.

uint8_t mul(uint8_t a, uint8_t b);
uint8_t inv(uint8_t a);
uint8_t pow(uint8_t a, unsigned e);

// dst[i] ^= c * src[i] for i in [0, n). The multiply-accumulate inner
// loop of Reed-Solomon encode/decode. A scalar reference kernel always
// exists; on x86 an AVX2 variant is selected at runtime.
using MulAccFn = void (*)(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n);

void mul_acc_scalar(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n);
#if defined(__x86_64__) || defined(_M_X64)
void mul_acc_avx2(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n);
#endif

// Active kernel (runtime-dispatched; honors FTMATCH_FORCE_SCALAR=1).
MulAccFn mul_acc_kernel();
std::string_view kernel_name();

inline void mul_acc(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n) {
    mul_acc_kernel()(dst, src, c, n);
}

}  // namespace ftmatch::gf256
