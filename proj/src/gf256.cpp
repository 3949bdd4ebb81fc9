// SPDX-License-Identifier: Apache-2.0
#include "ftmatch/gf256.hpp"

#include <array>
#include <cstdlib>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#endif

namespace ftmatch::gf256 {
namespace {

constexpr unsigned kPoly = 0x11d;

struct Tables {
    std::array<uint8_t, 256> log{};
    std::array<uint8_t, 512> exp{};
    // mul_table[c][x] = c * x
    std::array<std::array<uint8_t, 256>, 256> mul{};

    Tables() {
        unsigned x = 1;
        for (unsigned i = 0; i < 255; ++i) {
            exp[i] = static_cast<uint8_t>(x);
            log[x] = static_cast<uint8_t>(i);
            x <<= 1;
            if (x & 0x100) x ^= kPoly;
        }
        for (unsigned i = 255; i < 512; ++i) exp[i] = exp[i - 255];
        for (unsigned a = 0; a < 256; ++a)
            for (unsigned b = 0; b < 256; ++b)
                mul[a][b] = (a && b) ? exp[log[a] + log[b]] : 0;
    }
};

const Tables& tables() {
    static const Tables t;
    return t;
}

}  // namespace

uint8_t mul(uint8_t a, uint8_t b) { return tables().mul[a][b]; }

uint8_t inv(uint8_t a) {
    // inv(0) is undefined; callers guard.
    const auto& t = tables();
    return t.exp[255 - t.log[a]];
}

uint8_t pow(uint8_t a, unsigned e) {
    uint8_t r = 1;
    while (e) {
        if (e & 1) r = mul(r, a);
        a = mul(a, a);
        e >>= 1;
    }
    return r;
}

void mul_acc_scalar(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n) {
    if (c == 0) return;
    const uint8_t* row = tables().mul[c].data();
    for (std::size_t i = 0; i < n; ++i) dst[i] ^= row[src[i]];
}

#if defined(__x86_64__) || defined(_M_X64)

__attribute__((target("avx2")))
void mul_acc_avx2(uint8_t* dst, const uint8_t* src, uint8_t c, std::size_t n) {
    if (c == 0) return;
    // Nibble-split product tables: c*x = c*(hi<<4) ^ c*lo.
    alignas(16) uint8_t lo_tab[16], hi_tab[16];
    for (unsigned v = 0; v < 16; ++v) {
        lo_tab[v] = mul(c, static_cast<uint8_t>(v));
        hi_tab[v] = mul(c, static_cast<uint8_t>(v << 4));
    }
    const __m256i lo_t = _mm256_broadcastsi128_si256(_mm_load_si128(reinterpret_cast<const __m128i*>(lo_tab)));
    const __m256i hi_t = _mm256_broadcastsi128_si256(_mm_load_si128(reinterpret_cast<const __m128i*>(hi_tab)));
    const __m256i mask = _mm256_set1_epi8(0x0f);

    std::size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        __m256i s = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(src + i));
        __m256i d = _mm256_loadu_si256(reinterpret_cast<__m256i*>(dst + i));
        __m256i lo = _mm256_shuffle_epi8(lo_t, _mm256_and_si256(s, mask));
        __m256i hi = _mm256_shuffle_epi8(hi_t, _mm256_and_si256(_mm256_srli_epi64(s, 4), mask));
        d = _mm256_xor_si256(d, _mm256_xor_si256(lo, hi));
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(dst + i), d);
    }
    mul_acc_scalar(dst + i, src + i, c, n - i);
}

#endif

namespace {

MulAccFn select_kernel() {
    if (const char* f = std::getenv("FTMATCH_FORCE_SCALAR"); f && f[0] == '1')
        return mul_acc_scalar;
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2")) return mul_acc_avx2;
#endif
    return mul_acc_scalar;
}

}  // namespace

MulAccFn mul_acc_kernel() {
    static const MulAccFn fn = select_kernel();
    return fn;
}

std::string_view kernel_name() {
#if defined(__x86_64__) || defined(_M_X64)
    if (mul_acc_kernel() == mul_acc_avx2) return "avx2";
#endif
    return "scalar";
}

}  // namespace ftmatch::gf256
