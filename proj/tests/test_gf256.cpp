// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ftmatch/gf256.hpp"

using namespace ftmatch;

TEST_CASE("field axioms on samples") {
    // a * inv(a) == 1, distributivity via mul_acc cross-check
    for (unsigned a = 1; a < 256; ++a)
        CHECK(gf256::mul(static_cast<uint8_t>(a), gf256::inv(static_cast<uint8_t>(a))) == 1);
    CHECK(gf256::mul(0, 77) == 0);
    CHECK(gf256::mul(1, 77) == 77);
    CHECK(gf256::pow(2, 0) == 1);
    CHECK(gf256::pow(2, 8) == gf256::mul(gf256::pow(2, 4), gf256::pow(2, 4)));
}

TEST_CASE("mul is commutative and associative on random triples") {
    std::mt19937 rng(42);
    for (int i = 0; i < 2000; ++i) {
        uint8_t a = rng() & 0xff, b = rng() & 0xff, c = rng() & 0xff;
        CHECK(gf256::mul(a, b) == gf256::mul(b, a));
        CHECK(gf256::mul(gf256::mul(a, b), c) == gf256::mul(a, gf256::mul(b, c)));
        CHECK(static_cast<uint8_t>(gf256::mul(a, static_cast<uint8_t>(b ^ c))) ==
              static_cast<uint8_t>(gf256::mul(a, b) ^ gf256::mul(a, c)));
    }
}

TEST_CASE("simd kernel matches scalar reference") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng() % 4096;
        std::vector<uint8_t> src(n), d1(n), d2(n);
        for (auto& v : src) v = rng() & 0xff;
        for (std::size_t i = 0; i < n; ++i) d1[i] = d2[i] = rng() & 0xff;
        uint8_t c = rng() & 0xff;
        gf256::mul_acc_scalar(d1.data(), src.data(), c, n);
        gf256::mul_acc_kernel()(d2.data(), src.data(), c, n);
        CHECK(d1 == d2);
    }
#if defined(__x86_64__)
    if (gf256::kernel_name() == "avx2") {
        // Exhaustive over coefficients at a fixed length.
        std::vector<uint8_t> src(257), d1(257), d2(257);
        std::mt19937 r2(9);
        for (auto& v : src) v = r2() & 0xff;
        for (int c = 0; c < 256; ++c) {
            std::fill(d1.begin(), d1.end(), 0x5a);
            std::fill(d2.begin(), d2.end(), 0x5a);
            gf256::mul_acc_scalar(d1.data(), src.data(), static_cast<uint8_t>(c), src.size());
            gf256::mul_acc_avx2(d2.data(), src.data(), static_cast<uint8_t>(c), src.size());
            CHECK(d1 == d2);
        }
    }
#endif
}
