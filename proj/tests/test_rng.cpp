// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <set>
#include <string>

#include "gradprint/rng.hpp"

#include "oracles.hpp"

using gradprint::derive_seed;
using gradprint::SplitMix64;

TEST_SUITE("rng") {

TEST_CASE("derive_seed matches the FNV-1a reference") {
    CHECK(derive_seed(0, "") == oracle::fnv1a("0|"));
    CHECK(derive_seed(0, "") == 575418448377379465ull);
    CHECK(derive_seed(42, "layer.q_proj|iter=0|input") ==
          oracle::fnv1a("42|layer.q_proj|iter=0|input"));
    CHECK(derive_seed(42, "layer.q_proj|iter=0|input") == 15837889438310579922ull);
    CHECK(derive_seed(18446744073709551615ull, "x") ==
          oracle::fnv1a("18446744073709551615|x"));
}

TEST_CASE("derive_seed is pure and label-sensitive") {
    CHECK(derive_seed(42, "abc") == derive_seed(42, "abc"));
    // Single-byte label changes flip the seed (spot checks, not guaranteed).
    CHECK(derive_seed(0, "a") != derive_seed(0, "b"));
    CHECK(derive_seed(0, "a") == 5706088319251109944ull);
    CHECK(derive_seed(0, "b") == 5706091617785994577ull);
    CHECK(derive_seed(1, "a") != derive_seed(0, "a"));
    std::set<std::uint64_t> seeds;
    for (char c = 'a'; c <= 'z'; ++c) seeds.insert(derive_seed(7, std::string(1, c)));
    CHECK(seeds.size() == 26);
}

TEST_CASE("splitmix64 stream matches the reference") {
    SplitMix64 rng(1);
    CHECK(rng.next_u64() == 10451216379200822465ull);
    CHECK(rng.next_u64() == 13757245211066428519ull);
    CHECK(rng.next_u64() == 17911839290282890590ull);

    for (std::uint64_t seed : {0ull, 42ull, 0xDEADBEEFull}) {
        SplitMix64 mine(seed);
        oracle::SplitMixRef ref(seed);
        for (int i = 0; i < 200; ++i) CHECK(mine.next_u64() == ref.next());
    }
}

TEST_CASE("uniform draws live in their intervals") {
    SplitMix64 rng(9);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        double u = rng.next_uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / 20000.0 - 0.5) < 0.02);

    SplitMix64 rng2(10);
    for (int i = 0; i < 1000; ++i) {
        double u = rng2.next_uniform_sym();
        REQUIRE(u >= -1.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("box-muller normals have the right first two moments") {
    const int n = 100000;
    SplitMix64 rng(1234);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.next_normal();
        sum += z;
        sq += z * z;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("streams with different seeds diverge immediately") {
    SplitMix64 a(1), b(2);
    CHECK(a.next_u64() != b.next_u64());
}

} // TEST_SUITE
