// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic randomness for the whole pipeline. Every consumer derives a
// 64-bit stream seed from (global_seed, label) via FNV-1a and draws from an
// independent SplitMix64 stream, so results are reproducible across runs,
// platforms, and thread counts.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

namespace gradprint {

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = kFnvOffsetBasis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

// FNV-1a over "<global_seed as decimal>|<label>".
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view label) {
    std::string text = std::to_string(global_seed);
    text.push_back('|');
    text.append(label);
    return fnv1a64(text);
}

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [-1, 1).
    double next_uniform_sym() { return 2.0 * next_uniform01() - 1.0; }

    std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

    // Standard normal via Box-Muller on consecutive uniform pairs; the second
    // variate of each pair is cached.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform01();
        double u2 = next_uniform01();
        double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace gradprint
