// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic pseudorandom layer inputs and the perturbation strategies
// applied to them. Five strategies participate in random selection; uniform
// random noise is kept as a separate baseline and is never auto-selected.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradprint/error.hpp"
#include "gradprint/gradsig.hpp"
#include "gradprint/rng.hpp"
#include "gradprint/tensorfile.hpp"

namespace gradprint {

enum class NoiseKind {
    adversarial = 0,
    structural,
    low_frequency,
    high_frequency,
    gaussian,
    uniform_random, // baseline only
};

inline const char* to_string(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::adversarial: return "adversarial";
    case NoiseKind::structural: return "structural";
    case NoiseKind::low_frequency: return "low_frequency";
    case NoiseKind::high_frequency: return "high_frequency";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::uniform_random: return "uniform_random";
    }
    return "?";
}

struct NoiseParams {
    float epsilon = 0.05f;       // adversarial / uniform magnitude
    float sigma = 0.1f;          // gaussian std
    float weight = 0.5f;         // blend / injection weight
    float keep_fraction = 0.25f; // structural low-pass cutoff fraction
    int cycles = 2;              // low-frequency sine cycles
};

struct NoiseStrategy {
    NoiseKind kind = NoiseKind::gaussian;
    NoiseParams params;
};

// d standard-normal draws from the seeded stream.
inline std::vector<float> base_input(std::uint64_t seed, std::size_t d) {
    SplitMix64 rng(seed);
    std::vector<float> x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = static_cast<float>(rng.next_normal());
    return x;
}

// Uniform choice among the five auto-selectable strategies, from the stream
// seeded with derive_seed(seed, "<layer>|iter=<iter>|strategy").
inline NoiseKind select_strategy_kind(std::uint64_t seed, std::string_view layer, int iter) {
    std::string label(layer);
    label += "|iter=" + std::to_string(iter) + "|strategy";
    SplitMix64 rng(derive_seed(seed, label));
    return static_cast<NoiseKind>(rng.next_below(5));
}

inline NoiseStrategy select_strategy(std::uint64_t seed, std::string_view layer, int iter,
                                     const NoiseParams& params = {}) {
    return {select_strategy_kind(seed, layer, iter), params};
}

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        std::complex<double> step(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= step;
            }
        }
    }
    if (inverse)
        for (auto& z : a) z /= static_cast<double>(n);
}

inline std::vector<std::complex<double>> dft_naive(std::span<const std::complex<double>> x,
                                                   bool inverse) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    double sign = inverse ? 2.0 : -2.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double angle = sign * std::numbers::pi * static_cast<double>(j) *
                           static_cast<double>(k) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

inline std::vector<std::complex<double>> dft(std::vector<std::complex<double>> x, bool inverse) {
    if (is_pow2(x.size())) {
        fft_radix2(x, inverse);
        return x;
    }
    return dft_naive(x, inverse);
}

} // namespace detail

// DFT-based low-pass smoothing blended into the input: zero every bin whose
// half-spectrum frequency index exceeds keep_fraction * (d / 2), mirror for
// conjugate symmetry, reconstruct, then x' = (1 - w) x + w x_smooth.
inline std::vector<float> structural_smooth(std::span<const float> x, float keep_fraction,
                                            float weight) {
    const std::size_t d = x.size();
    std::vector<std::complex<double>> spectrum(d);
    for (std::size_t j = 0; j < d; ++j) spectrum[j] = std::complex<double>(x[j], 0.0);
    spectrum = detail::dft(std::move(spectrum), false);

    double cutoff = static_cast<double>(keep_fraction) * (static_cast<double>(d) / 2.0);
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t freq = std::min(k, d - k);
        if (static_cast<double>(freq) > cutoff) spectrum[k] = {0.0, 0.0};
    }
    spectrum = detail::dft(std::move(spectrum), true);

    std::vector<float> out(d);
    double w = weight;
    for (std::size_t j = 0; j < d; ++j)
        out[j] = static_cast<float>((1.0 - w) * static_cast<double>(x[j]) +
                                    w * spectrum[j].real());
    return out;
}

inline std::vector<float> apply_noise(std::span<const float> x, const NoiseStrategy& strategy,
                                      std::uint64_t stream_seed, const HostTensor* w = nullptr) {
    const std::size_t d = x.size();
    const NoiseParams& p = strategy.params;
    std::vector<float> out(x.begin(), x.end());

    switch (strategy.kind) {
    case NoiseKind::adversarial: {
        if (!w)
            raise(ErrorCode::missing_weight, "adversarial noise needs the layer weight matrix");
        std::vector<float> o = forward(x, *w);
        double norm = loss(o);
        if (norm == 0.0) break; // flat loss surface, sign(0) = 0 everywhere
        GradientFactors gf = gradient_factors(x, o);
        std::vector<float> grad = input_gradient(gf.o_hat, *w);
        for (std::size_t j = 0; j < d; ++j) {
            float g = grad[j];
            float sign = (g > 0.0f) ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
            out[j] = x[j] + p.epsilon * sign;
        }
        break;
    }
    case NoiseKind::structural:
        out = structural_smooth(x, p.keep_fraction, p.weight);
        break;
    case NoiseKind::low_frequency: {
        for (std::size_t j = 0; j < d; ++j) {
            double phase = 2.0 * std::numbers::pi * static_cast<double>(p.cycles) *
                           static_cast<double>(j) / static_cast<double>(d);
            out[j] = static_cast<float>(static_cast<double>(x[j]) +
                                        static_cast<double>(p.weight) * std::sin(phase));
        }
        break;
    }
    case NoiseKind::high_frequency:
        for (std::size_t j = 0; j < d; ++j)
            out[j] = x[j] + (j % 2 == 0 ? p.weight : -p.weight);
        break;
    case NoiseKind::gaussian: {
        SplitMix64 rng(stream_seed);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = static_cast<float>(static_cast<double>(x[j]) +
                                        static_cast<double>(p.sigma) * rng.next_normal());
        break;
    }
    case NoiseKind::uniform_random: {
        SplitMix64 rng(stream_seed);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = static_cast<float>(static_cast<double>(x[j]) +
                                        static_cast<double>(p.epsilon) * rng.next_uniform_sym());
        break;
    }
    }
    return out;
}

} // namespace gradprint
