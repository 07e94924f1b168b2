// SPDX-License-Identifier: Apache-2.0
#pragma once

// The gradient probe. For a weight matrix W [m, d] and input x [d]:
//   o = x * W^T          (per-row dot products)
//   L = ||o||_2
//   G = dL/dW = outer(o / ||o||, x), same shape as W.
// G is rank one, so it is kept factored as (x, o_hat) and never materialized;
// its element statistics follow from the factors.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gradprint/error.hpp"
#include "gradprint/rng.hpp"
#include "gradprint/tensorfile.hpp"

namespace gradprint {

struct GradientFactors {
    std::vector<float> x;     // perturbed input, length d
    std::vector<float> o_hat; // normalized output, length m

    std::size_t out_dim() const { return o_hat.size(); }
    std::size_t in_dim() const { return x.size(); }
    double element(std::size_t i, std::size_t j) const {
        return static_cast<double>(o_hat[i]) * static_cast<double>(x[j]);
    }
    double fro_norm() const {
        double sx = 0.0, so = 0.0;
        for (float v : x) sx += static_cast<double>(v) * v;
        for (float v : o_hat) so += static_cast<double>(v) * v;
        return std::sqrt(sx) * std::sqrt(so);
    }
};

// Raw element moments E[v^k], k = 1..4, mergeable across sources by count
// weighting. Everything downstream (std, skewness, kurtosis, pooled global
// statistics) derives from these.
struct RawMoments {
    double count = 0.0;
    double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;

    void merge(const RawMoments& other) {
        if (other.count == 0.0) return;
        double total = count + other.count;
        double wb = other.count / total;
        m1 += (other.m1 - m1) * wb;
        m2 += (other.m2 - m2) * wb;
        m3 += (other.m3 - m3) * wb;
        m4 += (other.m4 - m4) * wb;
        count = total;
    }
};

struct LayerStats {
    double mean = 0.0;
    double stddev = 0.0;
    double fro_norm = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0; // excess
    bool degenerate = false;
    bool sampled = false;
    std::uint64_t sample_count = 0;
};

inline LayerStats stats_from_moments(const RawMoments& m, double fro_norm, bool sampled,
                                     std::uint64_t sample_count) {
    LayerStats s;
    s.fro_norm = fro_norm;
    s.sampled = sampled;
    s.sample_count = sample_count;
    if (m.count == 0.0) {
        s.degenerate = true;
        return s;
    }
    s.mean = m.m1;
    double variance = m.m2 - m.m1 * m.m1;
    if (variance <= 0.0) {
        // Zero-variance convention: report 0 instead of NaN.
        s.degenerate = true;
        return s;
    }
    s.stddev = std::sqrt(variance);
    double m3c = m.m3 - 3.0 * m.m1 * m.m2 + 2.0 * m.m1 * m.m1 * m.m1;
    double m4c = m.m4 - 4.0 * m.m1 * m.m3 + 6.0 * m.m1 * m.m1 * m.m2 -
                 3.0 * m.m1 * m.m1 * m.m1 * m.m1;
    s.skewness = m3c / (variance * s.stddev);
    s.kurtosis = m4c / (variance * variance) - 3.0;
    return s;
}

inline std::vector<float> forward(std::span<const float> x, const HostTensor& w) {
    const std::size_t m = w.rows(), d = w.cols();
    if (x.size() != d)
        raise(ErrorCode::dimension_mismatch,
              "input has " + std::to_string(x.size()) + " entries, weight expects " +
                  std::to_string(d));
    std::vector<float> o(m);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const float* row = w.values.data() + i * d;
        for (std::size_t j = 0; j < d; ++j)
            acc += static_cast<double>(row[j]) * static_cast<double>(x[j]);
        o[i] = static_cast<float>(acc);
    }
    return o;
}

inline double loss(std::span<const float> o) {
    double acc = 0.0;
    for (float v : o) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
}

inline GradientFactors gradient_factors(std::span<const float> x, std::span<const float> o) {
    double norm = loss(o);
    if (norm == 0.0)
        raise(ErrorCode::degenerate_output, "output vector is zero; gradient undefined");
    GradientFactors gf;
    gf.x.assign(x.begin(), x.end());
    gf.o_hat.resize(o.size());
    for (std::size_t i = 0; i < o.size(); ++i)
        gf.o_hat[i] = static_cast<float>(static_cast<double>(o[i]) / norm);
    return gf;
}

// dL/dx = o_hat * W, length d. Drives the adversarial perturbation.
inline std::vector<float> input_gradient(std::span<const float> o_hat, const HostTensor& w) {
    const std::size_t m = w.rows(), d = w.cols();
    if (o_hat.size() != m)
        raise(ErrorCode::dimension_mismatch,
              "normalized output has " + std::to_string(o_hat.size()) + " entries, weight has " +
                  std::to_string(m) + " rows");
    std::vector<double> acc(d, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double oi = o_hat[i];
        const float* row = w.values.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) acc[j] += oi * static_cast<double>(row[j]);
    }
    std::vector<float> g(d);
    for (std::size_t j = 0; j < d; ++j) g[j] = static_cast<float>(acc[j]);
    return g;
}

namespace detail {

inline RawMoments sampled_moments(const GradientFactors& gf, std::uint64_t n, std::uint64_t seed) {
    const std::uint64_t m = gf.out_dim(), d = gf.in_dim();
    SplitMix64 rng(seed);
    RawMoments moments;
    moments.count = static_cast<double>(n);
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) {
        std::uint64_t i = rng.next_below(m);
        std::uint64_t j = rng.next_below(d);
        double v = gf.element(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        double v2 = v * v;
        s1 += v;
        s2 += v2;
        s3 += v2 * v;
        s4 += v2 * v2;
    }
    double inv = 1.0 / static_cast<double>(n);
    moments.m1 = s1 * inv;
    moments.m2 = s2 * inv;
    moments.m3 = s3 * inv;
    moments.m4 = s4 * inv;
    return moments;
}

// Raw moments of the outer product factor through the element factorization
// E[G^k] = E[o_hat^k] * E[x^k]; O(d + m), no materialization.
inline RawMoments exact_moments(const GradientFactors& gf) {
    auto raw = [](std::span<const float> v, double out[4]) {
        double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
        for (float f : v) {
            double x = f;
            double x2 = x * x;
            s1 += x;
            s2 += x2;
            s3 += x2 * x;
            s4 += x2 * x2;
        }
        double inv = v.empty() ? 0.0 : 1.0 / static_cast<double>(v.size());
        out[0] = s1 * inv;
        out[1] = s2 * inv;
        out[2] = s3 * inv;
        out[3] = s4 * inv;
    };
    double mx[4], mo[4];
    raw(gf.x, mx);
    raw(gf.o_hat, mo);
    RawMoments moments;
    moments.count = static_cast<double>(gf.out_dim()) * static_cast<double>(gf.in_dim());
    moments.m1 = mo[0] * mx[0];
    moments.m2 = mo[1] * mx[1];
    moments.m3 = mo[2] * mx[2];
    moments.m4 = mo[3] * mx[3];
    return moments;
}

} // namespace detail

// Statistics over n index pairs (i, j) drawn uniformly with replacement from
// the seeded stream; the Frobenius norm is always exact via ||x|| * ||o_hat||.
inline LayerStats sampled_stats(const GradientFactors& gf, std::uint64_t n, std::uint64_t seed) {
    if (n < 2) raise(ErrorCode::insufficient_samples, "sample size must be at least 2");
    RawMoments moments = detail::sampled_moments(gf, n, seed);
    return stats_from_moments(moments, gf.fro_norm(), true, n);
}

inline LayerStats exact_stats(const GradientFactors& gf) {
    RawMoments moments = detail::exact_moments(gf);
    return stats_from_moments(moments, gf.fro_norm(), false, 0);
}

} // namespace gradprint
