// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-only oracles. These deliberately re-derive results from first
// principles (published constants, textbook formulas, brute force) so they
// stay independent of the library code paths they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

// FNV-1a 64-bit from the published offset basis and prime.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x00000100000001B3ull;
    }
    return hash;
}

// SplitMix64 from the published reference constants.
struct SplitMixRef {
    std::uint64_t state;
    explicit SplitMixRef(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
};

// Direct-definition DFT: X[k] = sum_j x[j] e^{-2 pi i j k / n}.
inline std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double angle = -2.0 * std::numbers::pi * static_cast<double>(j) *
                           static_cast<double>(k) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        out[k] = acc;
    }
    return out;
}

// L = ||x W^T||_2 computed with plain double loops.
inline double norm_loss(std::span<const double> w, std::size_t m, std::size_t d,
                        std::span<const double> x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double o = 0.0;
        for (std::size_t j = 0; j < d; ++j) o += w[i * d + j] * x[j];
        acc += o * o;
    }
    return std::sqrt(acc);
}

// Central finite differences of L with respect to each W entry.
inline std::vector<double> finite_diff_grad_w(std::vector<double> w, std::size_t m, std::size_t d,
                                              std::span<const double> x, double step) {
    std::vector<double> grad(m * d);
    for (std::size_t idx = 0; idx < w.size(); ++idx) {
        double saved = w[idx];
        w[idx] = saved + step;
        double up = norm_loss(w, m, d, x);
        w[idx] = saved - step;
        double down = norm_loss(w, m, d, x);
        w[idx] = saved;
        grad[idx] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Central finite differences of L with respect to each x entry.
inline std::vector<double> finite_diff_grad_x(std::span<const double> w, std::size_t m,
                                              std::size_t d, std::vector<double> x, double step) {
    std::vector<double> grad(d);
    for (std::size_t j = 0; j < d; ++j) {
        double saved = x[j];
        x[j] = saved + step;
        double up = norm_loss(w, m, d, x);
        x[j] = saved - step;
        double down = norm_loss(w, m, d, x);
        x[j] = saved;
        grad[j] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Two-pass population statistics of the fully materialized outer product.
struct BruteStats {
    double mean = 0.0;
    double stddev = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0; // excess
    double fro_norm = 0.0;
};

inline BruteStats brute_force_stats(std::span<const float> o_hat, std::span<const float> x) {
    std::vector<double> values;
    values.reserve(o_hat.size() * x.size());
    for (float oi : o_hat)
        for (float xj : x) values.push_back(static_cast<double>(oi) * static_cast<double>(xj));

    BruteStats s;
    double n = static_cast<double>(values.size());
    for (double v : values) s.mean += v;
    s.mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, sq = 0.0;
    for (double v : values) {
        double c = v - s.mean;
        double c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
        sq += v * v;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    s.fro_norm = std::sqrt(sq);
    if (m2 > 0.0) {
        s.stddev = std::sqrt(m2);
        s.skewness = m3 / (m2 * s.stddev);
        s.kurtosis = m4 / (m2 * m2) - 3.0;
    }
    return s;
}

// Singular values of an m x d matrix, descending, via Jacobi iteration on the
// d x d Gram matrix.
inline std::vector<double> singular_values(std::span<const double> a, std::size_t m,
                                           std::size_t d) {
    std::vector<double> gram(d * d, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p; q < d; ++q) gram[p * d + q] += a[i * d + p] * a[i * d + q];
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = p; q < d; ++q) gram[q * d + p] = gram[p * d + q];

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += gram[p * d + q] * gram[p * d + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double apq = gram[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                double theta = (gram[q * d + q] - gram[p * d + p]) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (std::size_t i = 0; i < d; ++i) {
                    double aip = gram[i * d + p], aiq = gram[i * d + q];
                    gram[i * d + p] = c * aip - s * aiq;
                    gram[i * d + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    double api = gram[p * d + i], aqi = gram[q * d + i];
                    gram[p * d + i] = c * api - s * aqi;
                    gram[q * d + i] = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> sv(d);
    for (std::size_t i = 0; i < d; ++i) sv[i] = std::sqrt(std::max(0.0, gram[i * d + i]));
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

// Scratch directory that cleans up after itself.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("gradprint_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace oracle
