// SPDX-License-Identifier: Apache-2.0
#pragma once

// Family classification: per-feature z-score normalization, PCA onto a small
// basis, Lloyd's K-Means seeded from known base-model fingerprints, and
// thresholded nearest-centroid attribution with an out-of-cluster verdict.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradprint/error.hpp"
#include "gradprint/fingerprint.hpp"
#include "gradprint/rng.hpp"

namespace gradprint {

inline constexpr std::size_t kFeatureCount = 16;
inline constexpr double kConfidenceCap = 1e300;

using FeatureVector = std::array<double, kFeatureCount>;

struct Normalizer {
    FeatureVector means{};
    FeatureVector stds{};

    // Degenerate features (zero spread in the reference set) map to 0.
    FeatureVector apply(const FeatureVector& v) const {
        FeatureVector out{};
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            out[f] = stds[f] > 0.0 ? (v[f] - means[f]) / stds[f] : 0.0;
        return out;
    }
};

inline Normalizer fit_normalizer(std::span<const FeatureVector> vectors) {
    if (vectors.empty()) raise(ErrorCode::empty_input, "cannot fit a normalizer on no vectors");
    Normalizer norm;
    const double n = static_cast<double>(vectors.size());
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        double mean = 0.0;
        for (const auto& v : vectors) mean += v[f];
        mean /= n;
        double var = 0.0;
        for (const auto& v : vectors) var += (v[f] - mean) * (v[f] - mean);
        var /= n; // population
        norm.means[f] = mean;
        norm.stds[f] = std::sqrt(var);
    }
    return norm;
}

struct PcaBasis {
    FeatureVector mean{};
    std::vector<FeatureVector> components; // k orthonormal rows
    std::vector<double> explained_variance;

    std::size_t k() const { return components.size(); }
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
// (eigenvalue, eigenvector) pairs sorted by eigenvalue, descending.
inline void jacobi_eigen_sym(std::vector<double> a, std::size_t n,
                             std::vector<double>& eigenvalues,
                             std::vector<std::vector<double>>& eigenvectors) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        return s;
    };

    double scale = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(a[i]));
    const double tol = std::max(1e-300, scale * scale * 1e-30);

    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                double app = a[p * n + p], aqq = a[q * n + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;

                for (std::size_t i = 0; i < n; ++i) {
                    double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vip = v[i * n + p], viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return a[x * n + x] > a[y * n + y];
    });

    eigenvalues.resize(n);
    eigenvectors.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t rank = 0; rank < n; ++rank) {
        std::size_t col = order[rank];
        eigenvalues[rank] = a[col * n + col];
        for (std::size_t i = 0; i < n; ++i) eigenvectors[rank][i] = v[i * n + col];
    }
}

} // namespace detail

inline PcaBasis fit_pca(std::span<const FeatureVector> x, std::size_t k = 2) {
    const std::size_t n = x.size();
    if (n < 2 || k < 1 || k > std::min(n - 1, kFeatureCount))
        raise(ErrorCode::insufficient_samples,
              "PCA needs at least 2 samples and k <= min(N-1, 16); got N=" + std::to_string(n) +
                  ", k=" + std::to_string(k));

    PcaBasis basis;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        double mean = 0.0;
        for (const auto& v : x) mean += v[f];
        basis.mean[f] = mean / static_cast<double>(n);
    }

    std::vector<double> cov(kFeatureCount * kFeatureCount, 0.0);
    for (const auto& v : x) {
        FeatureVector c;
        for (std::size_t f = 0; f < kFeatureCount; ++f) c[f] = v[f] - basis.mean[f];
        for (std::size_t i = 0; i < kFeatureCount; ++i)
            for (std::size_t j = i; j < kFeatureCount; ++j) cov[i * kFeatureCount + j] += c[i] * c[j];
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        for (std::size_t j = i; j < kFeatureCount; ++j) {
            double val = cov[i * kFeatureCount + j] / static_cast<double>(n); // population
            cov[i * kFeatureCount + j] = val;
            cov[j * kFeatureCount + i] = val;
        }

    std::vector<double> eigenvalues;
    std::vector<std::vector<double>> eigenvectors;
    detail::jacobi_eigen_sym(std::move(cov), kFeatureCount, eigenvalues, eigenvectors);

    for (std::size_t rank = 0; rank < k; ++rank) {
        FeatureVector row{};
        for (std::size_t i = 0; i < kFeatureCount; ++i) row[i] = eigenvectors[rank][i];
        // Deterministic sign: the largest-magnitude entry is positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < kFeatureCount; ++i)
            if (std::abs(row[i]) > std::abs(row[arg])) arg = i;
        if (row[arg] < 0.0)
            for (auto& e : row) e = -e;
        basis.components.push_back(row);
        basis.explained_variance.push_back(eigenvalues[rank]);
    }
    return basis;
}

inline std::vector<double> project(const PcaBasis& basis, const FeatureVector& v) {
    std::vector<double> out(basis.k(), 0.0);
    for (std::size_t c = 0; c < basis.k(); ++c) {
        double acc = 0.0;
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            acc += basis.components[c][f] * (v[f] - basis.mean[f]);
        out[c] = acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// K-Means (Lloyd)

struct KMeansResult {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> centroids;
    std::vector<double> inertia_trace; // recorded after each assignment step
    std::size_t iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

inline KMeansResult lloyd(const std::vector<std::vector<double>>& points,
                          std::vector<std::vector<double>> centroids, std::size_t max_iter = 300,
                          double tol = 1e-6) {
    KMeansResult result;
    result.centroids = std::move(centroids);
    const std::size_t n = points.size();
    const std::size_t f = result.centroids.size();
    result.labels.assign(n, 0);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = sq_dist(points[i], result.centroids[0]);
            for (std::size_t c = 1; c < f; ++c) {
                double d = sq_dist(points[i], result.centroids[c]);
                if (d < best_d) { // ties keep the lowest index
                    best_d = d;
                    best = c;
                }
            }
            result.labels[i] = best;
            inertia += best_d;
        }
        result.inertia_trace.push_back(inertia);
        result.iterations = iter + 1;

        double movement = 0.0;
        for (std::size_t c = 0; c < f; ++c) {
            std::vector<double> mean(result.centroids[c].size(), 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (result.labels[i] != c) continue;
                for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += points[i][d];
                ++count;
            }
            if (count == 0) continue; // empty cluster keeps its previous centroid
            for (auto& m : mean) m /= static_cast<double>(count);
            movement = std::max(movement, std::sqrt(sq_dist(mean, result.centroids[c])));
            result.centroids[c] = std::move(mean);
        }
        if (movement < tol) break;
    }
    return result;
}

} // namespace detail

inline KMeansResult standard_kmeans(const std::vector<std::vector<double>>& points, std::size_t f,
                                    std::uint64_t seed) {
    if (f == 0 || points.size() < f)
        raise(ErrorCode::too_few_points,
              "need at least " + std::to_string(f) + " points, got " + std::to_string(points.size()));
    // Random init from distinct data points.
    SplitMix64 rng(seed);
    std::vector<std::size_t> idx(points.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < f; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::vector<double>> init;
    init.reserve(f);
    for (std::size_t i = 0; i < f; ++i) init.push_back(points[idx[i]]);
    return detail::lloyd(points, std::move(init));
}

// Accuracy of a clustering against true family indices, maximized over all
// cluster -> family bijections. Used to score label-free baselines.
inline double best_permutation_accuracy(std::span<const std::size_t> cluster_labels,
                                        std::span<const std::size_t> true_families,
                                        std::size_t f) {
    if (cluster_labels.size() != true_families.size() || cluster_labels.empty())
        raise(ErrorCode::dimension_mismatch, "label vectors must be non-empty and equal length");
    std::vector<std::size_t> perm(f);
    for (std::size_t i = 0; i < f; ++i) perm[i] = i;
    double best = 0.0;
    do {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < cluster_labels.size(); ++i)
            if (perm[cluster_labels[i]] == true_families[i]) ++correct;
        best = std::max(best, static_cast<double>(correct) /
                                  static_cast<double>(cluster_labels.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// ---------------------------------------------------------------------------
// Registry: the persistent classification model.

struct Registry {
    Normalizer normalizer;
    PcaBasis basis;
    std::vector<std::vector<double>> centroids; // F x k
    std::vector<std::string> families;
    double threshold = 7.0;
    std::map<std::string, std::string> provenance;

    std::vector<double> embed(const Fingerprint& fp) const {
        return project(basis, normalizer.apply(vectorize(fp)));
    }
};

struct RegistryOptions {
    std::size_t pca_components = 2;
    double threshold = 7.0;
    std::vector<std::string> family_labels; // defaults to base model names
};

inline Registry fit_centroid_kmeans(std::span<const Fingerprint> bases,
                                    std::span<const Fingerprint> members,
                                    const RegistryOptions& options = {}) {
    if (bases.empty()) raise(ErrorCode::empty_bases, "at least one base fingerprint is required");
    if (!(options.threshold > 0.0))
        raise(ErrorCode::insufficient_samples, "threshold must be positive");
    const std::size_t f = bases.size();
    const std::size_t n = f + members.size();
    if (n < 2)
        raise(ErrorCode::insufficient_samples,
              "registry fitting needs at least 2 fingerprints overall");

    Registry registry;
    registry.threshold = options.threshold;
    if (!options.family_labels.empty()) {
        if (options.family_labels.size() != f)
            raise(ErrorCode::dimension_mismatch, "family label count must match base count");
        registry.families = options.family_labels;
    } else {
        for (const auto& fp : bases) registry.families.push_back(fp.model_name);
    }
    for (std::size_t i = 0; i < f; ++i)
        for (std::size_t j = i + 1; j < f; ++j)
            if (registry.families[i] == registry.families[j])
                raise(ErrorCode::duplicate_name,
                      "duplicate family label '" + registry.families[i] + "'");

    std::vector<FeatureVector> raw;
    raw.reserve(n);
    for (const auto& fp : bases) raw.push_back(vectorize(fp));
    for (const auto& fp : members) raw.push_back(vectorize(fp));

    registry.normalizer = fit_normalizer(raw);
    std::vector<FeatureVector> normalized;
    normalized.reserve(n);
    for (const auto& v : raw) normalized.push_back(registry.normalizer.apply(v));

    std::size_t k = std::clamp<std::size_t>(options.pca_components, 1,
                                            std::min(n - 1, kFeatureCount));
    registry.basis = fit_pca(normalized, k);

    std::vector<std::vector<double>> points;
    points.reserve(n);
    for (const auto& v : normalized) points.push_back(project(registry.basis, v));

    std::vector<std::vector<double>> init(points.begin(), points.begin() + f);
    KMeansResult km = detail::lloyd(points, std::move(init));
    registry.centroids = km.centroids;

    registry.provenance["tool_version"] = GRADPRINT_VERSION;
    registry.provenance["base_count"] = std::to_string(f);
    registry.provenance["member_count"] = std::to_string(members.size());
    registry.provenance["extraction_seed"] = std::to_string(bases.front().extraction.seed);
    registry.provenance["threshold_space"] = "pca_normalized";
    return registry;
}

// Euclidean distance between two fingerprints, in the registry's projected
// normalized space when one is given, otherwise over the raw 16-dim vectors.
inline double pairwise_distance(const Fingerprint& a, const Fingerprint& b,
                                const Registry* registry = nullptr) {
    if (registry) {
        auto pa = registry->embed(a);
        auto pb = registry->embed(b);
        return std::sqrt(detail::sq_dist(pa, pb));
    }
    auto va = vectorize(a);
    auto vb = vectorize(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        double diff = va[i] - vb[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

struct ClassificationReport {
    std::string model_name;
    bool in_family = false;
    std::string family; // set when in_family
    std::vector<std::pair<std::string, double>> distances;
    double min_distance = 0.0;
    double threshold = 0.0;
    double confidence = 0.0; // second_min / min, capped
};

inline ClassificationReport classify_unknown(const Registry& registry, const Fingerprint& fp) {
    ClassificationReport report;
    report.model_name = fp.model_name;
    report.threshold = registry.threshold;

    std::vector<double> p = registry.embed(fp);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    double second_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < registry.centroids.size(); ++c) {
        double d = std::sqrt(detail::sq_dist(p, registry.centroids[c]));
        report.distances.emplace_back(registry.families[c], d);
        if (d < best_d) {
            second_d = best_d;
            best_d = d;
            best = c;
        } else if (d < second_d) {
            second_d = d;
        }
    }
    report.min_distance = best_d;
    report.confidence =
        best_d > 0.0 ? std::min(second_d / best_d, kConfidenceCap) : kConfidenceCap;
    if (best_d <= registry.threshold) {
        report.in_family = true;
        report.family = registry.families[best];
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON persistence

inline ordered_json to_json(const Registry& registry) {
    ordered_json j = ordered_json::object();
    j["schema_version"] = 1;
    ordered_json norm = ordered_json::object();
    norm["means"] = registry.normalizer.means;
    norm["stds"] = registry.normalizer.stds;
    j["normalizer"] = std::move(norm);
    ordered_json pca = ordered_json::object();
    pca["mean"] = registry.basis.mean;
    pca["components"] = registry.basis.components;
    pca["explained_variance"] = registry.basis.explained_variance;
    j["pca"] = std::move(pca);
    j["centroids"] = registry.centroids;
    j["families"] = registry.families;
    j["threshold"] = registry.threshold;
    j["provenance"] = registry.provenance;
    return j;
}

inline Registry registry_from_json(const ordered_json& j) {
    Registry registry;
    auto require = [&](const char* key) -> const ordered_json& {
        if (!j.contains(key))
            raise(ErrorCode::malformed_header, std::string("registry JSON missing '") + key + "'");
        return j[key];
    };
    const auto& norm = require("normalizer");
    registry.normalizer.means = norm["means"].get<FeatureVector>();
    registry.normalizer.stds = norm["stds"].get<FeatureVector>();
    const auto& pca = require("pca");
    registry.basis.mean = pca["mean"].get<FeatureVector>();
    for (const auto& row : pca["components"])
        registry.basis.components.push_back(row.get<FeatureVector>());
    registry.basis.explained_variance = pca["explained_variance"].get<std::vector<double>>();
    registry.centroids = require("centroids").get<std::vector<std::vector<double>>>();
    registry.families = require("families").get<std::vector<std::string>>();
    registry.threshold = require("threshold").get<double>();
    if (j.contains("provenance"))
        registry.provenance = j["provenance"].get<std::map<std::string, std::string>>();
    return registry;
}

inline ordered_json to_json(const ClassificationReport& report) {
    ordered_json j = ordered_json::object();
    j["model_name"] = report.model_name;
    j["verdict"] = report.in_family ? "family" : "out_of_cluster";
    if (report.in_family) j["family"] = report.family;
    ordered_json distances = ordered_json::object();
    for (const auto& [family, d] : report.distances) distances[family] = d;
    j["distances"] = std::move(distances);
    j["min_distance"] = report.min_distance;
    j["threshold"] = report.threshold;
    j["confidence"] = report.confidence;
    return j;
}

} // namespace gradprint
