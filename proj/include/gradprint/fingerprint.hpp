// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fingerprint extraction: perturb selected layers over a fixed number of
// iterations, collect gradient statistics, and average them into the
// canonical 16-entry vector. All randomness flows through (seed, label)
// derived streams, so the result is independent of thread count and
// tensor iteration order.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "gradprint/error.hpp"
#include "gradprint/gradsig.hpp"
#include "gradprint/perturb.hpp"
#include "gradprint/rng.hpp"
#include "gradprint/taxonomy.hpp"
#include "gradprint/tensorfile.hpp"
#include "gradprint/version.hpp"

namespace gradprint {

enum class StatMode { sampled, exact };

struct ExtractionConfig {
    std::uint64_t global_seed = 42;
    int iterations = 30;
    std::uint64_t sample_size = 500000;
    std::size_t per_category_k = 3;
    StatMode mode = StatMode::sampled;
    bool all_layers = false; // pool every eligible layer (exact stats) into the global entries
    NoiseParams noise;
    unsigned threads = 1; // must not affect the result
};

struct ExtractionInfo {
    std::uint64_t seed = 42;
    int iterations = 30;
    std::uint64_t sample_size = 500000;
    std::size_t per_category_k = 3;
    std::string mode = "sampled";
    bool all_layers = false;
    std::string tool_version = GRADPRINT_VERSION;
    std::vector<std::string> empty_categories;  // vector categories with no selected layers
    std::vector<std::string> degenerate_layers; // layers skipped on zero output, name-sorted
};

struct Fingerprint {
    double global_mean = 0.0;
    double global_std = 0.0;
    double global_norm = 0.0;
    double global_skewness = 0.0;
    double global_kurtosis = 0.0;
    double attention_mean = 0.0;
    double attention_std = 0.0;
    double attention_norm = 0.0;
    double ffn_mean = 0.0;
    double ffn_std = 0.0;
    double ffn_norm = 0.0;
    double embedding_mean = 0.0;
    double embedding_std = 0.0;
    double embedding_norm = 0.0;
    double total_params = 0.0;
    double num_layers = 0.0;
    std::string model_name; // excluded from the vector
    ExtractionInfo extraction;
};

inline constexpr std::array<const char*, 16> kFingerprintKeys = {
    "global_mean",  "global_std",  "global_norm", "global_skewness", "global_kurtosis",
    "attention_mean", "attention_std", "attention_norm",
    "ffn_mean",     "ffn_std",     "ffn_norm",
    "embedding_mean", "embedding_std", "embedding_norm",
    "total_params", "num_layers"};

inline std::array<double, 16> vectorize(const Fingerprint& fp) {
    return {fp.global_mean,    fp.global_std,    fp.global_norm,  fp.global_skewness,
            fp.global_kurtosis, fp.attention_mean, fp.attention_std, fp.attention_norm,
            fp.ffn_mean,       fp.ffn_std,       fp.ffn_norm,     fp.embedding_mean,
            fp.embedding_std,  fp.embedding_norm, fp.total_params, fp.num_layers};
}

inline ordered_json to_json(const Fingerprint& fp) {
    ordered_json j = ordered_json::object();
    auto v = vectorize(fp);
    for (std::size_t i = 0; i < 14; ++i) j[kFingerprintKeys[i]] = v[i];
    j["total_params"] = static_cast<std::uint64_t>(fp.total_params);
    j["num_layers"] = static_cast<std::uint64_t>(fp.num_layers);
    j["model_name"] = fp.model_name;
    ordered_json ext = ordered_json::object();
    ext["schema_version"] = 1;
    ext["tool_version"] = fp.extraction.tool_version;
    ext["seed"] = fp.extraction.seed;
    ext["iterations"] = fp.extraction.iterations;
    ext["sample_size"] = fp.extraction.sample_size;
    ext["per_category_k"] = fp.extraction.per_category_k;
    ext["mode"] = fp.extraction.mode;
    ext["all_layers"] = fp.extraction.all_layers;
    ext["empty_categories"] = fp.extraction.empty_categories;
    ext["degenerate_layers"] = fp.extraction.degenerate_layers;
    ext["num_layers_counts"] = "tensor_entries";
    j["extraction"] = std::move(ext);
    return j;
}

inline Fingerprint fingerprint_from_json(const ordered_json& j) {
    Fingerprint fp;
    std::array<double, 16> v{};
    for (std::size_t i = 0; i < 16; ++i) {
        if (!j.contains(kFingerprintKeys[i]))
            raise(ErrorCode::malformed_header,
                  std::string("fingerprint JSON missing key '") + kFingerprintKeys[i] + "'");
        v[i] = j[kFingerprintKeys[i]].get<double>();
    }
    fp.global_mean = v[0];
    fp.global_std = v[1];
    fp.global_norm = v[2];
    fp.global_skewness = v[3];
    fp.global_kurtosis = v[4];
    fp.attention_mean = v[5];
    fp.attention_std = v[6];
    fp.attention_norm = v[7];
    fp.ffn_mean = v[8];
    fp.ffn_std = v[9];
    fp.ffn_norm = v[10];
    fp.embedding_mean = v[11];
    fp.embedding_std = v[12];
    fp.embedding_norm = v[13];
    fp.total_params = v[14];
    fp.num_layers = v[15];
    if (j.contains("model_name")) fp.model_name = j["model_name"].get<std::string>();
    if (j.contains("extraction")) {
        const auto& ext = j["extraction"];
        auto get = [&](const char* key, auto& field) {
            if (ext.contains(key)) field = ext[key].get<std::decay_t<decltype(field)>>();
        };
        get("seed", fp.extraction.seed);
        get("iterations", fp.extraction.iterations);
        get("sample_size", fp.extraction.sample_size);
        get("per_category_k", fp.extraction.per_category_k);
        get("mode", fp.extraction.mode);
        get("all_layers", fp.extraction.all_layers);
        get("tool_version", fp.extraction.tool_version);
        get("empty_categories", fp.extraction.empty_categories);
        get("degenerate_layers", fp.extraction.degenerate_layers);
    }
    return fp;
}

namespace detail {

inline std::string iter_label(const std::string& layer, int iter, const char* what) {
    return layer + "|iter=" + std::to_string(iter) + "|" + what;
}

struct LayerIterData {
    bool skipped = false;      // zero output, gradient undefined
    RawMoments mode_moments;   // per configured mode; drives category entries
    RawMoments global_moments; // exact when all_layers, otherwise same as mode
    double fro = 0.0;
};

struct LayerWork {
    LayerRecord record;
    bool selected = false; // participates in per-category entries
    std::vector<LayerIterData> iters;
};

inline void run_layer(const TensorFile& file, const ExtractionConfig& config, LayerWork& work) {
    HostTensor w = file.read_tensor(work.record.name);
    const std::string& name = work.record.name;
    work.iters.resize(static_cast<std::size_t>(config.iterations));
    for (int t = 0; t < config.iterations; ++t) {
        LayerIterData& data = work.iters[static_cast<std::size_t>(t)];
        std::vector<float> x0 =
            base_input(derive_seed(config.global_seed, iter_label(name, t, "input")), w.cols());
        NoiseStrategy strategy = select_strategy(config.global_seed, name, t, config.noise);
        std::vector<float> x = apply_noise(
            x0, strategy, derive_seed(config.global_seed, iter_label(name, t, "noise")), &w);
        std::vector<float> o = forward(x, w);
        if (loss(o) == 0.0) {
            data.skipped = true;
            continue;
        }
        GradientFactors gf = gradient_factors(x, o);
        data.fro = gf.fro_norm();
        if (work.selected) {
            data.mode_moments =
                config.mode == StatMode::sampled
                    ? sampled_moments(gf, config.sample_size,
                                      derive_seed(config.global_seed, iter_label(name, t, "sample")))
                    : exact_moments(gf);
        }
        data.global_moments = config.all_layers ? exact_moments(gf) : data.mode_moments;
    }
}

} // namespace detail

inline Fingerprint extract_fingerprint(const TensorFile& file, const ExtractionConfig& config,
                                       std::string model_name) {
    if (config.iterations < 1) raise(ErrorCode::insufficient_samples, "iterations must be >= 1");
    if (config.mode == StatMode::sampled && config.sample_size < 2)
        raise(ErrorCode::insufficient_samples, "sample size must be >= 2");

    std::vector<LayerRecord> records = classify_tensors(file.index());

    double total_params = 0.0;
    for (const auto& rec : records) total_params += static_cast<double>(rec.size);
    double num_layers = static_cast<double>(records.size());

    std::vector<LayerRecord> eligible;
    for (const auto& rec : records)
        if (rec.eligible()) eligible.push_back(rec);
    if (eligible.empty())
        raise(ErrorCode::no_eligible_layers, "no tensor with >= 2 dimensions in " + model_name);

    // Selection is seeded once from the global seed and fixed across
    // iterations, so iteration averaging measures noise response only.
    auto selected = sample_layers(eligible, config.global_seed, config.per_category_k);

    std::set<std::string> selected_names;
    for (const auto& [category, recs] : selected)
        for (const auto& rec : recs) selected_names.insert(rec.name);

    // Work set: selected layers, plus every eligible layer when all_layers
    // pooling is on. Name-sorted so all reductions have a fixed order.
    std::vector<detail::LayerWork> work;
    {
        std::map<std::string, detail::LayerWork> by_name;
        for (const auto& [category, recs] : selected)
            for (const auto& rec : recs) by_name[rec.name] = {rec, true, {}};
        if (config.all_layers)
            for (const auto& rec : eligible)
                if (!by_name.count(rec.name)) by_name[rec.name] = {rec, false, {}};
        for (auto& [name, lw] : by_name) work.push_back(std::move(lw));
    }

    // Layer tasks are independent; run them on config.threads workers. Each
    // layer holds only its own weight matrix while processing.
    unsigned threads = std::max(1u, config.threads);
    if (threads == 1 || work.size() <= 1) {
        for (auto& lw : work) detail::run_layer(file, config, lw);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(work.size()));
        for (unsigned i = 0; i < n; ++i) {
            pool.emplace_back([&]() {
                for (;;) {
                    std::size_t idx = next.fetch_add(1);
                    if (idx >= work.size()) return;
                    detail::run_layer(file, config, work[idx]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    std::map<std::string, const detail::LayerWork*> by_name;
    for (const auto& lw : work) by_name[lw.record.name] = &lw;

    // Per-iteration reduction, then averaging across iterations.
    struct CategoryEntry {
        double mean = 0.0, stddev = 0.0, norm = 0.0;
    };
    const LayerCategory vector_categories[] = {LayerCategory::attention, LayerCategory::ffn,
                                               LayerCategory::embedding};
    std::map<LayerCategory, CategoryEntry> category_sums;
    double g_mean = 0.0, g_std = 0.0, g_norm = 0.0, g_skew = 0.0, g_kurt = 0.0;

    std::set<std::string> degenerate_layers;

    for (int t = 0; t < config.iterations; ++t) {
        std::size_t ti = static_cast<std::size_t>(t);

        for (LayerCategory category : vector_categories) {
            const auto& recs = selected.at(category);
            double sum_mean = 0.0, sum_std = 0.0, sum_norm = 0.0;
            std::size_t n = 0;
            for (const auto& rec : recs) {
                const auto& data = by_name.at(rec.name)->iters[ti];
                if (data.skipped) {
                    degenerate_layers.insert(rec.name);
                    continue;
                }
                LayerStats stats =
                    stats_from_moments(data.mode_moments, data.fro,
                                       config.mode == StatMode::sampled, config.sample_size);
                sum_mean += stats.mean;
                sum_std += stats.stddev;
                sum_norm += stats.fro_norm;
                ++n;
            }
            auto& acc = category_sums[category];
            if (n > 0) {
                acc.mean += sum_mean / static_cast<double>(n);
                acc.stddev += sum_std / static_cast<double>(n);
                acc.norm += sum_norm / static_cast<double>(n);
            }
        }

        RawMoments pooled;
        double fro_sq = 0.0;
        for (const auto& lw : work) { // name-sorted
            const auto& data = lw.iters[ti];
            if (data.skipped) {
                degenerate_layers.insert(lw.record.name);
                continue;
            }
            pooled.merge(data.global_moments);
            fro_sq += data.fro * data.fro;
        }
        LayerStats global = stats_from_moments(pooled, 0.0, false, 0);
        g_mean += global.mean;
        g_std += global.stddev;
        g_skew += global.skewness;
        g_kurt += global.kurtosis;
        g_norm += std::sqrt(fro_sq);
    }

    double inv_iters = 1.0 / static_cast<double>(config.iterations);
    Fingerprint fp;
    fp.global_mean = g_mean * inv_iters;
    fp.global_std = g_std * inv_iters;
    fp.global_norm = g_norm * inv_iters;
    fp.global_skewness = g_skew * inv_iters;
    fp.global_kurtosis = g_kurt * inv_iters;
    fp.attention_mean = category_sums[LayerCategory::attention].mean * inv_iters;
    fp.attention_std = category_sums[LayerCategory::attention].stddev * inv_iters;
    fp.attention_norm = category_sums[LayerCategory::attention].norm * inv_iters;
    fp.ffn_mean = category_sums[LayerCategory::ffn].mean * inv_iters;
    fp.ffn_std = category_sums[LayerCategory::ffn].stddev * inv_iters;
    fp.ffn_norm = category_sums[LayerCategory::ffn].norm * inv_iters;
    fp.embedding_mean = category_sums[LayerCategory::embedding].mean * inv_iters;
    fp.embedding_std = category_sums[LayerCategory::embedding].stddev * inv_iters;
    fp.embedding_norm = category_sums[LayerCategory::embedding].norm * inv_iters;
    fp.total_params = total_params;
    fp.num_layers = num_layers;
    fp.model_name = std::move(model_name);

    fp.extraction.seed = config.global_seed;
    fp.extraction.iterations = config.iterations;
    fp.extraction.sample_size = config.sample_size;
    fp.extraction.per_category_k = config.per_category_k;
    fp.extraction.mode = config.mode == StatMode::sampled ? "sampled" : "exact";
    fp.extraction.all_layers = config.all_layers;
    for (LayerCategory category : vector_categories)
        if (selected.at(category).empty())
            fp.extraction.empty_categories.push_back(to_string(category));
    fp.extraction.degenerate_layers.assign(degenerate_layers.begin(), degenerate_layers.end());
    return fp;
}

// ---------------------------------------------------------------------------
// Per-layer sensitivity under a single fixed strategy.

inline const std::vector<std::string>& default_sensitivity_patterns() {
    static const std::vector<std::string> patterns = {"q_proj",   "k_proj", "v_proj",
                                                      "o_proj",   "down_proj", "up_proj"};
    return patterns;
}

struct SensitivityProfile {
    struct Entry {
        std::string name;
        double raw = 0.0;
        double zscore = 0.0;
    };
    std::vector<Entry> layers; // name-sorted
    NoiseKind strategy = NoiseKind::gaussian;
    int iterations = 30;
};

inline SensitivityProfile sensitivity_profile(const TensorFile& file, NoiseKind kind,
                                              int iterations, std::uint64_t seed,
                                              const NoiseParams& params = {},
                                              std::span<const std::string> patterns = {}) {
    if (iterations < 1) raise(ErrorCode::insufficient_samples, "iterations must be >= 1");
    std::vector<std::string> pattern_list;
    if (patterns.empty())
        pattern_list = default_sensitivity_patterns();
    else
        pattern_list.assign(patterns.begin(), patterns.end());

    std::vector<LayerRecord> targets;
    for (const auto& rec : classify_tensors(file.index())) {
        if (!rec.eligible()) continue;
        for (const auto& pattern : pattern_list) {
            if (rec.name.find(pattern) != std::string::npos) {
                targets.push_back(rec);
                break;
            }
        }
    }
    std::sort(targets.begin(), targets.end(),
              [](const LayerRecord& a, const LayerRecord& b) { return a.name < b.name; });
    if (targets.empty())
        raise(ErrorCode::no_eligible_layers, "no eligible layer matches the sensitivity patterns");

    SensitivityProfile profile;
    profile.strategy = kind;
    profile.iterations = iterations;

    for (const auto& rec : targets) {
        HostTensor w = file.read_tensor(rec.name);
        double sum = 0.0;
        int counted = 0;
        for (int t = 0; t < iterations; ++t) {
            std::vector<float> x0 =
                base_input(derive_seed(seed, detail::iter_label(rec.name, t, "input")), w.cols());
            NoiseStrategy strategy{kind, params};
            std::vector<float> x = apply_noise(
                x0, strategy, derive_seed(seed, detail::iter_label(rec.name, t, "noise")), &w);
            std::vector<float> o = forward(x, w);
            if (loss(o) == 0.0) continue;
            GradientFactors gf = gradient_factors(x, o);
            sum += gf.fro_norm();
            ++counted;
        }
        profile.layers.push_back({rec.name, counted > 0 ? sum / counted : 0.0, 0.0});
    }

    double mean = 0.0;
    for (const auto& e : profile.layers) mean += e.raw;
    mean /= static_cast<double>(profile.layers.size());
    double var = 0.0;
    for (const auto& e : profile.layers) var += (e.raw - mean) * (e.raw - mean);
    var /= static_cast<double>(profile.layers.size());
    double stddev = std::sqrt(var);
    if (profile.layers.size() >= 2 && stddev > 0.0)
        for (auto& e : profile.layers) e.zscore = (e.raw - mean) / stddev;
    return profile;
}

inline ordered_json to_json(const SensitivityProfile& profile) {
    ordered_json j = ordered_json::object();
    j["strategy"] = to_string(profile.strategy);
    j["iterations"] = profile.iterations;
    ordered_json layers = ordered_json::object();
    for (const auto& e : profile.layers) {
        ordered_json entry = ordered_json::object();
        entry["raw"] = e.raw;
        entry["zscore"] = e.zscore;
        layers[e.name] = std::move(entry);
    }
    j["layers"] = std::move(layers);
    return j;
}

} // namespace gradprint
