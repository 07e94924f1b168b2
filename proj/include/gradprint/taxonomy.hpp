// SPDX-License-Identifier: Apache-2.0
#pragma once

// Rule-based layer classification by tensor name, and deterministic sampling
// of per-category representatives.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradprint/rng.hpp"
#include "gradprint/tensorfile.hpp"

namespace gradprint {

// Order doubles as the tie-break precedence everywhere.
enum class LayerCategory { attention = 0, ffn, embedding, norm, unknown };

inline constexpr LayerCategory kAllCategories[] = {
    LayerCategory::attention, LayerCategory::ffn, LayerCategory::embedding,
    LayerCategory::norm, LayerCategory::unknown};

inline const char* to_string(LayerCategory category) {
    switch (category) {
    case LayerCategory::attention: return "attention";
    case LayerCategory::ffn: return "ffn";
    case LayerCategory::embedding: return "embedding";
    case LayerCategory::norm: return "norm";
    case LayerCategory::unknown: return "unknown";
    }
    return "unknown";
}

namespace detail {

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty() || haystack.size() < needle.size()) return false;
    auto lower = [](char c) {
        return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    };
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (lower(haystack[i + j]) != lower(needle[j])) {
                match = false;
                break;
            }
        }
        if (match) return true;
    }
    return false;
}

} // namespace detail

// Case-insensitive substring rules, first match wins:
// attention|attn -> attention, ffn|mlp -> ffn, embed -> embedding,
// norm -> norm, otherwise unknown.
inline LayerCategory classify_layer(std::string_view name) {
    if (detail::contains_ci(name, "attention") || detail::contains_ci(name, "attn"))
        return LayerCategory::attention;
    if (detail::contains_ci(name, "ffn") || detail::contains_ci(name, "mlp"))
        return LayerCategory::ffn;
    if (detail::contains_ci(name, "embed")) return LayerCategory::embedding;
    if (detail::contains_ci(name, "norm")) return LayerCategory::norm;
    return LayerCategory::unknown;
}

struct LayerRecord {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::uint64_t size = 0;
    LayerCategory category = LayerCategory::unknown;

    // Gradient analysis needs a weight matrix; 1-D tensors (biases, norm
    // scales) are classified but ineligible.
    bool eligible() const { return shape.size() >= 2; }
};

inline std::vector<LayerRecord> classify_tensors(const FileIndex& index) {
    std::vector<LayerRecord> records;
    records.reserve(index.tensors.size());
    for (const auto& t : index.tensors) {
        LayerRecord rec;
        rec.name = t.name;
        rec.shape = t.shape;
        rec.size = t.element_count();
        rec.category = classify_layer(t.name);
        records.push_back(std::move(rec));
    }
    return records;
}

// Up to k eligible layers per category, drawn without replacement from the
// lexicographically sorted candidate list via the stream seeded with
// derive_seed(seed, "sample|<category>"). Permutation-invariant in the input
// and reproducible across runs; the result is returned name-sorted.
inline std::map<LayerCategory, std::vector<LayerRecord>>
sample_layers(std::span<const LayerRecord> records, std::uint64_t seed, std::size_t k = 3) {
    std::map<LayerCategory, std::vector<LayerRecord>> out;
    for (LayerCategory category : kAllCategories) {
        std::vector<LayerRecord> candidates;
        for (const auto& rec : records)
            if (rec.category == category && rec.eligible()) candidates.push_back(rec);
        std::sort(candidates.begin(), candidates.end(),
                  [](const LayerRecord& a, const LayerRecord& b) { return a.name < b.name; });

        std::vector<LayerRecord> chosen;
        if (candidates.size() <= k) {
            chosen = std::move(candidates);
        } else {
            SplitMix64 rng(derive_seed(seed, std::string("sample|") + to_string(category)));
            std::vector<std::size_t> idx(candidates.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            for (std::size_t i = 0; i < k; ++i) {
                std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
                std::swap(idx[i], idx[j]);
            }
            for (std::size_t i = 0; i < k; ++i) chosen.push_back(candidates[idx[i]]);
            std::sort(chosen.begin(), chosen.end(),
                      [](const LayerRecord& a, const LayerRecord& b) { return a.name < b.name; });
        }
        out.emplace(category, std::move(chosen));
    }
    return out;
}

} // namespace gradprint
