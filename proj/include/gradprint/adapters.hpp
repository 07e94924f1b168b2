// SPDX-License-Identifier: Apache-2.0
#pragma once

// LoRA adapter folding: W' = W + (lora_alpha / r) * B * A applied in place to
// each targeted linear layer. Merged targets are written as F32 regardless of
// the base dtype; every other tensor is copied byte-exactly.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradprint/error.hpp"
#include "gradprint/tensorfile.hpp"

namespace gradprint {

struct AdapterConfig {
    int r = 0;
    float lora_alpha = 0.0f;
    std::vector<std::string> target_modules;

    float scaling() const { return lora_alpha / static_cast<float>(r); }
};

struct AdapterPair {
    std::string target; // base tensor path, "<module path>.weight"
    HostTensor a;       // [r, in]
    HostTensor b;       // [out, r]
};

struct Adapter {
    AdapterConfig config;
    std::vector<AdapterPair> pairs; // target-sorted
};

namespace detail {

inline constexpr const char* kLoraPrefix = "base_model.model.";
inline constexpr const char* kLoraASuffix = ".lora_A.weight";
inline constexpr const char* kLoraBSuffix = ".lora_B.weight";

inline bool strip_affixes(const std::string& name, const char* suffix, std::string& path_out) {
    std::string_view v(name);
    std::string_view prefix(kLoraPrefix);
    std::string_view suf(suffix);
    if (v.size() <= prefix.size() + suf.size()) return false;
    if (v.substr(0, prefix.size()) != prefix) return false;
    if (v.substr(v.size() - suf.size()) != suf) return false;
    path_out = std::string(v.substr(prefix.size(), v.size() - prefix.size() - suf.size()));
    return true;
}

} // namespace detail

inline Adapter load_adapter(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;

    fs::path config_path = dir / "adapter_config.json";
    std::ifstream in(config_path);
    if (!in) raise(ErrorCode::io_error, "cannot open " + config_path.string());
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::missing_config_key,
              "invalid adapter_config.json: " + std::string(e.what()));
    }

    Adapter adapter;
    for (const char* key : {"r", "lora_alpha", "target_modules"})
        if (!root.contains(key))
            raise(ErrorCode::missing_config_key,
                  std::string("adapter_config.json lacks '") + key + "'");
    adapter.config.r = root["r"].get<int>();
    adapter.config.lora_alpha = root["lora_alpha"].get<float>();
    adapter.config.target_modules = root["target_modules"].get<std::vector<std::string>>();
    if (adapter.config.r < 1)
        raise(ErrorCode::missing_config_key, "adapter rank r must be >= 1");
    if (!(adapter.config.scaling() > 0.0f) || !std::isfinite(adapter.config.scaling()))
        raise(ErrorCode::missing_config_key, "lora_alpha / r must be finite and positive");

    TensorFile weights = TensorFile::open(dir / "adapter_model.safetensors");
    std::map<std::string, std::pair<bool, bool>> seen; // path -> (has A, has B)
    for (const auto& t : weights.index().tensors) {
        std::string path;
        if (detail::strip_affixes(t.name, detail::kLoraASuffix, path))
            seen[path].first = true;
        else if (detail::strip_affixes(t.name, detail::kLoraBSuffix, path))
            seen[path].second = true;
    }
    for (const auto& [path, sides] : seen) {
        if (!sides.first || !sides.second)
            raise(ErrorCode::orphan_lora_tensor,
                  "adapter has only lora_" + std::string(sides.first ? "A" : "B") + " for '" +
                      path + "'");
        AdapterPair pair;
        pair.target = path + ".weight";
        pair.a = weights.read_tensor(std::string(detail::kLoraPrefix) + path + detail::kLoraASuffix);
        pair.b = weights.read_tensor(std::string(detail::kLoraPrefix) + path + detail::kLoraBSuffix);
        if (pair.a.shape.size() != 2 || pair.b.shape.size() != 2)
            raise(ErrorCode::shape_incompatible, "lora tensors for '" + path + "' must be 2-D");
        if (pair.a.rows() != static_cast<std::size_t>(adapter.config.r) ||
            pair.b.cols() != static_cast<std::size_t>(adapter.config.r))
            raise(ErrorCode::shape_incompatible,
                  "lora rank mismatch for '" + path + "': A rows " +
                      std::to_string(pair.a.rows()) + ", B cols " + std::to_string(pair.b.cols()) +
                      ", config r " + std::to_string(adapter.config.r));
        adapter.pairs.push_back(std::move(pair));
    }
    return adapter;
}

// True when the module path's trailing component matches one of the
// configured target modules (the usual convention for adapter configs).
inline bool matches_target_modules(const std::string& target, const AdapterConfig& config) {
    std::string path = target;
    if (path.size() > 7 && path.substr(path.size() - 7) == ".weight")
        path = path.substr(0, path.size() - 7);
    for (const auto& module_name : config.target_modules) {
        if (path.size() >= module_name.size() &&
            path.compare(path.size() - module_name.size(), module_name.size(), module_name) == 0)
            return true;
    }
    return false;
}

struct LoraMergeReport {
    std::vector<std::string> merged_targets; // in base-file order
    float scaling = 0.0f;
};

inline LoraMergeReport merge_lora(const std::filesystem::path& base_path, const Adapter& adapter,
                                  const std::filesystem::path& out_path) {
    TensorFile base = TensorFile::open(base_path);
    const double scaling = adapter.config.scaling();

    std::map<std::string, const AdapterPair*> by_target;
    for (const auto& pair : adapter.pairs) {
        const TensorInfo* info = base.index().find(pair.target);
        if (!info)
            raise(ErrorCode::target_not_found,
                  "base model has no tensor '" + pair.target + "'");
        if (info->shape.size() != 2 ||
            info->shape[0] != pair.b.rows() || info->shape[1] != pair.a.cols())
            raise(ErrorCode::shape_incompatible,
                  "target '" + pair.target + "' has incompatible shape for the adapter pair");
        by_target[pair.target] = &pair;
    }

    // Header first: targets become F32, everything else keeps its dtype.
    std::vector<detail::RawTensorSpec> specs;
    for (const auto& t : base.index().tensors) {
        if (by_target.count(t.name))
            specs.push_back({t.name, "F32", t.shape, t.element_count() * 4});
        else
            specs.push_back({t.name, t.dtype.name, t.shape, t.byte_size()});
    }
    std::map<std::string, std::string> metadata;
    if (base.index().metadata) metadata = *base.index().metadata;
    metadata["lora_target_dtype"] = "F32";

    auto header = detail::build_header(specs, metadata);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot write " + out_path.string());
    out.write(reinterpret_cast<const char*>(header.data()),
              static_cast<std::streamsize>(header.size()));

    LoraMergeReport report;
    report.scaling = static_cast<float>(scaling);
    for (const auto& t : base.index().tensors) {
        auto it = by_target.find(t.name);
        if (it == by_target.end()) {
            auto bytes = base.read_raw(t.name);
            out.write(reinterpret_cast<const char*>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
            continue;
        }
        const AdapterPair& pair = *it->second;
        HostTensor w = base.read_tensor(t.name);
        const std::size_t out_dim = w.rows(), in_dim = w.cols();
        const std::size_t r = pair.a.rows();
        for (std::size_t i = 0; i < out_dim; ++i) {
            for (std::size_t j = 0; j < in_dim; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < r; ++k)
                    acc += static_cast<double>(pair.b.at(i, k)) *
                           static_cast<double>(pair.a.at(k, j));
                double update = scaling * acc;
                if (update != 0.0) {
                    std::size_t idx = i * in_dim + j;
                    w.values[idx] =
                        static_cast<float>(static_cast<double>(w.values[idx]) + update);
                }
            }
        }
        auto bytes = detail::f32_to_bytes(DType::from_name("F32"), w.values, t.name);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        report.merged_targets.push_back(t.name);
    }
    if (!out) raise(ErrorCode::io_error, "write failed for " + out_path.string());
    return report;
}

} // namespace gradprint
