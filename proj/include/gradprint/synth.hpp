// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic model families with ground-truth lineage. Families differ in the
// knobs the fingerprint actually measures: layer widths, block counts, weight
// scale, and a rank-1 "spike" component shaping the output distribution.
// Derivatives apply LoRA-like low-rank updates, additive noise, or head
// scaling to a random subset of eligible layers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "gradprint/error.hpp"
#include "gradprint/rng.hpp"
#include "gradprint/tensorfile.hpp"

namespace gradprint {

struct SynthSpec {
    int families = 4;
    int derivatives_per_family = 6;
    std::uint64_t seed = 42;

    // Family plan knobs (used when layer_plan is empty).
    std::uint64_t base_width = 16;
    std::uint64_t width_step = 16;
    double scale_base = 0.02;
    double scale_ratio = 2.0; // inter-family weight-scale ratio
    double spike_step = 0.5;  // rank-1 component strength per family index

    // Modification parameters.
    double noise_sigma = 0.05;  // relative to the family scale
    int lowrank_rank = 2;
    double lowrank_scale = 0.1; // relative to the family scale
    double head_gamma = 1.5;
    std::vector<std::string> modification_cycle = {"additive_noise", "low_rank_update"};

    // Optional fixed plan shared by every family: (name, shape).
    std::vector<std::pair<std::string, std::vector<std::uint64_t>>> layer_plan;
};

struct GroundTruth {
    std::map<std::string, std::string> bases; // family name -> file name
    struct Member {
        std::string file;
        std::string family;
        std::string modification;
    };
    std::vector<Member> members;
};

namespace detail {

inline std::vector<std::pair<std::string, std::vector<std::uint64_t>>>
family_layer_plan(const SynthSpec& spec, int family) {
    if (!spec.layer_plan.empty()) return spec.layer_plan;

    std::uint64_t w = spec.base_width + spec.width_step * static_cast<std::uint64_t>(family);
    std::uint64_t ff = 2 * w;
    std::uint64_t vocab = 4 * w;
    int blocks = 1 + (family % 4);

    std::vector<std::pair<std::string, std::vector<std::uint64_t>>> plan;
    plan.emplace_back("model.embed_tokens.weight", std::vector<std::uint64_t>{vocab, w});
    for (int b = 0; b < blocks; ++b) {
        std::string base = "model.layers." + std::to_string(b) + ".";
        plan.emplace_back(base + "self_attn.q_proj.weight", std::vector<std::uint64_t>{w, w});
        plan.emplace_back(base + "self_attn.k_proj.weight", std::vector<std::uint64_t>{w, w});
        plan.emplace_back(base + "self_attn.v_proj.weight", std::vector<std::uint64_t>{w, w});
        plan.emplace_back(base + "self_attn.o_proj.weight", std::vector<std::uint64_t>{w, w});
        plan.emplace_back(base + "mlp.up_proj.weight", std::vector<std::uint64_t>{ff, w});
        plan.emplace_back(base + "mlp.down_proj.weight", std::vector<std::uint64_t>{w, ff});
        plan.emplace_back(base + "input_layernorm.weight", std::vector<std::uint64_t>{w});
    }
    plan.emplace_back("model.norm.weight", std::vector<std::uint64_t>{w});
    plan.emplace_back("lm_head.weight", std::vector<std::uint64_t>{vocab, w});
    return plan;
}

inline void check_spec(const SynthSpec& spec) {
    if (spec.families < 2)
        raise(ErrorCode::insufficient_samples, "a synth corpus needs at least 2 families");
    if (spec.derivatives_per_family < 0 || spec.lowrank_rank < 1)
        raise(ErrorCode::insufficient_samples, "invalid derivative parameters");
    for (int f = 0; f < spec.families; ++f) {
        for (const auto& [name, shape] : family_layer_plan(spec, f)) {
            for (auto dim : shape)
                if (shape.size() >= 2 && (dim < 4 || dim > 256))
                    raise(ErrorCode::shape_mismatch,
                          "layer '" + name + "' dim " + std::to_string(dim) +
                              " outside the 4..256 desk-scale range");
        }
    }
}

inline std::string family_name(int family) { return "family" + std::to_string(family); }

inline std::vector<TensorData> make_base_tensors(const SynthSpec& spec, int family) {
    double sigma = spec.scale_base * std::pow(spec.scale_ratio, family);
    double spike = spec.spike_step * family;
    std::vector<TensorData> tensors;
    for (const auto& [name, shape] : family_layer_plan(spec, family)) {
        SplitMix64 rng(derive_seed(spec.seed,
                                   "family|" + std::to_string(family) + "|base|" + name));
        TensorData t;
        t.name = name;
        t.dtype = DType::from_name("F32");
        t.shape = shape;
        std::uint64_t count = 1;
        for (auto d : shape) count *= d;
        t.values.resize(static_cast<std::size_t>(count));
        if (shape.size() >= 2) {
            std::size_t m = static_cast<std::size_t>(shape[0]);
            std::size_t d = static_cast<std::size_t>(count / shape[0]);
            std::vector<double> u(m), v(d);
            for (auto& e : u) e = rng.next_normal();
            for (auto& e : v) e = rng.next_normal();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    t.values[i * d + j] = static_cast<float>(
                        sigma * (rng.next_normal() + spike * u[i] * v[j]));
        } else {
            // norm-style vectors: near-ones
            for (auto& e : t.values) e = static_cast<float>(1.0 + 0.01 * rng.next_normal());
        }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

inline std::vector<std::size_t> pick_modified_layers(const SynthSpec& spec, int family,
                                                     int derivative,
                                                     const std::vector<TensorData>& tensors) {
    // Eligible (2-D) tensor indices, name-sorted, each kept with prob 1/2.
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < tensors.size(); ++i)
        if (tensors[i].shape.size() >= 2) eligible.push_back(i);
    std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        return tensors[a].name < tensors[b].name;
    });
    SplitMix64 rng(derive_seed(spec.seed, "family|" + std::to_string(family) + "|deriv|" +
                                              std::to_string(derivative) + "|subset"));
    std::vector<std::size_t> chosen;
    for (std::size_t idx : eligible)
        if (rng.next_below(2) == 1) chosen.push_back(idx);
    if (chosen.empty() && !eligible.empty()) chosen.push_back(eligible.front());
    return chosen;
}

inline void apply_modification(const SynthSpec& spec, int family, int derivative,
                               const std::string& kind, std::vector<TensorData>& tensors) {
    double sigma = spec.scale_base * std::pow(spec.scale_ratio, family);

    if (kind == "head_scaling") {
        for (auto& t : tensors) {
            if (t.name.find("lm_head") == std::string::npos) continue;
            for (auto& v : t.values) v = static_cast<float>(spec.head_gamma * v);
        }
        return;
    }

    auto chosen = pick_modified_layers(spec, family, derivative, tensors);
    for (std::size_t idx : chosen) {
        TensorData& t = tensors[idx];
        SplitMix64 rng(derive_seed(spec.seed, "family|" + std::to_string(family) + "|deriv|" +
                                                  std::to_string(derivative) + "|mod|" + t.name));
        if (kind == "additive_noise") {
            double noise_scale = spec.noise_sigma * sigma;
            if (noise_scale == 0.0) continue; // exact byte identity
            for (auto& v : t.values)
                v = static_cast<float>(static_cast<double>(v) + noise_scale * rng.next_normal());
        } else if (kind == "low_rank_update") {
            std::size_t m = static_cast<std::size_t>(t.shape[0]);
            std::size_t d = t.values.size() / m;
            std::size_t r = static_cast<std::size_t>(spec.lowrank_rank);
            std::vector<double> bmat(m * r), amat(r * d);
            for (auto& e : bmat) e = rng.next_normal();
            for (auto& e : amat) e = rng.next_normal();
            double update_scale = spec.lowrank_scale * sigma / std::sqrt(static_cast<double>(r));
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < r; ++k) acc += bmat[i * r + k] * amat[k * d + j];
                    t.values[i * d + j] = static_cast<float>(
                        static_cast<double>(t.values[i * d + j]) + update_scale * acc);
                }
            }
        } else {
            raise(ErrorCode::missing_config_key, "unknown modification kind '" + kind + "'");
        }
    }
}

} // namespace detail

struct FamilyFiles {
    std::string family;
    std::string base_file;
    std::vector<std::pair<std::string, std::string>> derivative_files; // (file, kind)
};

inline FamilyFiles generate_family(const SynthSpec& spec, int family,
                                   const std::filesystem::path& out_dir) {
    detail::check_spec(spec);
    std::filesystem::create_directories(out_dir);

    FamilyFiles files;
    files.family = detail::family_name(family);

    std::vector<TensorData> base = detail::make_base_tensors(spec, family);
    files.base_file = files.family + "_base.safetensors";
    write_file_to(out_dir / files.base_file, base);

    for (int i = 0; i < spec.derivatives_per_family; ++i) {
        const std::string& kind =
            spec.modification_cycle[static_cast<std::size_t>(i) % spec.modification_cycle.size()];
        std::vector<TensorData> tensors = base;
        detail::apply_modification(spec, family, i, kind, tensors);
        std::string file = files.family + "_d" + std::to_string(i) + "_" + kind + ".safetensors";
        write_file_to(out_dir / file, tensors);
        files.derivative_files.emplace_back(file, kind);
    }
    return files;
}

inline ordered_json to_json(const SynthSpec& spec) {
    ordered_json j = ordered_json::object();
    j["families"] = spec.families;
    j["derivatives_per_family"] = spec.derivatives_per_family;
    j["seed"] = spec.seed;
    j["base_width"] = spec.base_width;
    j["width_step"] = spec.width_step;
    j["scale_base"] = spec.scale_base;
    j["scale_ratio"] = spec.scale_ratio;
    j["spike_step"] = spec.spike_step;
    j["noise_sigma"] = spec.noise_sigma;
    j["lowrank_rank"] = spec.lowrank_rank;
    j["lowrank_scale"] = spec.lowrank_scale;
    j["head_gamma"] = spec.head_gamma;
    j["modification_cycle"] = spec.modification_cycle;
    if (!spec.layer_plan.empty()) {
        ordered_json plan = ordered_json::array();
        for (const auto& [name, shape] : spec.layer_plan) {
            ordered_json entry = ordered_json::object();
            entry["name"] = name;
            entry["shape"] = shape;
            plan.push_back(std::move(entry));
        }
        j["layer_plan"] = std::move(plan);
    }
    return j;
}

inline SynthSpec synth_spec_from_json(const ordered_json& j) {
    SynthSpec spec;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("families", spec.families);
    get("derivatives_per_family", spec.derivatives_per_family);
    get("seed", spec.seed);
    get("base_width", spec.base_width);
    get("width_step", spec.width_step);
    get("scale_base", spec.scale_base);
    get("scale_ratio", spec.scale_ratio);
    get("spike_step", spec.spike_step);
    get("noise_sigma", spec.noise_sigma);
    get("lowrank_rank", spec.lowrank_rank);
    get("lowrank_scale", spec.lowrank_scale);
    get("head_gamma", spec.head_gamma);
    get("modification_cycle", spec.modification_cycle);
    if (j.contains("layer_plan")) {
        for (const auto& entry : j["layer_plan"])
            spec.layer_plan.emplace_back(entry["name"].get<std::string>(),
                                         entry["shape"].get<std::vector<std::uint64_t>>());
    }
    return spec;
}

inline ordered_json to_json(const GroundTruth& truth) {
    ordered_json j = ordered_json::object();
    j["schema_version"] = 1;
    ordered_json bases = ordered_json::object();
    for (const auto& [family, file] : truth.bases) bases[family] = file;
    j["bases"] = std::move(bases);
    ordered_json members = ordered_json::array();
    for (const auto& m : truth.members) {
        ordered_json entry = ordered_json::object();
        entry["file"] = m.file;
        entry["family"] = m.family;
        entry["modification"] = m.modification;
        members.push_back(std::move(entry));
    }
    j["members"] = std::move(members);
    return j;
}

inline GroundTruth ground_truth_from_json(const ordered_json& j) {
    GroundTruth truth;
    for (auto it = j.at("bases").begin(); it != j.at("bases").end(); ++it)
        truth.bases[it.key()] = it.value().get<std::string>();
    for (const auto& entry : j.at("members"))
        truth.members.push_back({entry.at("file").get<std::string>(),
                                 entry.at("family").get<std::string>(),
                                 entry.at("modification").get<std::string>()});
    return truth;
}

inline GroundTruth generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    detail::check_spec(spec);
    GroundTruth truth;
    for (int f = 0; f < spec.families; ++f) {
        FamilyFiles files = generate_family(spec, f, out_dir);
        truth.bases[files.family] = files.base_file;
        for (const auto& [file, kind] : files.derivative_files)
            truth.members.push_back({file, files.family, kind});
    }
    ordered_json j = to_json(truth);
    j["spec"] = to_json(spec);
    std::ofstream out(out_dir / "ground_truth.json", std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot write ground_truth.json");
    out << j.dump(2) << "\n";
    return truth;
}

inline GroundTruth load_ground_truth(const std::filesystem::path& corpus_dir) {
    std::ifstream in(corpus_dir / "ground_truth.json");
    if (!in)
        raise(ErrorCode::io_error, "no ground_truth.json in " + corpus_dir.string());
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::malformed_header, std::string("invalid ground_truth.json: ") + e.what());
    }
    return ground_truth_from_json(j);
}

} // namespace gradprint
