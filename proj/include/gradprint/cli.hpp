// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line surface. Every subcommand writes exactly one JSON document to
// standard output; diagnostics go to standard error. Exit codes:
//   0 success (classify: family matched; inspect: no violations)
//   1 internal/I-O error        2 usage error
//   3 classify: out-of-cluster  4 format error
//   5 merge/adapter error       6 analysis error

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gradprint/adapters.hpp"
#include "gradprint/error.hpp"
#include "gradprint/eval.hpp"
#include "gradprint/famclass.hpp"
#include "gradprint/fingerprint.hpp"
#include "gradprint/perturb.hpp"
#include "gradprint/synth.hpp"
#include "gradprint/taxonomy.hpp"
#include "gradprint/tensorfile.hpp"
#include "gradprint/version.hpp"

namespace gradprint::cli {

// Accepts both TOML (the CLI11 default) and JSON configuration files; JSON
// objects nest the same way TOML sections do.
class JsonTomlConfig : public CLI::ConfigBase {
public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::streampos start = input.tellg();
        char c = '\0';
        while (input.get(c) && std::isspace(static_cast<unsigned char>(c))) {
        }
        input.clear();
        input.seekg(start);
        if (c == '{') return from_json(input);
        return CLI::ConfigBase::from_config(input);
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void walk(const nlohmann::json& node, std::vector<std::string> parents,
                     std::vector<CLI::ConfigItem>& items) {
        for (auto it = node.begin(); it != node.end(); ++it) {
            const auto& value = it.value();
            if (value.is_object()) {
                auto next = parents;
                next.push_back(it.key());
                walk(value, std::move(next), items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            if (value.is_array())
                for (const auto& e : value) item.inputs.push_back(scalar(e));
            else
                item.inputs.push_back(scalar(value));
            items.push_back(std::move(item));
        }
    }

    std::vector<CLI::ConfigItem> from_json(std::istream& input) const {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(input);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::FileError(std::string("invalid JSON config: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }
};

namespace detail {

inline std::ostream& null_stream() {
    struct NullBuffer : std::streambuf {
        int overflow(int c) override { return c; }
    };
    static NullBuffer buffer;
    static std::ostream stream(&buffer);
    return stream;
}

inline void emit(std::ostream& out, const ordered_json& j) { out << j.dump(2) << "\n"; }

inline void save_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot write " + path.string());
    out << text;
}

inline ordered_json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::io_error, "cannot open " + path.string());
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::malformed_header, path.string() + ": " + e.what());
    }
}

inline NoiseKind parse_noise_kind(const std::string& text) {
    if (text == "adversarial") return NoiseKind::adversarial;
    if (text == "structural") return NoiseKind::structural;
    if (text == "low-freq") return NoiseKind::low_frequency;
    if (text == "high-freq") return NoiseKind::high_frequency;
    if (text == "gaussian") return NoiseKind::gaussian;
    if (text == "uniform") return NoiseKind::uniform_random;
    raise(ErrorCode::missing_config_key, "unknown noise kind '" + text + "'");
}

inline ordered_json extraction_json(const ExtractionConfig& config) {
    ordered_json j = ordered_json::object();
    j["seed"] = config.global_seed;
    j["iterations"] = config.iterations;
    j["sample_size"] = config.sample_size;
    j["per_category_k"] = config.per_category_k;
    j["mode"] = config.mode == StatMode::sampled ? "sampled" : "exact";
    j["all_layers"] = config.all_layers;
    j["threads"] = config.threads;
    ordered_json noise = ordered_json::object();
    noise["epsilon"] = config.noise.epsilon;
    noise["sigma"] = config.noise.sigma;
    noise["weight"] = config.noise.weight;
    noise["keep_fraction"] = config.noise.keep_fraction;
    noise["cycles"] = config.noise.cycles;
    j["noise"] = std::move(noise);
    return j;
}

struct ExtractionCliState {
    ExtractionConfig config;
    bool exact = false;
};

inline void add_extraction_options(CLI::App* sub, ExtractionCliState& state) {
    sub->add_option("--seed", state.config.global_seed, "global random seed")
        ->envname("GRADPRINT_SEED")
        ->capture_default_str();
    sub->add_option("--iterations", state.config.iterations, "perturbation iterations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--sample-size", state.config.sample_size,
                    "gradient entries sampled per layer per iteration")
        ->capture_default_str();
    sub->add_option("--per-category-k", state.config.per_category_k,
                    "layers sampled per category")
        ->capture_default_str();
    sub->add_flag("--exact", state.exact, "exact rank-1 statistics instead of sampling");
    sub->add_flag("--all-layers", state.config.all_layers,
                  "pool every eligible layer into the global statistics (exact)");
    sub->add_option("--threads", state.config.threads, "worker threads (result-invariant)")
        ->capture_default_str();
    sub->add_option("--epsilon", state.config.noise.epsilon,
                    "adversarial / uniform noise magnitude")
        ->capture_default_str();
    sub->add_option("--sigma", state.config.noise.sigma, "gaussian noise std")
        ->capture_default_str();
    sub->add_option("--noise-weight", state.config.noise.weight,
                    "frequency / structural injection weight")
        ->capture_default_str();
    sub->add_option("--keep-fraction", state.config.noise.keep_fraction,
                    "structural low-pass cutoff fraction")
        ->capture_default_str();
    sub->add_option("--cycles", state.config.noise.cycles, "low-frequency sine cycles")
        ->capture_default_str();
}

inline ExtractionConfig finalize(const ExtractionCliState& state) {
    ExtractionConfig config = state.config;
    config.mode = state.exact ? StatMode::exact : StatMode::sampled;
    return config;
}

} // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"gradient-response fingerprinting for safetensors model files"};
    app.set_version_flag("--version", GRADPRINT_VERSION);
    app.require_subcommand(1);
    app.set_config("--config", "", "configuration file (TOML or JSON)");
    app.config_formatter(std::make_shared<JsonTomlConfig>());

    auto quiet = std::make_shared<bool>(false);
    app.add_flag("-q,--quiet", *quiet, "suppress informational notes on stderr");
    auto note = [&err, quiet]() -> std::ostream& {
        return *quiet ? detail::null_stream() : err;
    };

    int exit_code = 0;

    // inspect ---------------------------------------------------------------
    auto* inspect = app.add_subcommand("inspect", "tensor table and format validation");
    auto inspect_model = std::make_shared<std::string>();
    inspect->add_option("model", *inspect_model, "safetensors file")->required();
    inspect->callback([&, inspect_model]() {
        TensorFile file = TensorFile::open(*inspect_model);
        auto violations = validate(file.index());
        ordered_json j = ordered_json::object();
        j["model"] = *inspect_model;
        j["tensor_count"] = file.index().tensors.size();
        j["data_region_len"] = file.index().data_region_len;
        ordered_json tensors = ordered_json::array();
        for (const auto& rec : classify_tensors(file.index())) {
            const TensorInfo* info = file.index().find(rec.name);
            ordered_json entry = ordered_json::object();
            entry["name"] = rec.name;
            entry["dtype"] = info->dtype.name;
            entry["shape"] = rec.shape;
            entry["category"] = to_string(rec.category);
            entry["eligible"] = rec.eligible();
            entry["data_offsets"] = {info->begin, info->end};
            tensors.push_back(std::move(entry));
        }
        j["tensors"] = std::move(tensors);
        ordered_json vjson = ordered_json::array();
        for (const auto& v : violations) vjson.push_back(v.describe());
        j["violations"] = std::move(vjson);
        detail::emit(out, j);
        if (!violations.empty()) exit_code = 4;
    });

    // merge-shards ----------------------------------------------------------
    auto* merge_cmd = app.add_subcommand("merge-shards", "merge a sharded checkpoint");
    struct MergeArgs {
        std::string dir;
        std::string output;
        bool pattern = false;
    };
    auto merge_args = std::make_shared<MergeArgs>();
    merge_cmd->add_option("dir", merge_args->dir, "directory holding the shards")->required();
    merge_cmd->add_option("-o,--output", merge_args->output, "merged output file")->required();
    merge_cmd->add_flag("--pattern", merge_args->pattern,
                        "force filename-pattern matching instead of the index file");
    merge_cmd->callback([&, merge_args]() {
        namespace fs = std::filesystem;
        MergeStrategy strategy = MergeStrategy::pattern;
        if (!merge_args->pattern &&
            fs::exists(fs::path(merge_args->dir) / "model.safetensors.index.json"))
            strategy = MergeStrategy::index_file;
        else if (!merge_args->pattern)
            note() << "no model.safetensors.index.json; falling back to filename patterns\n";
        MergeReport report = merge_shards(merge_args->dir, strategy, merge_args->output);
        ordered_json j = ordered_json::object();
        j["output"] = merge_args->output;
        j["order"] = report.order;
        j["shards"] = report.shard_files;
        j["tensor_count"] = report.tensor_count;
        detail::emit(out, j);
    });

    // merge-adapter ---------------------------------------------------------
    auto* adapter_cmd = app.add_subcommand("merge-adapter", "fold a LoRA adapter into a base model");
    struct AdapterArgs {
        std::string base;
        std::string adapter;
        std::string output;
    };
    auto adapter_args = std::make_shared<AdapterArgs>();
    adapter_cmd->add_option("--base", adapter_args->base, "base safetensors file")->required();
    adapter_cmd->add_option("--adapter", adapter_args->adapter, "adapter directory")->required();
    adapter_cmd->add_option("-o,--output", adapter_args->output, "merged output file")->required();
    adapter_cmd->callback([&, adapter_args]() {
        Adapter adapter = load_adapter(adapter_args->adapter);
        for (const auto& pair : adapter.pairs)
            if (!matches_target_modules(pair.target, adapter.config))
                note() << "note: '" << pair.target << "' is not named in target_modules\n";
        LoraMergeReport report = merge_lora(adapter_args->base, adapter, adapter_args->output);
        ordered_json j = ordered_json::object();
        j["output"] = adapter_args->output;
        j["scaling"] = report.scaling;
        j["merged_targets"] = report.merged_targets;
        detail::emit(out, j);
    });

    // fingerprint -------------------------------------------------------------
    auto* fp_cmd = app.add_subcommand("fingerprint", "extract a model fingerprint");
    struct FpArgs {
        std::string model;
        std::string output;
        std::string model_name;
        detail::ExtractionCliState extraction;
    };
    auto fp_args = std::make_shared<FpArgs>();
    fp_cmd->add_option("model", fp_args->model, "safetensors file")->required();
    fp_cmd->add_option("-o,--output", fp_args->output, "write fingerprint JSON here too");
    fp_cmd->add_option("--model-name", fp_args->model_name,
                       "name stored in the fingerprint (default: file stem)");
    detail::add_extraction_options(fp_cmd, fp_args->extraction);
    fp_cmd->callback([&, fp_args]() {
        TensorFile file = TensorFile::open(fp_args->model);
        std::string name = fp_args->model_name.empty()
                               ? std::filesystem::path(fp_args->model).stem().string()
                               : fp_args->model_name;
        Fingerprint fp =
            extract_fingerprint(file, detail::finalize(fp_args->extraction), std::move(name));
        for (const auto& layer : fp.extraction.degenerate_layers)
            note() << "warning: layer '" << layer << "' produced zero output and was skipped\n";
        ordered_json j = to_json(fp);
        std::string text = j.dump(2) + "\n";
        if (!fp_args->output.empty()) detail::save_text(fp_args->output, text);
        out << text;
    });

    // compare -----------------------------------------------------------------
    auto* compare_cmd = app.add_subcommand("compare", "distance between two fingerprints");
    struct CompareArgs {
        std::string fp_a;
        std::string fp_b;
        std::string registry;
    };
    auto compare_args = std::make_shared<CompareArgs>();
    compare_cmd->add_option("fp1", compare_args->fp_a, "fingerprint JSON")->required();
    compare_cmd->add_option("fp2", compare_args->fp_b, "fingerprint JSON")->required();
    compare_cmd->add_option("--registry", compare_args->registry,
                            "registry for normalized projected distance");
    compare_cmd->callback([&, compare_args]() {
        Fingerprint a = fingerprint_from_json(detail::load_json(compare_args->fp_a));
        Fingerprint b = fingerprint_from_json(detail::load_json(compare_args->fp_b));
        ordered_json j = ordered_json::object();
        j["model_a"] = a.model_name;
        j["model_b"] = b.model_name;
        if (compare_args->registry.empty()) {
            j["distance"] = pairwise_distance(a, b);
            j["space"] = "raw_16d";
            j["unnormalized"] = true;
        } else {
            Registry registry = registry_from_json(detail::load_json(compare_args->registry));
            j["distance"] = pairwise_distance(a, b, &registry);
            j["space"] = "pca_normalized";
            j["unnormalized"] = false;
        }
        detail::emit(out, j);
    });

    // build-registry ----------------------------------------------------------
    auto* registry_cmd = app.add_subcommand("build-registry",
                                            "fit normalizer, PCA, and family centroids");
    struct RegistryArgs {
        std::vector<std::string> bases;
        std::vector<std::string> members;
        double threshold = 7.0;
        std::size_t pca_components = 2;
        std::string output;
    };
    auto registry_args = std::make_shared<RegistryArgs>();
    registry_cmd->add_option("--bases", registry_args->bases, "base-model fingerprint JSONs")
        ->required()
        ->expected(-1);
    registry_cmd->add_option("--members", registry_args->members, "member fingerprint JSONs")
        ->expected(-1);
    registry_cmd->add_option("--threshold", registry_args->threshold,
                             "out-of-cluster distance threshold")
        ->capture_default_str();
    registry_cmd->add_option("--pca-components", registry_args->pca_components,
                             "projected dimensionality")
        ->capture_default_str();
    registry_cmd->add_option("-o,--output", registry_args->output, "registry JSON output")
        ->required();
    registry_cmd->callback([&, registry_args]() {
        std::vector<Fingerprint> bases, members;
        for (const auto& path : registry_args->bases)
            bases.push_back(fingerprint_from_json(detail::load_json(path)));
        for (const auto& path : registry_args->members)
            members.push_back(fingerprint_from_json(detail::load_json(path)));
        RegistryOptions options;
        options.threshold = registry_args->threshold;
        options.pca_components = registry_args->pca_components;
        Registry registry = fit_centroid_kmeans(bases, members, options);
        ordered_json j = to_json(registry);
        detail::save_text(registry_args->output, j.dump(2) + "\n");
        detail::emit(out, j);
    });

    // classify ----------------------------------------------------------------
    auto* classify_cmd = app.add_subcommand("classify", "attribute a fingerprint to a family");
    struct ClassifyArgs {
        std::string registry;
        std::string fp;
    };
    auto classify_args = std::make_shared<ClassifyArgs>();
    classify_cmd->add_option("--registry", classify_args->registry, "registry JSON")->required();
    classify_cmd->add_option("fingerprint", classify_args->fp, "fingerprint JSON")->required();
    classify_cmd->callback([&, classify_args]() {
        Registry registry = registry_from_json(detail::load_json(classify_args->registry));
        Fingerprint fp = fingerprint_from_json(detail::load_json(classify_args->fp));
        ClassificationReport report = classify_unknown(registry, fp);
        detail::emit(out, to_json(report));
        if (!report.in_family) exit_code = 3;
    });

    // sensitivity ---------------------------------------------------------------
    auto* sens_cmd = app.add_subcommand("sensitivity",
                                        "per-layer gradient sensitivity under one noise kind");
    struct SensArgs {
        std::string model;
        std::string noise = "gaussian";
        int iterations = 30;
        std::uint64_t seed = 42;
        NoiseParams params;
        std::vector<std::string> patterns;
    };
    auto sens_args = std::make_shared<SensArgs>();
    sens_cmd->add_option("model", sens_args->model, "safetensors file")->required();
    sens_cmd
        ->add_option("--noise", sens_args->noise,
                     "adversarial|structural|low-freq|high-freq|gaussian|uniform")
        ->capture_default_str();
    sens_cmd->add_option("--iterations", sens_args->iterations, "iterations per layer")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sens_cmd->add_option("--seed", sens_args->seed, "global random seed")
        ->envname("GRADPRINT_SEED")
        ->capture_default_str();
    sens_cmd->add_option("--patterns", sens_args->patterns,
                         "layer-name substrings to target (default: projection layers)")
        ->expected(-1);
    sens_cmd->add_option("--epsilon", sens_args->params.epsilon, "noise magnitude");
    sens_cmd->add_option("--sigma", sens_args->params.sigma, "gaussian std");
    sens_cmd->add_option("--noise-weight", sens_args->params.weight, "injection weight");
    sens_cmd->add_option("--keep-fraction", sens_args->params.keep_fraction, "low-pass fraction");
    sens_cmd->add_option("--cycles", sens_args->params.cycles, "sine cycles");
    sens_cmd->callback([&, sens_args]() {
        TensorFile file = TensorFile::open(sens_args->model);
        SensitivityProfile profile =
            sensitivity_profile(file, detail::parse_noise_kind(sens_args->noise),
                                sens_args->iterations, sens_args->seed, sens_args->params,
                                sens_args->patterns);
        ordered_json j = to_json(profile);
        ordered_json run_config = ordered_json::object();
        run_config["seed"] = sens_args->seed;
        run_config["epsilon"] = sens_args->params.epsilon;
        run_config["sigma"] = sens_args->params.sigma;
        run_config["weight"] = sens_args->params.weight;
        run_config["keep_fraction"] = sens_args->params.keep_fraction;
        run_config["cycles"] = sens_args->params.cycles;
        j["run_config"] = std::move(run_config);
        detail::emit(out, j);
    });

    // synth ---------------------------------------------------------------------
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic evaluation corpus");
    struct SynthArgs {
        std::string spec;
        std::string output;
    };
    auto synth_args = std::make_shared<SynthArgs>();
    synth_cmd->add_option("--spec", synth_args->spec, "corpus spec JSON (defaults baked in)");
    synth_cmd->add_option("-o,--output", synth_args->output, "output directory")->required();
    synth_cmd->callback([&, synth_args]() {
        SynthSpec spec;
        if (!synth_args->spec.empty())
            spec = synth_spec_from_json(detail::load_json(synth_args->spec));
        GroundTruth truth = generate_corpus(spec, synth_args->output);
        ordered_json j = ordered_json::object();
        j["output"] = synth_args->output;
        j["families"] = truth.bases.size();
        j["members"] = truth.members.size();
        j["ground_truth"] = "ground_truth.json";
        j["spec"] = to_json(spec);
        detail::emit(out, j);
    });

    // eval ------------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "end-to-end accuracy on a corpus");
    struct EvalArgs {
        std::string corpus;
        double threshold = 7.0;
        std::size_t pca_components = 2;
        int baseline_seeds = 0;
        detail::ExtractionCliState extraction;
    };
    auto eval_args = std::make_shared<EvalArgs>();
    eval_cmd->add_option("--corpus", eval_args->corpus, "corpus directory with ground_truth.json")
        ->required();
    eval_cmd->add_option("--threshold", eval_args->threshold, "out-of-cluster threshold")
        ->capture_default_str();
    eval_cmd->add_option("--pca-components", eval_args->pca_components, "projected dimensionality")
        ->capture_default_str();
    eval_cmd->add_option("--baseline-seeds", eval_args->baseline_seeds,
                         "also run N seeds of randomly initialized K-Means")
        ->capture_default_str();
    detail::add_extraction_options(eval_cmd, eval_args->extraction);
    eval_cmd->callback([&, eval_args]() {
        CorpusEvalOptions options;
        options.extraction = detail::finalize(eval_args->extraction);
        options.threshold = eval_args->threshold;
        options.pca_components = eval_args->pca_components;
        CorpusEvalResult result = evaluate_corpus(eval_args->corpus, options);

        ordered_json j = ordered_json::object();
        j["corpus"] = eval_args->corpus;
        j["families"] = result.families;
        j["members"] = result.member_fps.size();
        j["accuracy"] = result.accuracy;
        ordered_json outcomes = ordered_json::array();
        for (const auto& o : result.outcomes) {
            ordered_json entry = ordered_json::object();
            entry["file"] = o.file;
            entry["family"] = o.true_family;
            entry["predicted"] = o.predicted;
            entry["correct"] = o.correct;
            entry["min_distance"] = o.min_distance;
            outcomes.push_back(std::move(entry));
        }
        j["results"] = std::move(outcomes);
        if (eval_args->baseline_seeds > 0) {
            ordered_json baseline = ordered_json::array();
            for (int s = 0; s < eval_args->baseline_seeds; ++s)
                baseline.push_back(
                    standard_kmeans_member_accuracy(result, static_cast<std::uint64_t>(s)));
            j["standard_kmeans_accuracy"] = std::move(baseline);
        }
        ordered_json run_config = detail::extraction_json(options.extraction);
        run_config["threshold"] = options.threshold;
        run_config["pca_components"] = options.pca_components;
        j["run_config"] = std::move(run_config);
        detail::emit(out, j);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    std::vector<std::string> full = {"gradprint"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const auto& a : full) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace gradprint::cli
