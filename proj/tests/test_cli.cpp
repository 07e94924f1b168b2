// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gradprint/cli.hpp"

#include "oracles.hpp"

using namespace gradprint;

namespace {

struct CliResult {
    int exit_code;
    std::string out;
    std::string err;
    ordered_json json() const { return ordered_json::parse(out); }
};

CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = gradprint::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

TensorData f32_tensor(const std::string& name, std::vector<std::uint64_t> shape,
                      std::vector<float> values) {
    return {name, DType::from_name("F32"), std::move(shape), std::move(values)};
}

std::filesystem::path write_model(const std::filesystem::path& dir, const std::string& file) {
    std::vector<float> eye(64, 0.0f);
    for (int i = 0; i < 8; ++i) eye[static_cast<std::size_t>(i) * 8 + i] = 1.0f;
    std::vector<float> ramp(64);
    for (std::size_t i = 0; i < 64; ++i) ramp[i] = 0.01f * static_cast<float>(i) - 0.3f;
    write_file_to(dir / file, {f32_tensor("model.layers.0.self_attn.q_proj.weight", {8, 8}, eye),
                               f32_tensor("model.layers.0.mlp.down_proj.weight", {8, 8}, ramp),
                               f32_tensor("model.norm.weight", {8},
                                          std::vector<float>(8, 1.0f))});
    return dir / file;
}

const std::vector<std::string> kFastFlags = {"--iterations", "3", "--exact"};

std::vector<std::string> with_fast(std::vector<std::string> args) {
    args.insert(args.end(), kFastFlags.begin(), kFastFlags.end());
    return args;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("inspect: clean model exits zero, violations exit four") {
    oracle::TempDir dir("cli_inspect");
    auto model = write_model(dir.path(), "model.safetensors");

    CliResult ok = run_cli({"inspect", model.string()});
    CHECK(ok.exit_code == 0);
    ordered_json j = ok.json();
    CHECK(j["tensor_count"] == 3);
    CHECK(j["violations"].empty());
    REQUIRE(j["tensors"].size() == 3);
    CHECK(j["tensors"][0]["category"] == "attention");
    CHECK(j["tensors"][2]["eligible"] == false);

    // Craft an overlapping-offset file.
    std::string header =
        R"({"a":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]},)"
        R"("b":{"dtype":"F32","shape":[2,2],"data_offsets":[0,16]}})";
    while (header.size() % 8 != 0) header.push_back(' ');
    std::vector<std::uint8_t> bytes(8 + header.size() + 16, 0);
    std::uint64_t len = header.size();
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>((len >> (8 * i)) & 0xFF);
    std::copy(header.begin(), header.end(), bytes.begin() + 8);
    save_bytes(dir.path() / "overlap.safetensors", bytes);

    CliResult bad = run_cli({"inspect", (dir.path() / "overlap.safetensors").string()});
    CHECK(bad.exit_code == 4);
    CHECK(bad.json()["violations"].size() == 1);
    CHECK(bad.json()["violations"][0].get<std::string>().find("Overlap") != std::string::npos);
}

TEST_CASE("inspect: missing and truncated files") {
    oracle::TempDir dir("cli_missing");
    CliResult missing = run_cli({"inspect", (dir.path() / "nope.safetensors").string()});
    CHECK(missing.exit_code == 1);
    CHECK(missing.out.empty());

    std::vector<std::uint8_t> four(4, 0);
    save_bytes(dir.path() / "tiny.safetensors", four);
    CliResult truncated = run_cli({"inspect", (dir.path() / "tiny.safetensors").string()});
    CHECK(truncated.exit_code == 4);
    CHECK(truncated.err.find("TruncatedFile") != std::string::npos);
}

TEST_CASE("fingerprint: stdout matches the -o file and is stable") {
    oracle::TempDir dir("cli_fp");
    auto model = write_model(dir.path(), "model.safetensors");
    auto fp_path = (dir.path() / "fp.json").string();

    CliResult r1 = run_cli(with_fast({"fingerprint", model.string(), "-o", fp_path}));
    REQUIRE(r1.exit_code == 0);
    std::ifstream in(fp_path);
    std::string file_text((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    CHECK(file_text == r1.out);

    CliResult r2 = run_cli(with_fast({"fingerprint", model.string()}));
    CHECK(r2.out == r1.out);

    ordered_json j = r1.json();
    CHECK(j["model_name"] == "model");
    CHECK(j["num_layers"] == 3);
    CHECK(j["extraction"]["mode"] == "exact");
}

TEST_CASE("fingerprint on an ineligible model exits with the analysis code") {
    oracle::TempDir dir("cli_flat");
    write_file_to(dir.path() / "flat.safetensors",
                  {f32_tensor("model.norm.weight", {4}, {1, 1, 1, 1})});
    CliResult r = run_cli(with_fast({"fingerprint", (dir.path() / "flat.safetensors").string()}));
    CHECK(r.exit_code == 6);
    CHECK(r.err.find("NoEligibleLayers") != std::string::npos);
}

TEST_CASE("compare: identical fingerprints at distance zero, unnormalized marker") {
    oracle::TempDir dir("cli_compare");
    auto model = write_model(dir.path(), "model.safetensors");
    auto fp_path = (dir.path() / "fp.json").string();
    REQUIRE(run_cli(with_fast({"fingerprint", model.string(), "-o", fp_path})).exit_code == 0);

    CliResult r = run_cli({"compare", fp_path, fp_path});
    CHECK(r.exit_code == 0);
    ordered_json j = r.json();
    CHECK(j["distance"] == 0.0);
    CHECK(j["space"] == "raw_16d");
    CHECK(j["unnormalized"] == true);
}

TEST_CASE("registry workflow: build, classify, compare in projected space") {
    oracle::TempDir dir("cli_registry");
    SynthSpec spec;
    spec.families = 2;
    spec.derivatives_per_family = 1;
    spec.seed = 11;
    GroundTruth truth = generate_corpus(spec, dir.path());

    std::vector<std::string> base_fp_paths;
    for (const auto& [family, file] : truth.bases) {
        auto fp_path = (dir.path() / (family + ".json")).string();
        CliResult r = run_cli(with_fast(
            {"fingerprint", (dir.path() / file).string(), "-o", fp_path}));
        REQUIRE(r.exit_code == 0);
        base_fp_paths.push_back(fp_path);
    }
    auto member_fp_path = (dir.path() / "member.json").string();
    REQUIRE(run_cli(with_fast({"fingerprint",
                               (dir.path() / truth.members[0].file).string(), "-o",
                               member_fp_path}))
                .exit_code == 0);

    auto reg_path = (dir.path() / "registry.json").string();
    CliResult built = run_cli({"build-registry", "--bases", base_fp_paths[0], base_fp_paths[1],
                               "--members", member_fp_path, "-o", reg_path});
    REQUIRE(built.exit_code == 0);
    CHECK(built.json()["families"].size() == 2);

    CliResult classified = run_cli({"classify", "--registry", reg_path, base_fp_paths[0]});
    CHECK(classified.exit_code == 0);
    CHECK(classified.json()["verdict"] == "family");

    CliResult projected = run_cli({"compare", base_fp_paths[0], base_fp_paths[1], "--registry",
                                   reg_path});
    CHECK(projected.exit_code == 0);
    CHECK(projected.json()["space"] == "pca_normalized");
    CHECK(projected.json()["unnormalized"] == false);

    // A fingerprint far from every centroid is out-of-cluster: exit 3.
    ordered_json far = gradprint::cli::detail::load_json(base_fp_paths[0]);
    far["global_norm"] = far["global_norm"].get<double>() + 1e9;
    far["total_params"] = 1;
    {
        std::ofstream out(dir.path() / "far.json");
        out << far.dump();
    }
    CliResult ooc =
        run_cli({"classify", "--registry", reg_path, (dir.path() / "far.json").string()});
    CHECK(ooc.exit_code == 3);
    CHECK(ooc.json()["verdict"] == "out_of_cluster");
}

TEST_CASE("sensitivity command emits a z-scored table") {
    oracle::TempDir dir("cli_sens");
    auto model = write_model(dir.path(), "model.safetensors");
    CliResult r = run_cli({"sensitivity", model.string(), "--noise", "uniform",
                           "--iterations", "3", "--seed", "1"});
    REQUIRE(r.exit_code == 0);
    ordered_json j = r.json();
    CHECK(j["strategy"] == "uniform_random");
    CHECK(j["layers"].size() == 2);
    double sum = 0.0;
    for (const auto& [name, entry] : j["layers"].items())
        sum += entry["zscore"].get<double>();
    CHECK(std::abs(sum) < 1e-9);

    CliResult bad = run_cli({"sensitivity", model.string(), "--noise", "bogus"});
    CHECK(bad.exit_code == 5);
}

TEST_CASE("synth and eval run end to end at desk scale") {
    oracle::TempDir dir("cli_eval");
    SynthSpec spec;
    spec.families = 2;
    spec.derivatives_per_family = 2;
    spec.seed = 3;
    {
        std::ofstream out(dir.path() / "spec.json");
        out << to_json(spec).dump();
    }
    auto corpus = (dir.path() / "corpus").string();
    CliResult synth = run_cli({"synth", "--spec", (dir.path() / "spec.json").string(), "-o",
                               corpus});
    REQUIRE(synth.exit_code == 0);
    CHECK(synth.json()["families"] == 2);
    CHECK(synth.json()["members"] == 4);

    CliResult eval = run_cli(with_fast({"eval", "--corpus", corpus, "--baseline-seeds", "3"}));
    REQUIRE(eval.exit_code == 0);
    ordered_json j = eval.json();
    CHECK(j["members"] == 4);
    CHECK(j["accuracy"].get<double>() >= 0.0);
    CHECK(j["accuracy"].get<double>() <= 1.0);
    CHECK(j["standard_kmeans_accuracy"].size() == 3);
    CHECK(j["results"].size() == 4);
    CHECK(j["run_config"]["mode"] == "exact");
}

TEST_CASE("merge-shards and merge-adapter CLI round") {
    oracle::TempDir dir("cli_merge");
    write_file_to(dir.path() / "model-00001-of-00002.safetensors",
                  {f32_tensor("m.q_proj.weight", {4, 4}, std::vector<float>(16, 0.5f))});
    write_file_to(dir.path() / "model-00002-of-00002.safetensors",
                  {f32_tensor("m.up.weight", {2, 2}, {1, 2, 3, 4})});

    auto merged = (dir.path() / "merged.safetensors").string();
    CliResult shards = run_cli({"merge-shards", dir.path().string(), "-o", merged});
    REQUIRE(shards.exit_code == 0);
    CHECK(shards.json()["order"] == "shard_pattern"); // no index file, fallback
    CHECK(shards.json()["tensor_count"] == 2);
    CHECK(shards.err.find("falling back") != std::string::npos);

    std::filesystem::create_directories(dir.path() / "adapter");
    {
        std::ofstream out(dir.path() / "adapter" / "adapter_config.json");
        out << R"({"r": 1, "lora_alpha": 2.0, "target_modules": ["q_proj"]})";
    }
    write_file_to(dir.path() / "adapter" / "adapter_model.safetensors",
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {1, 4}, {1, 0, 0, 0}),
                   f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 1}, {1, 1, 1, 1})});
    auto lora_out = (dir.path() / "lora_merged.safetensors").string();
    CliResult lora = run_cli({"merge-adapter", "--base", merged, "--adapter",
                              (dir.path() / "adapter").string(), "-o", lora_out});
    REQUIRE(lora.exit_code == 0);
    CHECK(lora.json()["scaling"] == 2.0);
    CHECK(lora.json()["merged_targets"].size() == 1);
    HostTensor w = TensorFile::open(lora_out).read_tensor("m.q_proj.weight");
    CHECK(w.at(0, 0) == doctest::Approx(2.5f));
    CHECK(w.at(0, 1) == doctest::Approx(0.5f));
}

TEST_CASE("config files feed defaults, flags win") {
    oracle::TempDir dir("cli_config");
    auto model = write_model(dir.path(), "model.safetensors");

    {
        std::ofstream out(dir.path() / "config.json");
        out << R"({"fingerprint": {"seed": 7, "iterations": 2, "exact": true}})";
    }
    CliResult from_json_cfg = run_cli({"--config", (dir.path() / "config.json").string(),
                                       "fingerprint", model.string()});
    REQUIRE(from_json_cfg.exit_code == 0);
    CHECK(from_json_cfg.json()["extraction"]["seed"] == 7);
    CHECK(from_json_cfg.json()["extraction"]["iterations"] == 2);
    CHECK(from_json_cfg.json()["extraction"]["mode"] == "exact");

    CliResult overridden = run_cli({"--config", (dir.path() / "config.json").string(),
                                    "fingerprint", model.string(), "--seed", "9"});
    REQUIRE(overridden.exit_code == 0);
    CHECK(overridden.json()["extraction"]["seed"] == 9);

    {
        std::ofstream out(dir.path() / "config.toml");
        out << "[fingerprint]\nseed = 5\niterations = 2\nexact = true\n";
    }
    CliResult from_toml = run_cli({"--config", (dir.path() / "config.toml").string(),
                                   "fingerprint", model.string()});
    REQUIRE(from_toml.exit_code == 0);
    CHECK(from_toml.json()["extraction"]["seed"] == 5);
}

TEST_CASE("GRADPRINT_SEED supplies the default seed, below flags") {
    oracle::TempDir dir("cli_env");
    auto model = write_model(dir.path(), "model.safetensors");
    setenv("GRADPRINT_SEED", "123", 1);
    CliResult from_env = run_cli(with_fast({"fingerprint", model.string()}));
    CliResult flag_wins = run_cli(with_fast({"fingerprint", model.string(), "--seed", "4"}));
    unsetenv("GRADPRINT_SEED");
    REQUIRE(from_env.exit_code == 0);
    CHECK(from_env.json()["extraction"]["seed"] == 123);
    REQUIRE(flag_wins.exit_code == 0);
    CHECK(flag_wins.json()["extraction"]["seed"] == 4);
}

TEST_CASE("usage errors exit two; every document on stdout is single JSON") {
    CliResult nothing = run_cli({});
    CHECK(nothing.exit_code == 2);

    CliResult unknown = run_cli({"frobnicate"});
    CHECK(unknown.exit_code == 2);

    CliResult help = run_cli({"--help"});
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("fingerprint") != std::string::npos);
}

} // TEST_SUITE
