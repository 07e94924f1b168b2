// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <fstream>
#include <random>
#include <vector>

#include "gradprint/adapters.hpp"
#include "gradprint/gradsig.hpp"

#include "oracles.hpp"

using namespace gradprint;

namespace {

TensorData f32_tensor(const std::string& name, std::vector<std::uint64_t> shape,
                      std::vector<float> values) {
    return {name, DType::from_name("F32"), std::move(shape), std::move(values)};
}

void write_adapter(const std::filesystem::path& dir, int r, float alpha,
                   const std::vector<std::string>& target_modules,
                   const std::vector<TensorData>& lora_tensors) {
    std::filesystem::create_directories(dir);
    nlohmann::json config;
    config["r"] = r;
    config["lora_alpha"] = alpha;
    config["target_modules"] = target_modules;
    config["peft_type"] = "LORA"; // unknown keys are ignored
    std::ofstream out(dir / "adapter_config.json");
    out << config.dump(2);
    out.close();
    write_file_to(dir / "adapter_model.safetensors", lora_tensors);
}

std::vector<float> randn(std::size_t n, std::mt19937_64& gen) {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& e : v) e = dist(gen);
    return v;
}

} // namespace

TEST_SUITE("adapters") {

TEST_CASE("config scaling and key validation") {
    oracle::TempDir dir("adapter_cfg");
    write_adapter(dir.path(), 8, 16.0f, {"q_proj"},
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {8, 4},
                              std::vector<float>(32, 0.0f)),
                   f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 8},
                              std::vector<float>(32, 0.0f))});
    Adapter adapter = load_adapter(dir.path());
    CHECK(adapter.config.scaling() == doctest::Approx(2.0f));
    REQUIRE(adapter.pairs.size() == 1);
    CHECK(adapter.pairs[0].target == "m.q_proj.weight");

    oracle::TempDir missing("adapter_missing");
    std::filesystem::create_directories(missing.path());
    {
        std::ofstream out(missing.path() / "adapter_config.json");
        out << R"({"r": 8, "target_modules": ["q_proj"]})"; // lora_alpha absent
    }
    write_file_to(missing.path() / "adapter_model.safetensors", {});
    try {
        load_adapter(missing.path());
        FAIL("expected MissingConfigKey");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::missing_config_key);
    }
}

TEST_CASE("orphan lora tensors are rejected") {
    oracle::TempDir dir("adapter_orphan");
    write_adapter(dir.path(), 2, 4.0f, {"q_proj"},
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {2, 4},
                              std::vector<float>(8, 0.0f))});
    try {
        load_adapter(dir.path());
        FAIL("expected OrphanLoraTensor");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::orphan_lora_tensor);
    }
}

TEST_CASE("two targets give two shape-checked pairs") {
    oracle::TempDir dir("adapter_two");
    std::mt19937_64 gen(1);
    write_adapter(
        dir.path(), 2, 4.0f, {"q_proj", "v_proj"},
        {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {2, 4}, randn(8, gen)),
         f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 2}, randn(8, gen)),
         f32_tensor("base_model.model.m.v_proj.lora_A.weight", {2, 4}, randn(8, gen)),
         f32_tensor("base_model.model.m.v_proj.lora_B.weight", {4, 2}, randn(8, gen))});
    Adapter adapter = load_adapter(dir.path());
    REQUIRE(adapter.pairs.size() == 2);
    CHECK(adapter.pairs[0].target == "m.q_proj.weight");
    CHECK(adapter.pairs[1].target == "m.v_proj.weight");
    for (const auto& pair : adapter.pairs) {
        CHECK(pair.a.rows() == 2);
        CHECK(pair.a.cols() == 4);
        CHECK(pair.b.rows() == 4);
        CHECK(pair.b.cols() == 2);
        CHECK(matches_target_modules(pair.target, adapter.config));
    }
}

TEST_CASE("rank-1 merge onto a zero base isolates the update") {
    oracle::TempDir dir("adapter_zero_base");
    write_file_to(dir.path() / "base.safetensors",
                  {f32_tensor("m.q_proj.weight", {4, 4}, std::vector<float>(16, 0.0f)),
                   f32_tensor("m.other.weight", {2, 2}, {9, 8, 7, 6})});
    // A is a single [1,4] row, B a [4,1] column of ones, scaling 2 (alpha 2, r 1).
    write_adapter(dir.path() / "adapter", 1, 2.0f, {"q_proj"},
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {1, 4}, {1, 2, 3, 4}),
                   f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 1}, {1, 1, 1, 1})});

    Adapter adapter = load_adapter(dir.path() / "adapter");
    merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "merged.safetensors");

    TensorFile merged = TensorFile::open(dir.path() / "merged.safetensors");
    HostTensor w = merged.read_tensor("m.q_proj.weight");
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(w.at(i, j) == doctest::Approx(2.0f * static_cast<float>(j + 1)));
    CHECK(merged.read_tensor("m.other.weight").values == std::vector<float>{9, 8, 7, 6});
    CHECK(merged.index().metadata->at("lora_target_dtype") == "F32");
}

TEST_CASE("zero adapter is the identity") {
    oracle::TempDir dir("adapter_identity");
    std::mt19937_64 gen(2);
    auto base_w = randn(16, gen);
    auto other = randn(4, gen);
    write_file_to(dir.path() / "base.safetensors",
                  {f32_tensor("m.q_proj.weight", {4, 4}, base_w),
                   f32_tensor("m.bias", {4}, other)});
    write_adapter(dir.path() / "adapter", 2, 4.0f, {"q_proj"},
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {2, 4},
                              std::vector<float>(8, 0.0f)),
                   f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 2}, randn(8, gen))});

    Adapter adapter = load_adapter(dir.path() / "adapter");
    merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "merged.safetensors");

    TensorFile base = TensorFile::open(dir.path() / "base.safetensors");
    TensorFile merged = TensorFile::open(dir.path() / "merged.safetensors");
    CHECK(merged.read_raw("m.q_proj.weight") == base.read_raw("m.q_proj.weight"));
    CHECK(merged.read_raw("m.bias") == base.read_raw("m.bias"));
}

TEST_CASE("merged model matches base output plus the scaled low-rank term") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 20; ++trial) {
        oracle::TempDir dir("adapter_fwd");
        const std::size_t out_dim = 8, in_dim = 8, r = 2;
        auto w = randn(out_dim * in_dim, gen);
        auto a = randn(r * in_dim, gen);
        auto b = randn(out_dim * r, gen);
        auto x = randn(in_dim, gen);
        const float alpha = 3.0f;
        const double scaling = alpha / static_cast<double>(r);

        write_file_to(dir.path() / "base.safetensors",
                      {f32_tensor("m.q_proj.weight", {out_dim, in_dim}, w)});
        write_adapter(dir.path() / "adapter", r, alpha, {"q_proj"},
                      {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {r, in_dim}, a),
                       f32_tensor("base_model.model.m.q_proj.lora_B.weight", {out_dim, r}, b)});
        Adapter adapter = load_adapter(dir.path() / "adapter");
        merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "merged.safetensors");

        HostTensor merged =
            TensorFile::open(dir.path() / "merged.safetensors").read_tensor("m.q_proj.weight");
        auto merged_out = forward(x, merged);

        // Independent route: forward(x, W) + scaling * (x A^T) B^T.
        for (std::size_t i = 0; i < out_dim; ++i) {
            double base_out = 0.0;
            for (std::size_t j = 0; j < in_dim; ++j)
                base_out += static_cast<double>(w[i * in_dim + j]) * x[j];
            double lora = 0.0;
            for (std::size_t k = 0; k < r; ++k) {
                double xa = 0.0;
                for (std::size_t j = 0; j < in_dim; ++j)
                    xa += static_cast<double>(a[k * in_dim + j]) * x[j];
                lora += xa * static_cast<double>(b[i * r + k]);
            }
            double expect = base_out + scaling * lora;
            CHECK(std::abs(merged_out[i] - expect) < 1e-5 * (1.0 + std::abs(expect)));
        }
    }
}

TEST_CASE("the weight delta has rank at most r") {
    oracle::TempDir dir("adapter_rank");
    std::mt19937_64 gen(4);
    const std::size_t n = 16, r = 2;
    auto w = randn(n * n, gen);
    write_file_to(dir.path() / "base.safetensors", {f32_tensor("m.q_proj.weight", {n, n}, w)});
    write_adapter(dir.path() / "adapter", r, 4.0f, {"q_proj"},
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {r, n}, randn(r * n, gen)),
                   f32_tensor("base_model.model.m.q_proj.lora_B.weight", {n, r}, randn(n * r, gen))});
    Adapter adapter = load_adapter(dir.path() / "adapter");
    merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "merged.safetensors");

    HostTensor merged =
        TensorFile::open(dir.path() / "merged.safetensors").read_tensor("m.q_proj.weight");
    std::vector<double> delta(n * n);
    for (std::size_t i = 0; i < n * n; ++i)
        delta[i] = static_cast<double>(merged.values[i]) - static_cast<double>(w[i]);
    auto sv = oracle::singular_values(delta, n, n);
    for (std::size_t i = r; i < sv.size(); ++i) CHECK(sv[i] < 1e-4);
    CHECK(sv[r - 1] > 1e-2); // the update itself is not degenerate
}

TEST_CASE("merge error paths") {
    oracle::TempDir dir("adapter_errors");
    std::mt19937_64 gen(5);
    write_file_to(dir.path() / "base.safetensors",
                  {f32_tensor("m.q_proj.weight", {4, 4}, randn(16, gen))});

    SUBCASE("target not found") {
        write_adapter(dir.path() / "adapter", 1, 1.0f, {"k_proj"},
                      {f32_tensor("base_model.model.m.k_proj.lora_A.weight", {1, 4}, randn(4, gen)),
                       f32_tensor("base_model.model.m.k_proj.lora_B.weight", {4, 1}, randn(4, gen))});
        Adapter adapter = load_adapter(dir.path() / "adapter");
        try {
            merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "out.safetensors");
            FAIL("expected TargetNotFound");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::target_not_found);
        }
    }

    SUBCASE("shape incompatible") {
        write_adapter(dir.path() / "adapter", 1, 1.0f, {"q_proj"},
                      {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {1, 6}, randn(6, gen)),
                       f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 1}, randn(4, gen))});
        Adapter adapter = load_adapter(dir.path() / "adapter");
        try {
            merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "out.safetensors");
            FAIL("expected ShapeIncompatible");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::shape_incompatible);
        }
    }
}

TEST_CASE("merging is deterministic") {
    oracle::TempDir dir("adapter_det");
    std::mt19937_64 gen(6);
    write_file_to(dir.path() / "base.safetensors",
                  {f32_tensor("m.q_proj.weight", {4, 4}, randn(16, gen))});
    write_adapter(dir.path() / "adapter", 2, 4.0f, {"q_proj"},
                  {f32_tensor("base_model.model.m.q_proj.lora_A.weight", {2, 4}, randn(8, gen)),
                   f32_tensor("base_model.model.m.q_proj.lora_B.weight", {4, 2}, randn(8, gen))});
    Adapter adapter = load_adapter(dir.path() / "adapter");
    merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "m1.safetensors");
    merge_lora(dir.path() / "base.safetensors", adapter, dir.path() / "m2.safetensors");

    auto read_all = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::vector<char>((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
    };
    CHECK(read_all(dir.path() / "m1.safetensors") == read_all(dir.path() / "m2.safetensors"));
}

} // TEST_SUITE
