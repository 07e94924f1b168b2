// SPDX-License-Identifier: Apache-2.0
#pragma once

// safetensors parsing, validation, writing, and shard merging.
//
// Layout: 8-byte little-endian header length, UTF-8 JSON header (possibly
// space-padded), then the raw data region. Header entries map tensor names to
// {dtype, shape, data_offsets}, with offsets relative to the data region.
//
// Parsing is strict about offsets (out-of-range fails) but tolerant of
// overlap/gap anomalies, which are reported by a separate validate() pass so
// malformed files can still be inspected.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gradprint/dtype.hpp"
#include "gradprint/error.hpp"

namespace gradprint {

using ordered_json = nlohmann::ordered_json;

struct TensorInfo {
    std::string name;
    DType dtype;
    std::vector<std::uint64_t> shape;
    std::uint64_t begin = 0; // byte offsets relative to data region start
    std::uint64_t end = 0;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    std::uint64_t byte_size() const { return end - begin; }
};

struct FileIndex {
    std::uint64_t header_len = 0;
    std::optional<std::map<std::string, std::string>> metadata;
    std::vector<TensorInfo> tensors; // header order preserved
    std::uint64_t data_region_len = 0;

    const TensorInfo* find(std::string_view name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

struct Violation {
    enum class Kind { overlap, gap, out_of_range, zero_sized_alias };

    Kind kind;
    std::string a;
    std::string b;
    std::uint64_t offset = 0;

    std::string describe() const {
        switch (kind) {
        case Kind::overlap: return "Overlap(" + a + ", " + b + ")";
        case Kind::gap: return "Gap(" + std::to_string(offset) + ")";
        case Kind::out_of_range: return "OutOfRange(" + a + ")";
        case Kind::zero_sized_alias: return "ZeroSizedAlias(" + a + ", " + b + ")";
        }
        return "?";
    }
};

namespace detail {

inline std::uint64_t read_le64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline void write_le64(std::uint64_t v, std::uint8_t* p) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF);
}

inline FileIndex parse_header_json(std::string_view header_text, std::uint64_t header_len,
                                   std::uint64_t data_region_len) {
    ordered_json root;
    try {
        root = ordered_json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::malformed_header, std::string("header is not valid JSON: ") + e.what());
    }
    if (!root.is_object())
        raise(ErrorCode::malformed_header, "header root must be a JSON object");

    FileIndex index;
    index.header_len = header_len;
    index.data_region_len = data_region_len;

    for (auto it = root.begin(); it != root.end(); ++it) {
        const std::string& key = it.key();
        const ordered_json& value = it.value();
        if (key == "__metadata__") {
            if (!value.is_object())
                raise(ErrorCode::malformed_header, "__metadata__ must be an object");
            std::map<std::string, std::string> meta;
            for (auto mit = value.begin(); mit != value.end(); ++mit) {
                if (!mit.value().is_string())
                    raise(ErrorCode::malformed_header, "__metadata__ values must be strings");
                meta[mit.key()] = mit.value().get<std::string>();
            }
            index.metadata = std::move(meta);
            continue;
        }

        if (!value.is_object())
            raise(ErrorCode::malformed_header, "tensor entry '" + key + "' must be an object");
        if (!value.contains("dtype") || !value.contains("shape") || !value.contains("data_offsets"))
            raise(ErrorCode::malformed_header,
                  "tensor entry '" + key + "' missing dtype/shape/data_offsets");

        TensorInfo info;
        info.name = key;
        if (!value["dtype"].is_string())
            raise(ErrorCode::malformed_header, "dtype of '" + key + "' must be a string");
        info.dtype = DType::from_name(value["dtype"].get<std::string>());

        if (!value["shape"].is_array())
            raise(ErrorCode::malformed_header, "shape of '" + key + "' must be an array");
        for (const auto& dim : value["shape"]) {
            if (!dim.is_number_integer() || dim.get<std::int64_t>() < 0)
                raise(ErrorCode::malformed_header, "shape of '" + key + "' has a negative or non-integer dim");
            info.shape.push_back(dim.get<std::uint64_t>());
        }

        const auto& offsets = value["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2 || !offsets[0].is_number_integer() ||
            !offsets[1].is_number_integer() || offsets[0].get<std::int64_t>() < 0 ||
            offsets[1].get<std::int64_t>() < 0)
            raise(ErrorCode::malformed_header, "data_offsets of '" + key + "' must be two non-negative integers");
        info.begin = offsets[0].get<std::uint64_t>();
        info.end = offsets[1].get<std::uint64_t>();
        if (info.begin > info.end)
            raise(ErrorCode::malformed_header, "data_offsets of '" + key + "' has begin > end");

        if (info.dtype.supported()) {
            std::uint64_t expected = info.dtype.byte_width() * info.element_count();
            if (info.end - info.begin != expected)
                raise(ErrorCode::malformed_header,
                      "size mismatch for '" + key + "': " + std::to_string(info.end - info.begin) +
                          " bytes declared, " + std::to_string(expected) + " expected");
        }
        if (info.end > data_region_len)
            raise(ErrorCode::offset_out_of_range,
                  "tensor '" + key + "' ends at " + std::to_string(info.end) +
                      " beyond data region of " + std::to_string(data_region_len) + " bytes");

        index.tensors.push_back(std::move(info));
    }
    return index;
}

} // namespace detail

inline FileIndex parse_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8)
        raise(ErrorCode::truncated_file,
              "file has " + std::to_string(bytes.size()) + " bytes, need at least 8");
    std::uint64_t header_len = detail::read_le64(bytes.data());
    if (header_len > bytes.size() - 8)
        raise(ErrorCode::truncated_file,
              "header length " + std::to_string(header_len) + " exceeds file size");
    std::string_view header_text(reinterpret_cast<const char*>(bytes.data()) + 8,
                                 static_cast<std::size_t>(header_len));
    return detail::parse_header_json(header_text, header_len, bytes.size() - 8 - header_len);
}

inline std::vector<Violation> validate(const FileIndex& index) {
    std::vector<Violation> out;

    for (const auto& t : index.tensors) {
        if (t.begin > t.end || t.end > index.data_region_len)
            out.push_back({Violation::Kind::out_of_range, t.name, {}, t.begin});
    }

    const auto& ts = index.tensors;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        for (std::size_t j = i + 1; j < ts.size(); ++j) {
            bool intersect = ts[i].begin < ts[j].end && ts[j].begin < ts[i].end;
            if (intersect)
                out.push_back({Violation::Kind::overlap, ts[i].name, ts[j].name, 0});
            bool alias = ts[i].begin == ts[j].begin &&
                         (ts[i].byte_size() == 0 || ts[j].byte_size() == 0);
            if (alias)
                out.push_back({Violation::Kind::zero_sized_alias, ts[i].name, ts[j].name, 0});
        }
    }

    // Coverage: the union of intervals, sorted by begin, must tile
    // [0, data_region_len) without holes.
    std::vector<const TensorInfo*> sorted;
    sorted.reserve(ts.size());
    for (const auto& t : ts) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(), [](const TensorInfo* a, const TensorInfo* b) {
        return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
    });
    std::uint64_t cursor = 0;
    for (const auto* t : sorted) {
        if (t->begin > cursor) {
            out.push_back({Violation::Kind::gap, {}, {}, cursor});
            cursor = t->begin;
        }
        cursor = std::max(cursor, t->end);
    }
    if (cursor < index.data_region_len)
        out.push_back({Violation::Kind::gap, {}, {}, cursor});

    return out;
}

// In-memory tensor with values widened/narrowed to f32. 2-D views flatten
// trailing dimensions, matching the row-major [out, in] weight convention.
struct HostTensor {
    std::vector<std::uint64_t> shape;
    std::vector<float> values;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    std::size_t rows() const { return shape.empty() ? 1 : static_cast<std::size_t>(shape[0]); }
    std::size_t cols() const {
        if (shape.empty()) return 1;
        std::uint64_t c = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
        return static_cast<std::size_t>(c);
    }
    float at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

namespace detail {

inline std::vector<float> bytes_to_f32(const DType& dtype, std::span<const std::uint8_t> bytes,
                                       std::uint64_t count, const std::string& name) {
    static_assert(std::endian::native == std::endian::little,
                  "safetensors payloads are little-endian");
    std::vector<float> values(static_cast<std::size_t>(count));
    switch (dtype.tag) {
    case DType::Tag::f32:
        std::memcpy(values.data(), bytes.data(), bytes.size());
        break;
    case DType::Tag::f64: {
        const double* src = reinterpret_cast<const double*>(bytes.data());
        for (std::uint64_t i = 0; i < count; ++i)
            values[i] = static_cast<float>(src[i]); // round-to-nearest narrowing
        break;
    }
    case DType::Tag::f16: {
        const std::uint16_t* src = reinterpret_cast<const std::uint16_t*>(bytes.data());
        for (std::uint64_t i = 0; i < count; ++i) values[i] = f16_bits_to_f32(src[i]);
        break;
    }
    case DType::Tag::bf16: {
        const std::uint16_t* src = reinterpret_cast<const std::uint16_t*>(bytes.data());
        for (std::uint64_t i = 0; i < count; ++i) values[i] = bf16_bits_to_f32(src[i]);
        break;
    }
    case DType::Tag::unsupported:
        raise(ErrorCode::unsupported_dtype, name + " has dtype " + dtype.name);
    }
    return values;
}

inline std::vector<std::uint8_t> f32_to_bytes(const DType& dtype, std::span<const float> values,
                                              const std::string& name) {
    std::vector<std::uint8_t> bytes(values.size() * dtype.byte_width());
    switch (dtype.tag) {
    case DType::Tag::f32:
        std::memcpy(bytes.data(), values.data(), bytes.size());
        break;
    case DType::Tag::f64: {
        double* dst = reinterpret_cast<double*>(bytes.data());
        for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<double>(values[i]);
        break;
    }
    case DType::Tag::f16: {
        std::uint16_t* dst = reinterpret_cast<std::uint16_t*>(bytes.data());
        for (std::size_t i = 0; i < values.size(); ++i) dst[i] = f32_to_f16_bits(values[i]);
        break;
    }
    case DType::Tag::bf16: {
        std::uint16_t* dst = reinterpret_cast<std::uint16_t*>(bytes.data());
        for (std::size_t i = 0; i < values.size(); ++i) dst[i] = f32_to_bf16_bits(values[i]);
        break;
    }
    case DType::Tag::unsupported:
        raise(ErrorCode::unsupported_dtype, name + " has dtype " + dtype.name);
    }
    return bytes;
}

} // namespace detail

// Read access to a safetensors file on disk. Only the header is held in
// memory; tensor reads seek to the tensor's byte range, so the high-water
// mark is O(largest single tensor), never O(file).
class TensorFile {
public:
    static TensorFile open(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) raise(ErrorCode::io_error, "cannot open " + path.string());

        std::uint64_t file_size = 0;
        {
            std::error_code ec;
            auto sz = std::filesystem::file_size(path, ec);
            if (ec) raise(ErrorCode::io_error, "cannot stat " + path.string());
            file_size = sz;
        }
        if (file_size < 8)
            raise(ErrorCode::truncated_file,
                  path.string() + " has " + std::to_string(file_size) + " bytes, need at least 8");

        std::uint8_t len_bytes[8];
        in.read(reinterpret_cast<char*>(len_bytes), 8);
        if (!in) raise(ErrorCode::io_error, "short read on " + path.string());
        std::uint64_t header_len = detail::read_le64(len_bytes);
        if (header_len > file_size - 8)
            raise(ErrorCode::truncated_file,
                  "header length " + std::to_string(header_len) + " exceeds file size of " +
                      path.string());

        std::string header_text(static_cast<std::size_t>(header_len), '\0');
        in.read(header_text.data(), static_cast<std::streamsize>(header_len));
        if (!in) raise(ErrorCode::io_error, "short read on " + path.string());

        TensorFile file;
        file.path_ = path;
        file.index_ = detail::parse_header_json(header_text, header_len,
                                                file_size - 8 - header_len);
        file.data_offset_ = 8 + header_len;
        return file;
    }

    const FileIndex& index() const { return index_; }
    const std::filesystem::path& path() const { return path_; }

    std::vector<std::uint8_t> read_raw(std::string_view name) const {
        const TensorInfo* info = index_.find(name);
        if (!info) raise(ErrorCode::unknown_tensor, "no tensor named '" + std::string(name) + "'");
        std::ifstream in(path_, std::ios::binary);
        if (!in) raise(ErrorCode::io_error, "cannot open " + path_.string());
        in.seekg(static_cast<std::streamoff>(data_offset_ + info->begin));
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(info->byte_size()));
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!in) raise(ErrorCode::io_error, "short read on " + path_.string());
        return bytes;
    }

    HostTensor read_tensor(std::string_view name) const {
        const TensorInfo* info = index_.find(name);
        if (!info) raise(ErrorCode::unknown_tensor, "no tensor named '" + std::string(name) + "'");
        if (!info->dtype.supported())
            raise(ErrorCode::unsupported_dtype, info->name + " has dtype " + info->dtype.name);
        auto bytes = read_raw(name);
        HostTensor t;
        t.shape = info->shape;
        t.values = detail::bytes_to_f32(info->dtype, bytes, info->element_count(), info->name);
        return t;
    }

private:
    std::filesystem::path path_;
    FileIndex index_;
    std::uint64_t data_offset_ = 0;
};

// ---------------------------------------------------------------------------
// Writing

struct TensorData {
    std::string name;
    DType dtype;
    std::vector<std::uint64_t> shape;
    std::vector<float> values;
};

namespace detail {

struct RawTensorSpec {
    std::string name;
    std::string dtype;
    std::vector<std::uint64_t> shape;
    std::uint64_t byte_size = 0;
};

// JSON header for tensors laid out contiguously in the given order, padded
// with 0x20 to an 8-byte multiple, prefixed with the LE64 length.
inline std::vector<std::uint8_t> build_header(const std::vector<RawTensorSpec>& specs,
                                              const std::map<std::string, std::string>& metadata) {
    ordered_json root = ordered_json::object();
    if (!metadata.empty()) {
        ordered_json meta = ordered_json::object();
        for (const auto& [k, v] : metadata) meta[k] = v;
        root["__metadata__"] = std::move(meta);
    }
    std::uint64_t offset = 0;
    for (const auto& spec : specs) {
        ordered_json entry = ordered_json::object();
        entry["dtype"] = spec.dtype;
        entry["shape"] = spec.shape;
        entry["data_offsets"] = {offset, offset + spec.byte_size};
        root[spec.name] = std::move(entry);
        offset += spec.byte_size;
    }

    std::string text = root.dump();
    while (text.size() % 8 != 0) text.push_back(' ');

    std::vector<std::uint8_t> header(8 + text.size());
    write_le64(text.size(), header.data());
    std::memcpy(header.data() + 8, text.data(), text.size());
    return header;
}

} // namespace detail

inline std::vector<std::uint8_t> write_file(const std::vector<TensorData>& tensors,
                                            const std::map<std::string, std::string>& metadata = {}) {
    std::vector<detail::RawTensorSpec> specs;
    specs.reserve(tensors.size());
    for (const auto& t : tensors) {
        for (const auto& s : specs)
            if (s.name == t.name) raise(ErrorCode::duplicate_name, "tensor '" + t.name + "' given twice");
        std::uint64_t count = 1;
        for (auto d : t.shape) count *= d;
        if (count != t.values.size())
            raise(ErrorCode::shape_mismatch,
                  "tensor '" + t.name + "' has " + std::to_string(t.values.size()) +
                      " values but shape implies " + std::to_string(count));
        specs.push_back({t.name, t.dtype.name, t.shape, count * t.dtype.byte_width()});
    }

    std::vector<std::uint8_t> out = detail::build_header(specs, metadata);
    for (const auto& t : tensors) {
        auto bytes = detail::f32_to_bytes(t.dtype, t.values, t.name);
        out.insert(out.end(), bytes.begin(), bytes.end());
    }
    return out;
}

inline void save_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) raise(ErrorCode::io_error, "write failed for " + path.string());
}

inline void write_file_to(const std::filesystem::path& path, const std::vector<TensorData>& tensors,
                          const std::map<std::string, std::string>& metadata = {}) {
    auto bytes = write_file(tensors, metadata);
    save_bytes(path, bytes);
}

// ---------------------------------------------------------------------------
// Shard merging

enum class MergeStrategy { index_file, pattern };

struct MergeReport {
    std::vector<std::string> shard_files; // in merge order
    std::size_t tensor_count = 0;
    std::string order; // "weight_map" or "shard_pattern"
};

namespace detail {

struct MergePlanEntry {
    std::string name;
    std::size_t shard; // index into shard list
};

inline MergeReport merge_to_file(const std::vector<TensorFile>& shards,
                                 const std::vector<MergePlanEntry>& plan, const std::string& order,
                                 const std::filesystem::path& out_path) {
    std::vector<RawTensorSpec> specs;
    specs.reserve(plan.size());
    for (const auto& entry : plan) {
        const TensorInfo* info = shards[entry.shard].index().find(entry.name);
        specs.push_back({entry.name, info->dtype.name, info->shape, info->byte_size()});
    }

    std::map<std::string, std::string> metadata{{"merge_order", order}};
    auto header = build_header(specs, metadata);

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::io_error, "cannot write " + out_path.string());
    out.write(reinterpret_cast<const char*>(header.data()),
              static_cast<std::streamsize>(header.size()));
    for (const auto& entry : plan) {
        auto bytes = shards[entry.shard].read_raw(entry.name); // one tensor at a time
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) raise(ErrorCode::io_error, "write failed for " + out_path.string());

    MergeReport report;
    for (const auto& shard : shards)
        report.shard_files.push_back(shard.path().filename().string());
    report.tensor_count = plan.size();
    report.order = order;
    return report;
}

// Every tensor name must live in exactly one shard.
inline void check_shard_disjointness(const std::vector<TensorFile>& shards) {
    std::map<std::string, std::string> owner;
    for (const auto& shard : shards) {
        for (const auto& t : shard.index().tensors) {
            auto [it, inserted] = owner.emplace(t.name, shard.path().filename().string());
            if (!inserted)
                raise(ErrorCode::duplicate_tensor_across_shards,
                      "tensor '" + t.name + "' appears in both " + it->second + " and " +
                          shard.path().filename().string());
        }
    }
}

inline std::vector<TensorFile> open_shards(const std::vector<std::filesystem::path>& paths) {
    std::vector<TensorFile> shards;
    shards.reserve(paths.size());
    for (const auto& p : paths) shards.push_back(TensorFile::open(p));
    return shards;
}

} // namespace detail

inline MergeReport merge_shards(const std::filesystem::path& dir, MergeStrategy strategy,
                                const std::filesystem::path& out_path) {
    namespace fs = std::filesystem;

    if (strategy == MergeStrategy::index_file) {
        fs::path index_path = dir / "model.safetensors.index.json";
        std::ifstream in(index_path);
        if (!in)
            raise(ErrorCode::no_shards_found,
                  "no model.safetensors.index.json in " + dir.string());
        ordered_json root;
        try {
            root = ordered_json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            raise(ErrorCode::malformed_header,
                  "invalid index file " + index_path.string() + ": " + e.what());
        }
        if (!root.contains("weight_map") || !root["weight_map"].is_object())
            raise(ErrorCode::malformed_header, "index file has no weight_map object");
        const auto& weight_map = root["weight_map"];
        if (weight_map.empty())
            raise(ErrorCode::no_shards_found, "weight_map of " + index_path.string() + " is empty");

        // Shards in order of first appearance; tensors in weight_map order.
        std::vector<fs::path> shard_paths;
        std::vector<std::size_t> shard_of_tensor;
        std::vector<std::string> tensor_names;
        for (auto it = weight_map.begin(); it != weight_map.end(); ++it) {
            if (!it.value().is_string())
                raise(ErrorCode::malformed_header, "weight_map values must be file names");
            fs::path shard = dir / it.value().get<std::string>();
            std::size_t idx = 0;
            for (; idx < shard_paths.size(); ++idx)
                if (shard_paths[idx] == shard) break;
            if (idx == shard_paths.size()) shard_paths.push_back(shard);
            tensor_names.push_back(it.key());
            shard_of_tensor.push_back(idx);
        }

        std::vector<TensorFile> shards = detail::open_shards(shard_paths);
        detail::check_shard_disjointness(shards);

        std::vector<detail::MergePlanEntry> plan;
        plan.reserve(tensor_names.size());
        for (std::size_t i = 0; i < tensor_names.size(); ++i) {
            if (!shards[shard_of_tensor[i]].index().find(tensor_names[i]))
                raise(ErrorCode::missing_index_entry,
                      "weight_map names '" + tensor_names[i] + "' in " +
                          shard_paths[shard_of_tensor[i]].filename().string() +
                          " but that shard lacks it");
            plan.push_back({tensor_names[i], shard_of_tensor[i]});
        }
        return detail::merge_to_file(shards, plan, "weight_map", out_path);
    }

    // Pattern strategy: model-(\d+)-of-(\d+).safetensors ordered by the first
    // capture; plain lexicographic *.safetensors as a last resort.
    static const std::regex shard_re(R"(model-(\d+)-of-(\d+)\.safetensors)");
    std::vector<std::pair<std::uint64_t, fs::path>> numbered;
    std::vector<fs::path> all_safetensors;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        fs::path p = entry.path();
        if (p.extension() != ".safetensors") continue;
        if (fs::exists(out_path) && fs::equivalent(p, out_path, ec)) continue;
        all_safetensors.push_back(p);
        std::smatch m;
        std::string fname = p.filename().string();
        if (std::regex_match(fname, m, shard_re))
            numbered.emplace_back(std::stoull(m[1].str()), p);
    }
    if (ec) raise(ErrorCode::io_error, "cannot list " + dir.string());

    std::vector<fs::path> shard_paths;
    if (!numbered.empty()) {
        std::sort(numbered.begin(), numbered.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first < b.first : a.second < b.second;
        });
        for (auto& [n, p] : numbered) shard_paths.push_back(p);
    } else {
        std::sort(all_safetensors.begin(), all_safetensors.end(),
                  [](const fs::path& a, const fs::path& b) {
                      return a.filename().string() < b.filename().string();
                  });
        shard_paths = all_safetensors;
    }
    if (shard_paths.empty())
        raise(ErrorCode::no_shards_found, "no .safetensors shards in " + dir.string());

    std::vector<TensorFile> shards = detail::open_shards(shard_paths);
    detail::check_shard_disjointness(shards);

    std::vector<detail::MergePlanEntry> plan;
    for (std::size_t s = 0; s < shards.size(); ++s)
        for (const auto& t : shards[s].index().tensors) plan.push_back({t.name, s});
    return detail::merge_to_file(shards, plan, "shard_pattern", out_path);
}

} // namespace gradprint
