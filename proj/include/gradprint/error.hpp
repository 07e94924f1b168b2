// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gradprint {

enum class ErrorCode {
    // file format
    truncated_file,
    malformed_header,
    offset_out_of_range,
    unknown_tensor,
    unsupported_dtype,
    duplicate_name,
    shape_mismatch,
    // shard / adapter merging
    missing_index_entry,
    duplicate_tensor_across_shards,
    no_shards_found,
    orphan_lora_tensor,
    missing_config_key,
    target_not_found,
    shape_incompatible,
    // analysis
    missing_weight,
    dimension_mismatch,
    degenerate_output,
    no_eligible_layers,
    insufficient_samples,
    empty_input,
    empty_bases,
    too_few_points,
    // environment
    io_error,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::truncated_file: return "TruncatedFile";
    case ErrorCode::malformed_header: return "MalformedHeader";
    case ErrorCode::offset_out_of_range: return "OffsetOutOfRange";
    case ErrorCode::unknown_tensor: return "UnknownTensor";
    case ErrorCode::unsupported_dtype: return "UnsupportedDType";
    case ErrorCode::duplicate_name: return "DuplicateName";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::missing_index_entry: return "MissingIndexEntry";
    case ErrorCode::duplicate_tensor_across_shards: return "DuplicateTensorAcrossShards";
    case ErrorCode::no_shards_found: return "NoShardsFound";
    case ErrorCode::orphan_lora_tensor: return "OrphanLoraTensor";
    case ErrorCode::missing_config_key: return "MissingConfigKey";
    case ErrorCode::target_not_found: return "TargetNotFound";
    case ErrorCode::shape_incompatible: return "ShapeIncompatible";
    case ErrorCode::missing_weight: return "MissingWeight";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::degenerate_output: return "DegenerateOutput";
    case ErrorCode::no_eligible_layers: return "NoEligibleLayers";
    case ErrorCode::insufficient_samples: return "InsufficientSamples";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::empty_bases: return "EmptyBases";
    case ErrorCode::too_few_points: return "TooFewPoints";
    case ErrorCode::io_error: return "IoError";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

// Exit-code classes used by the CLI; kept here so library consumers can map
// errors the same way scripts do.
//   0 success, 1 internal, 2 usage, 3 out-of-cluster,
//   4 format error, 5 merge/adapter error, 6 analysis error
inline int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::truncated_file:
    case ErrorCode::malformed_header:
    case ErrorCode::offset_out_of_range:
    case ErrorCode::unknown_tensor:
    case ErrorCode::unsupported_dtype:
    case ErrorCode::duplicate_name:
    case ErrorCode::shape_mismatch:
        return 4;
    case ErrorCode::missing_index_entry:
    case ErrorCode::duplicate_tensor_across_shards:
    case ErrorCode::no_shards_found:
    case ErrorCode::orphan_lora_tensor:
    case ErrorCode::missing_config_key:
    case ErrorCode::target_not_found:
    case ErrorCode::shape_incompatible:
        return 5;
    case ErrorCode::missing_weight:
    case ErrorCode::dimension_mismatch:
    case ErrorCode::degenerate_output:
    case ErrorCode::no_eligible_layers:
    case ErrorCode::insufficient_samples:
    case ErrorCode::empty_input:
    case ErrorCode::empty_bases:
    case ErrorCode::too_few_points:
        return 6;
    case ErrorCode::io_error:
        return 1;
    }
    return 1;
}

} // namespace gradprint
