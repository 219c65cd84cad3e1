#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "profiler/tensor.hpp"

namespace profiler::io {

/// Checkpoint container: 8-byte magic "PRFCKPT1", little-endian u64 manifest
/// length, UTF-8 JSON manifest {format_version: 1, model_config, tensors:
/// [{name, shape, dtype: "f32", byte_offset, byte_length}]}, then the packed
/// little-endian f32 blob in table order. Offsets are relative to the blob
/// start, contiguous and non-overlapping. Values are stored as f32; runtime
/// math is f64, so a save/load round trip may move any downstream probability
/// by up to ~1e-4, while save -> load -> save is byte-identical.
struct NamedTensor {
    std::string name;
    Tensor value;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& config_json,
                     const std::vector<NamedTensor>& tensors);

struct LoadedCheckpoint {
    std::string config_json;  // the manifest's model_config subtree, serialized
    std::vector<NamedTensor> tensors;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64-bit digests, used for input fingerprints in run manifests.
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Write-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct RunManifest {
    std::string command_line;
    std::uint64_t seed = 0;
    std::string config_json;
    std::vector<std::pair<std::string, std::uint64_t>> input_digests;  // path, fnv1a64
    std::string started_utc;
    std::string finished_utc;
};

/// Serialized as JSON, written atomically at the end of a run.
void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest);

std::string utc_timestamp_now();

}  // namespace profiler::io
