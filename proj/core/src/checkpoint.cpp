#include "profiler/checkpoint.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "profiler/errors.hpp"

namespace profiler::io {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'P', 'R', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

void put_f32_le(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32_le(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& config_json,
                     const std::vector<NamedTensor>& tensors) {
    json manifest;
    manifest["format_version"] = 1;
    try {
        manifest["model_config"] = config_json.empty() ? json::object() : json::parse(config_json);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("save_checkpoint: config is not valid JSON: ") + e.what());
    }

    json table = json::array();
    std::uint64_t offset = 0;
    for (const auto& nt : tensors) {
        json entry;
        entry["name"] = nt.name;
        entry["shape"] = nt.value.shape();
        entry["dtype"] = "f32";
        entry["byte_offset"] = offset;
        entry["byte_length"] = static_cast<std::uint64_t>(nt.value.numel()) * 4;
        offset += static_cast<std::uint64_t>(nt.value.numel()) * 4;
        table.push_back(std::move(entry));
    }
    manifest["tensors"] = std::move(table);

    std::string out(kMagic, sizeof kMagic);
    const std::string manifest_text = manifest.dump();
    put_u64_le(out, manifest_text.size());
    out += manifest_text;
    out.reserve(out.size() + offset);
    for (const auto& nt : tensors)
        for (std::size_t i = 0; i < nt.value.numel(); ++i)
            put_f32_le(out, static_cast<float>(nt.value[i]));

    write_file_atomic(path, out);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_checkpoint: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < sizeof kMagic + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw InputError("load_checkpoint: " + path.string() + " is not a checkpoint file");
    const std::uint64_t manifest_len = get_u64_le(buf.data() + sizeof kMagic);
    if (buf.size() < sizeof kMagic + 8 + manifest_len)
        throw InputError("load_checkpoint: " + path.string() + " is truncated");

    json manifest;
    try {
        manifest = json::parse(buf.substr(sizeof kMagic + 8, manifest_len));
    } catch (const json::parse_error& e) {
        throw InputError("load_checkpoint: bad manifest in " + path.string() + ": " + e.what());
    }
    if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != 1)
        throw InputError("load_checkpoint: unsupported format_version in " + path.string());

    const char* blob = buf.data() + sizeof kMagic + 8 + manifest_len;
    const std::size_t blob_len = buf.size() - sizeof kMagic - 8 - manifest_len;

    LoadedCheckpoint out;
    out.config_json = manifest.value("model_config", json::object()).dump();
    std::uint64_t expected_offset = 0;
    for (const auto& entry : manifest["tensors"]) {
        NamedTensor nt;
        nt.name = entry["name"].get<std::string>();
        const auto shape = entry["shape"].get<std::vector<std::size_t>>();
        const auto byte_offset = entry["byte_offset"].get<std::uint64_t>();
        const auto byte_length = entry["byte_length"].get<std::uint64_t>();
        if (byte_offset != expected_offset)
            throw InputError("load_checkpoint: non-contiguous tensor table in " + path.string());
        expected_offset += byte_length;
        if (entry["dtype"].get<std::string>() != "f32")
            throw InputError("load_checkpoint: unsupported dtype in " + path.string());
        if (byte_offset + byte_length > blob_len)
            throw InputError("load_checkpoint: tensor data out of range in " + path.string());

        Tensor value(shape);
        if (value.numel() * 4 != byte_length)
            throw InputError("load_checkpoint: shape/length mismatch for tensor '" + nt.name +
                             "' in " + path.string());
        for (std::size_t i = 0; i < value.numel(); ++i)
            value[i] = static_cast<double>(get_f32_le(blob + byte_offset + i * 4));
        nt.value = std::move(value);
        out.tensors.push_back(std::move(nt));
    }
    if (expected_offset != blob_len)
        throw InputError("load_checkpoint: blob length mismatch in " + path.string());
    return out;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64(ss.str());
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open " + tmp + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw InputError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void write_run_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    json j;
    j["format_version"] = 1;
    j["command_line"] = manifest.command_line;
    j["seed"] = manifest.seed;
    j["config_hash"] = hex64(fnv1a64(manifest.config_json));
    json inputs = json::array();
    for (const auto& [p, digest] : manifest.input_digests)
        inputs.push_back({{"path", p}, {"fnv1a64", hex64(digest)}});
    j["inputs"] = std::move(inputs);
    j["started_utc"] = manifest.started_utc;
    j["finished_utc"] = manifest.finished_utc;
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace profiler::io
