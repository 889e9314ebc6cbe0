#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lineident {

// FNV-1a 64-bit content hash; used for file digests and bundle checksums.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

// Digest of a file's raw bytes, formatted "fnv1a64:<16 hex digits>".
std::string file_digest(const std::string& path);

// Reproducibility record written next to every CLI output.
struct RunManifest {
    std::string tool_version;
    std::string command;
    std::vector<std::string> args;
    std::uint64_t seed = 0;
    std::string config_json;  // echo of the effective configuration
    std::map<std::string, std::string> inputs;   // path -> digest
    std::map<std::string, std::string> outputs;  // path -> digest
    double wall_clock_s = 0.0;
};

std::string manifest_to_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace lineident
