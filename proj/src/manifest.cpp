#include "lineident/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lineident {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_digest: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return "fnv1a64:" + fnv1a64_hex(ss.str());
}

std::string manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["tool_version"] = m.tool_version;
    j["command"] = m.command;
    j["args"] = m.args;
    j["seed"] = m.seed;
    j["config"] = m.config_json.empty() ? nlohmann::json::object()
                                        : nlohmann::json::parse(m.config_json);
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["wall_clock_s"] = m.wall_clock_s;
    return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
    out << manifest_to_json(m);
    if (!out) throw std::runtime_error("write_manifest: write failed for " + path);
}

}  // namespace lineident
