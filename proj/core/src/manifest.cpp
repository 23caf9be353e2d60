#include "contrastad/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace contrastad::manifest {

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_digest: cannot open " + path);
    std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a 64
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

void write_manifest(const std::string& path, const Manifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["seed"] = m.seed;
    if (!m.seeds.empty()) j["seeds"] = m.seeds;
    j["config"] = m.config_json.empty() ? nlohmann::json::object()
                                        : nlohmann::json::parse(m.config_json);
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [p, digest] : m.inputs) inputs[p] = digest;
    j["inputs"] = inputs;
    j["outputs"] = m.outputs;

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("write_manifest: cannot write " + tmp);
        out << j.dump(2) << "\n";
        if (!out) throw std::runtime_error("write_manifest: write failed " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("write_manifest: rename to " + path + " failed");
}

}  // namespace contrastad::manifest
