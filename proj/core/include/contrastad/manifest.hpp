#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace contrastad::manifest {

// FNV-1a 64-bit over the file bytes, rendered as 16 hex digits
std::string file_digest(const std::string& path);

struct Manifest {
    std::string command;
    std::string config_json;                                    // config echo
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;                           // multi-seed runs
    std::vector<std::pair<std::string, std::string>> inputs;    // path -> digest
    std::vector<std::string> outputs;
};

// written atomically (temp file + rename)
void write_manifest(const std::string& path, const Manifest& m);

}  // namespace contrastad::manifest
