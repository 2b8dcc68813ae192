#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coverhead/errors.hpp"

namespace coverhead {

inline constexpr const char* kToolVersion = "0.1.0";

// Provenance record written last into every artifact directory; a directory
// without one is incomplete or invalid.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version = kToolVersion;
    std::string started_at;   // ISO 8601 UTC
    std::string finished_at;

    void stamp_start();
    void stamp_finish();
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

} // namespace coverhead
