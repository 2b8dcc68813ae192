#include "coverhead/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <json.hpp>

namespace coverhead {

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

void RunManifest::stamp_start() {
    started_at = utc_now();
}

void RunManifest::stamp_finish() {
    finished_at = utc_now();
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["command"] = manifest.command;
    doc["config_path"] = manifest.config_path;
    doc["seed"] = manifest.seed;
    doc["inputs"] = manifest.inputs;
    doc["outputs"] = manifest.outputs;
    doc["tool_version"] = manifest.tool_version;
    doc["started_at"] = manifest.started_at;
    doc["finished_at"] = manifest.finished_at;
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
        RunManifest m;
        m.command = doc.at("command").get<std::string>();
        m.config_path = doc.at("config_path").get<std::string>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.inputs = doc.at("inputs").get<std::vector<std::string>>();
        m.outputs = doc.at("outputs").get<std::vector<std::string>>();
        m.tool_version = doc.at("tool_version").get<std::string>();
        m.started_at = doc.at("started_at").get<std::string>();
        m.finished_at = doc.at("finished_at").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest: " + std::string(e.what()) + " in " + path.string());
    }
}

} // namespace coverhead
