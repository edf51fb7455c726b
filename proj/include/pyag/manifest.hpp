#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pyag::manifest {

std::string sha1_hex(std::string_view data);
// SHA-1 over "blob <size>\0<content>", as git names file objects.
std::string git_blob_hash(std::string_view content);

/// Content hash over a set of inputs: each file (directories are walked recursively, in
/// sorted order) contributes "<relative path> <blob hash>", plus the config echo text.
std::string hash_inputs(const std::vector<std::filesystem::path>& inputs, const std::string& config_echo);

struct RunManifest {
    std::string command;
    std::string run_id;  // first 12 hex digits of input_hash
    nlohmann::json config = nlohmann::json::object();
    std::string input_hash;
    nlohmann::json outputs = nlohmann::json::object();
    std::string status = "started";  // started | complete
};

nlohmann::json to_json(const RunManifest& m);
void write(const std::filesystem::path& path, const RunManifest& m);
std::optional<RunManifest> read(const std::filesystem::path& path);

// True when `path` holds a completed manifest for the same command and input hash.
bool already_done(const std::filesystem::path& path, const std::string& command, const std::string& input_hash);

}  // namespace pyag::manifest
