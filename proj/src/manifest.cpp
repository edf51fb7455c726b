#include "pyag/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pyag/common.hpp"

namespace fs = std::filesystem;

namespace pyag::manifest {

std::string sha1_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha1(), nullptr) != 1)
        fail(ErrorKind::Io, "SHA-1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        const unsigned char b = digest[i];
        out += hex[b >> 4];
        out += hex[b & 15];
    }
    return out;
}

std::string git_blob_hash(std::string_view content) {
    std::string buf = "blob " + std::to_string(content.size());
    buf.push_back('\0');
    buf.append(content);
    return sha1_hex(buf);
}

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string hash_inputs(const std::vector<fs::path>& inputs, const std::string& config_echo) {
    std::string listing = "config " + git_blob_hash(config_echo) + "\n";
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::recursive_directory_iterator(in))
                if (e.is_regular_file()) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files)
                listing += fs::relative(f, in).generic_string() + " " + git_blob_hash(slurp(f)) + "\n";
        } else if (fs::exists(in)) {
            listing += in.filename().generic_string() + " " + git_blob_hash(slurp(in)) + "\n";
        } else {
            listing += in.generic_string() + " missing\n";
        }
    }
    return sha1_hex(listing);
}

nlohmann::json to_json(const RunManifest& m) {
    return {{"command", m.command}, {"run_id", m.run_id},   {"config", m.config},
            {"input_hash", m.input_hash}, {"outputs", m.outputs}, {"status", m.status}};
}

void write(const fs::path& path, const RunManifest& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write manifest " + path.string());
    out << to_json(m).dump(2) << '\n';
}

std::optional<RunManifest> read(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(slurp(path));
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.run_id = j.at("run_id").get<std::string>();
        m.config = j.at("config");
        m.input_hash = j.at("input_hash").get<std::string>();
        m.outputs = j.at("outputs");
        m.status = j.at("status").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

bool already_done(const fs::path& path, const std::string& command, const std::string& input_hash) {
    const auto m = read(path);
    return m && m->status == "complete" && m->command == command && m->input_hash == input_hash;
}

}  // namespace pyag::manifest
