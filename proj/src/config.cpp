#include "pyag/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "pyag/common.hpp"

namespace pyag {

Method parse_method(const std::string& s) {
    if (s == "pyag") return Method::Pyag;
    if (s == "pce_only") return Method::PceOnly;
    if (s == "pce_compactness") return Method::PceCompactness;
    fail(ErrorKind::Config, "unknown method '" + s + "' (pyag | pce_only | pce_compactness)");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::Pyag: return "pyag";
        case Method::PceOnly: return "pce_only";
        case Method::PceCompactness: return "pce_compactness";
    }
    return "pyag";
}

Supervision parse_supervision(const std::string& s) {
    if (s == "scribble") return Supervision::Scribble;
    if (s == "full") return Supervision::Full;
    fail(ErrorKind::Config, "unknown supervision '" + s + "' (scribble | full)");
}

std::string to_string(Supervision s) { return s == Supervision::Scribble ? "scribble" : "full"; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail(ErrorKind::Config, "key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        fail(ErrorKind::Config, "key '" + key + "': expected an integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorKind::Config, "key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"method", [](TrainConfig& c, auto&, auto& v) { c.method = parse_method(v); }},
        {"lr", [](TrainConfig& c, auto& k, auto& v) { c.lr = to_double(k, v); }},
        {"batch_size", [](TrainConfig& c, auto& k, auto& v) { c.batch_size = static_cast<int>(to_int(k, v)); }},
        {"max_steps", [](TrainConfig& c, auto& k, auto& v) { c.max_steps = static_cast<int>(to_int(k, v)); }},
        {"val_every", [](TrainConfig& c, auto& k, auto& v) { c.val_every = static_cast<int>(to_int(k, v)); }},
        {"seed", [](TrainConfig& c, auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
        {"routing_self_test", [](TrainConfig& c, auto& k, auto& v) { c.routing_self_test = to_bool(k, v); }},
        {"loss.a0", [](TrainConfig& c, auto& k, auto& v) { c.loss.a0 = to_double(k, v); }},
        {"loss.ratio_mode", [](TrainConfig& c, auto&, auto& v) { c.loss.ratio_mode = losses::parse_ratio_mode(v); }},
        {"loss.pixel_reduction",
         [](TrainConfig& c, auto&, auto& v) { c.loss.pixel_reduction = losses::parse_pixel_reduction(v); }},
        {"loss.epsilon", [](TrainConfig& c, auto& k, auto& v) { c.loss.epsilon = to_double(k, v); }},
        {"model.depth", [](TrainConfig& c, auto& k, auto& v) { c.model.depth = static_cast<int>(to_int(k, v)); }},
        {"model.base_filters",
         [](TrainConfig& c, auto& k, auto& v) { c.model.base_filters = static_cast<int>(to_int(k, v)); }},
        {"model.classes", [](TrainConfig& c, auto& k, auto& v) { c.model.classes = static_cast<int>(to_int(k, v)); }},
        {"model.in_channels",
         [](TrainConfig& c, auto& k, auto& v) { c.model.in_channels = static_cast<int>(to_int(k, v)); }},
        {"model.upsample_mode",
         [](TrainConfig& c, auto&, auto& v) { c.model.upsample_mode = parse_upsample_mode(v); }},
        {"model.self_sup_scope",
         [](TrainConfig& c, auto&, auto& v) { c.model.self_sup_scope = parse_self_sup_scope(v); }},
        {"model.target_pooling",
         [](TrainConfig& c, auto&, auto& v) { c.model.target_pooling = parse_target_pooling(v); }},
        {"data.dir", [](TrainConfig& c, auto&, auto& v) { c.data.dir = v; }},
        {"data.normalization",
         [](TrainConfig& c, auto&, auto& v) { c.data.normalization = datakit::parse_normalization(v); }},
        {"data.crop",
         [](TrainConfig& c, auto& k, auto& v) {
             const auto parts = split(v, 'x');
             if (parts.size() == 1) {
                 c.data.crop_h = c.data.crop_w = static_cast<int>(to_int(k, parts[0]));
             } else if (parts.size() == 2) {
                 c.data.crop_h = static_cast<int>(to_int(k, parts[0]));
                 c.data.crop_w = static_cast<int>(to_int(k, parts[1]));
             } else {
                 fail(ErrorKind::Config, "key 'data.crop': expected N or HxW");
             }
         }},
        {"data.supervision", [](TrainConfig& c, auto&, auto& v) { c.data.supervision = parse_supervision(v); }},
        {"data.split_seed",
         [](TrainConfig& c, auto& k, auto& v) { c.data.split_seed = static_cast<std::uint64_t>(to_int(k, v)); }},
        {"data.fractions",
         [](TrainConfig& c, auto& k, auto& v) {
             const auto parts = split(v, ',');
             if (parts.size() != 3) fail(ErrorKind::Config, "key 'data.fractions': expected three comma-separated values");
             for (int i = 0; i < 3; ++i) c.data.fractions[i] = to_double(k, parts[i]);
         }},
    };
    return table;
}

}  // namespace

void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) fail(ErrorKind::Config, "unknown config key: " + key);
    it->second(config, key, value);
}

void validate(const TrainConfig& c) {
    if (!(c.lr > 0)) fail(ErrorKind::Config, "lr must be > 0");
    if (c.batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
    if (c.max_steps < 0) fail(ErrorKind::Config, "max_steps must be >= 0");
    if (c.val_every < 1) fail(ErrorKind::Config, "val_every must be >= 1");
    losses::validate(c.loss);
    validate(c.model);
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
    std::stringstream in(text);
    std::string line;
    std::vector<std::string> unknown;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!setters().count(key)) {
            unknown.push_back(key);
            continue;
        }
        apply_config_value(base, key, value);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " " + k;
        fail(ErrorKind::Config, msg);
    }
    return base;
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

namespace {

std::vector<std::pair<std::string, std::string>> entries(const TrainConfig& c) {
    return {
        {"method", to_string(c.method)},
        {"lr", fmt_double(c.lr)},
        {"batch_size", std::to_string(c.batch_size)},
        {"max_steps", std::to_string(c.max_steps)},
        {"val_every", std::to_string(c.val_every)},
        {"seed", std::to_string(c.seed)},
        {"routing_self_test", c.routing_self_test ? "true" : "false"},
        {"loss.a0", fmt_double(c.loss.a0)},
        {"loss.ratio_mode", losses::to_string(c.loss.ratio_mode)},
        {"loss.pixel_reduction", losses::to_string(c.loss.pixel_reduction)},
        {"loss.epsilon", fmt_double(c.loss.epsilon)},
        {"model.depth", std::to_string(c.model.depth)},
        {"model.base_filters", std::to_string(c.model.base_filters)},
        {"model.classes", std::to_string(c.model.classes)},
        {"model.in_channels", std::to_string(c.model.in_channels)},
        {"model.upsample_mode", to_string(c.model.upsample_mode)},
        {"model.self_sup_scope", to_string(c.model.self_sup_scope)},
        {"model.target_pooling", to_string(c.model.target_pooling)},
        {"data.dir", c.data.dir},
        {"data.normalization", datakit::to_string(c.data.normalization)},
        {"data.crop", std::to_string(c.data.crop_h) + "x" + std::to_string(c.data.crop_w)},
        {"data.supervision", to_string(c.data.supervision)},
        {"data.split_seed", std::to_string(c.data.split_seed)},
        {"data.fractions", fmt_double(c.data.fractions[0]) + "," + fmt_double(c.data.fractions[1]) + "," +
                               fmt_double(c.data.fractions[2])},
    };
}

}  // namespace

std::string to_config_text(const TrainConfig& c) {
    std::string out;
    for (const auto& [k, v] : entries(c)) out += k + " = " + v + "\n";
    return out;
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : entries(c)) j[k] = v;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    for (const auto& [k, v] : j.items()) apply_config_value(c, k, v.get<std::string>());
    return c;
}

nlohmann::json to_json(const ModelConfig& m) {
    return {{"depth", m.depth},
            {"base_filters", m.base_filters},
            {"classes", m.classes},
            {"in_channels", m.in_channels},
            {"upsample_mode", to_string(m.upsample_mode)},
            {"pyag", m.pyag},
            {"self_sup_scope", to_string(m.self_sup_scope)},
            {"target_pooling", to_string(m.target_pooling)},
            {"seed", m.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig m;
    m.depth = j.at("depth").get<int>();
    m.base_filters = j.at("base_filters").get<int>();
    m.classes = j.at("classes").get<int>();
    m.in_channels = j.at("in_channels").get<int>();
    m.upsample_mode = parse_upsample_mode(j.at("upsample_mode").get<std::string>());
    m.pyag = j.at("pyag").get<bool>();
    m.self_sup_scope = parse_self_sup_scope(j.at("self_sup_scope").get<std::string>());
    m.target_pooling = parse_target_pooling(j.at("target_pooling").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

}  // namespace pyag
