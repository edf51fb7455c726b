#include "pyag/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pyag/common.hpp"
#include "pyag/config.hpp"

namespace pyag {
namespace {

constexpr char kMagic[8] = {'P', 'Y', 'A', 'G', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = "pyag-checkpoint";
    header["version"] = ckpt.version;
    header["model"] = to_json(ckpt.model);
    header["train_config"] = ckpt.train_config;
    header["step"] = ckpt.step;
    header["optimizer_steps"] = ckpt.optimizer_steps;
    header["rng_state"] = ckpt.rng_state;
    header["best_val_dice"] = ckpt.best_val_dice;
    header["extra"] = ckpt.extra;
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : ckpt.tensors) {
        const auto& t = e.value;
        index.push_back({{"name", name},
                         {"kind", e.kind},
                         {"shape", {t.n(), t.c(), t.h(), t.w()}},
                         {"offset", offset},
                         {"count", t.size()}});
        offset += t.size();
    }
    header["tensors"] = index;
    const std::string text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof kMagic);
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, e] : ckpt.tensors)
            out.write(reinterpret_cast<const char*>(e.value.data()),
                      static_cast<std::streamsize>(e.value.size() * sizeof(double)));
        if (!out) fail(ErrorKind::Io, "short write on checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        fail(ErrorKind::CorruptData, path.string() + ": not a pyag checkpoint");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30)) fail(ErrorKind::CorruptData, path.string() + ": bad header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) fail(ErrorKind::CorruptData, path.string() + ": truncated header");

    Checkpoint ckpt;
    try {
        const auto header = nlohmann::json::parse(text);
        if (!header.contains("version")) fail(ErrorKind::CorruptData, path.string() + ": missing version field");
        ckpt.version = header.at("version").get<int>();
        if (ckpt.version != Checkpoint::kVersion)
            fail(ErrorKind::CorruptData, path.string() + ": unsupported checkpoint version " + std::to_string(ckpt.version));
        ckpt.model = model_config_from_json(header.at("model"));
        ckpt.train_config = header.at("train_config");
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.optimizer_steps = header.at("optimizer_steps").get<std::int64_t>();
        ckpt.rng_state = header.at("rng_state").get<std::string>();
        ckpt.best_val_dice = header.at("best_val_dice").get<double>();
        ckpt.extra = header.value("extra", nlohmann::json::object());
        std::vector<double> blob;
        for (const auto& e : header.at("tensors")) {
            const auto shape = e.at("shape").get<std::vector<int>>();
            if (shape.size() != 4) fail(ErrorKind::CorruptData, path.string() + ": tensor shape must have 4 dims");
            Tensor t(shape[0], shape[1], shape[2], shape[3]);
            if (t.size() != e.at("count").get<std::size_t>())
                fail(ErrorKind::CorruptData, path.string() + ": tensor count/shape mismatch");
            in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
            if (!in) fail(ErrorKind::CorruptData, path.string() + ": truncated tensor blob");
            ckpt.tensors[e.at("name").get<std::string>()] = {e.at("kind").get<std::string>(), std::move(t)};
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::CorruptData, path.string() + ": malformed header: " + e.what());
    }
    return ckpt;
}

void capture_state(Checkpoint& ckpt, UNet& model, Adam* optimizer) {
    ckpt.model = model.config();
    const auto params = model.parameters();
    for (const auto* p : params) ckpt.tensors[p->name] = {"param", p->value};
    for (const auto* b : model.buffers()) ckpt.tensors[b->name] = {"buffer", b->value};
    if (optimizer) {
        ckpt.optimizer_steps = optimizer->steps();
        auto& m = optimizer->first_moments();
        auto& v = optimizer->second_moments();
        for (std::size_t i = 0; i < m.size() && i < params.size(); ++i) {
            ckpt.tensors["adam_m/" + params[i]->name] = {"adam_m", m[i]};
            ckpt.tensors["adam_v/" + params[i]->name] = {"adam_v", v[i]};
        }
    }
}

UNet restore_model(const Checkpoint& ckpt) {
    UNet model(ckpt.model);
    auto load = [&](const std::string& name, Tensor& dst) {
        const auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) fail(ErrorKind::CorruptData, "checkpoint lacks tensor " + name);
        if (!it->second.value.same_shape(dst))
            fail(ErrorKind::CorruptData, "checkpoint tensor " + name + " has shape " + it->second.value.shape_string() +
                                             ", model expects " + dst.shape_string());
        dst = it->second.value;
    };
    for (auto* p : model.parameters()) load(p->name, p->value);
    for (auto* b : model.buffers()) load(b->name, b->value);
    return model;
}

void restore_optimizer(const Checkpoint& ckpt, UNet& model, Adam& optimizer) {
    const auto params = model.parameters();
    auto& m = optimizer.first_moments();
    auto& v = optimizer.second_moments();
    m.clear();
    v.clear();
    optimizer.set_steps(ckpt.optimizer_steps);
    if (ckpt.optimizer_steps == 0) return;
    for (const auto* p : params) {
        const auto im = ckpt.tensors.find("adam_m/" + p->name);
        const auto iv = ckpt.tensors.find("adam_v/" + p->name);
        if (im == ckpt.tensors.end() || iv == ckpt.tensors.end())
            fail(ErrorKind::CorruptData, "checkpoint lacks optimizer state for " + p->name);
        m.push_back(im->second.value);
        v.push_back(iv->second.value);
    }
}

}  // namespace pyag
