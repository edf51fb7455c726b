#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "pyag/model.hpp"
#include "pyag/optim.hpp"

namespace pyag {

/// On-disk layout: the 8-byte magic "PYAGCKPT", a little-endian u64 header length, a JSON
/// header, then a blob of little-endian float64 values. The header carries the format
/// version, the model config, the training config echo, step, RNG state, and a tensor index
/// of {name, kind, shape, offset, count}. Readers reject unknown versions.
struct Checkpoint {
    static constexpr int kVersion = 1;

    int version = kVersion;
    ModelConfig model;
    nlohmann::json train_config = nlohmann::json::object();
    std::int64_t step = 0;
    std::int64_t optimizer_steps = 0;
    std::string rng_state;
    double best_val_dice = -1.0;
    nlohmann::json extra = nlohmann::json::object();

    // kind ∈ {param, buffer, adam_m, adam_v}
    struct Entry {
        std::string kind;
        Tensor value;
    };
    std::map<std::string, Entry> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters, buffers, and (when given) optimizer moments into the checkpoint.
void capture_state(Checkpoint& ckpt, UNet& model, Adam* optimizer);
// Builds the model described by the checkpoint and loads its parameters and buffers.
UNet restore_model(const Checkpoint& ckpt);
void restore_optimizer(const Checkpoint& ckpt, UNet& model, Adam& optimizer);

}  // namespace pyag
