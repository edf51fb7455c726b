#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "pyag/datakit.hpp"
#include "pyag/losses.hpp"
#include "pyag/model.hpp"

namespace pyag {

enum class Method { Pyag, PceOnly, PceCompactness };
enum class Supervision { Scribble, Full };

Method parse_method(const std::string& s);
std::string to_string(Method m);
Supervision parse_supervision(const std::string& s);
std::string to_string(Supervision s);

struct DataConfig {
    std::string dir;
    datakit::NormalizationMode normalization = datakit::NormalizationMode::MedianIqr;
    int crop_h = 0, crop_w = 0;  // 0 keeps the stored size
    Supervision supervision = Supervision::Scribble;
    std::uint64_t split_seed = 0;
    std::array<double, 3> fractions{0.70, 0.15, 0.15};
};

struct TrainConfig {
    Method method = Method::Pyag;
    double lr = 1e-4;
    int batch_size = 12;
    int max_steps = 1000;
    int val_every = 50;
    std::uint64_t seed = 0;
    bool routing_self_test = true;
    losses::LossConfig loss;
    ModelConfig model;
    DataConfig data;
};

void validate(const TrainConfig& config);

/// Flat `key = value` text, `#` comments. Keys: method lr batch_size max_steps val_every seed
/// routing_self_test, loss.{a0,ratio_mode,pixel_reduction,epsilon},
/// model.{depth,base_filters,classes,in_channels,upsample_mode,self_sup_scope,target_pooling},
/// data.{dir,normalization,crop,supervision,split_seed,fractions}.
/// Unknown keys are collected and reported together as a Config error.
TrainConfig parse_config_text(const std::string& text, TrainConfig base = {});
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});
void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value);

std::string to_config_text(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace pyag
