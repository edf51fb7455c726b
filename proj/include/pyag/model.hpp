#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pyag/nn.hpp"
#include "pyag/tensor.hpp"

namespace pyag {

enum class UpsampleMode { NearestConv, Transposed };
// How far the self-consistency gradient reaches back into the network.
enum class SelfSupScope { TargetDetach, GatesAndEncoder };
// Operator that shrinks the full-resolution prediction into per-depth targets.
enum class TargetPooling { Average, Nearest };

UpsampleMode parse_upsample_mode(const std::string& s);
SelfSupScope parse_self_sup_scope(const std::string& s);
TargetPooling parse_target_pooling(const std::string& s);
std::string to_string(UpsampleMode m);
std::string to_string(SelfSupScope s);
std::string to_string(TargetPooling p);

struct ModelConfig {
    int depth = 4;
    int base_filters = 32;
    int classes = 4;
    int in_channels = 1;
    UpsampleMode upsample_mode = UpsampleMode::NearestConv;
    // false builds the plain UNet used by the baselines: no gates, a single output map.
    bool pyag = true;
    SelfSupScope self_sup_scope = SelfSupScope::TargetDetach;
    TargetPooling target_pooling = TargetPooling::Average;
    std::uint64_t seed = 0;

    int filters_at(int d) const { return base_filters << d; }
};

void validate(const ModelConfig& config);

/// Per-depth probability maps. maps[0] is the full-resolution prediction; maps[d] has
/// spatial size (H/2^d, W/2^d). Each map is N×c×h×w with per-pixel simplex values.
struct PyramidPrediction {
    std::vector<Tensor> maps;

    int depth() const { return static_cast<int>(maps.size()); }
    const Tensor& final_map() const { return maps.front(); }
};

/// Output of one attention gate: the auxiliary mask and the background-suppressed features.
struct GateOutput {
    Tensor aux;    // softmax of the 1×1 classifier
    Tensor gated;  // features · (1 − aux[:, 0])
};

// features·(1 − background) broadcast over channels.
Tensor gate_features(const Tensor& features, const Tensor& aux);

/// Classifier → softmax → background extraction → multiplicative gating.
GateOutput pyag_gate(const Tensor& features, nn::Conv2d& classifier, bool train = false);

/// Target for the depth-d auxiliary mask. Holding one of these is the gradient barrier:
/// nothing computed from `probs` feeds gradient back into the final prediction.
struct DetachedTarget {
    Tensor probs;
};

/// 2^d×2^d pooling of the final prediction, renormalized per pixel.
DetachedTarget downsample_target(const Tensor& final_map, int d, TargetPooling pooling = TargetPooling::Average);

class UNet {
public:
    explicit UNet(ModelConfig config);
    ~UNet();
    UNet(UNet&&) noexcept;
    UNet& operator=(UNet&&) noexcept;

    const ModelConfig& config() const { return config_; }

    /// Training mode uses batch statistics and records everything backward needs.
    PyramidPrediction forward(const Tensor& images, bool train);

    /// Backpropagates gradients w.r.t. each returned map (empty tensors mean zero).
    /// Only parameters whose group is in `groups` accumulate; input gradients always flow.
    void backward(const std::vector<Tensor>& grad_maps, const std::set<nn::Group>& groups = all_groups());

    static std::set<nn::Group> all_groups();

    void zero_grad();
    std::vector<nn::Param*> parameters();
    std::vector<nn::Buffer*> buffers();
    std::size_t parameter_count();

    // Last training-mode gate inputs/outputs at depth d (1..D-1), for inspection.
    struct GateTrace {
        Tensor features;
        Tensor aux;
        Tensor gated;
    };
    const GateTrace& gate_trace(int d) const;
    nn::Conv2d& gate_classifier(int d);

private:
    struct Impl;
    ModelConfig config_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pyag
