#pragma once

#include <span>
#include <string>
#include <vector>

#include "pyag/image.hpp"
#include "pyag/model.hpp"
#include "pyag/tensor.hpp"

namespace pyag::losses {

// fixed_ratio keeps a·L_reg = a0·L_PCE; literal evaluates a = a0·L_self/L_PCE as printed.
enum class RatioMode { FixedRatio, Literal };
enum class PixelReduction { Mean, Sum };
enum class Regularizer { None, SelfConsistency, Compactness };

RatioMode parse_ratio_mode(const std::string& s);
PixelReduction parse_pixel_reduction(const std::string& s);
std::string to_string(RatioMode m);
std::string to_string(PixelReduction r);

struct LossConfig {
    double a0 = 0.1;
    RatioMode ratio_mode = RatioMode::FixedRatio;
    PixelReduction pixel_reduction = PixelReduction::Mean;
    double epsilon = 1e-8;
};

void validate(const LossConfig& config);

struct LossBreakdown {
    double pce = 0;
    std::vector<double> self_per_depth;  // depths 1..D-1
    double self_total = 0;
    double compactness = 0;
    double weight_a = 0;
    double total = 0;
    Regularizer regularizer = Regularizer::None;

    // The regularizer value that weight_a multiplies.
    double regularizer_value() const;
};

using ScribbleView = std::span<const Grid<std::int32_t>>;

/// Cross-entropy on annotated pixels only (Scribble::kUnlabeled is masked out), reduced over
/// labeled pixels. Returns 0 when nothing is labeled. `grad` receives dL/dpred when non-null.
double pce_loss(const Tensor& pred, ScribbleView scribbles, const LossConfig& config, Tensor* grad = nullptr);

struct SelfConsistency {
    double total = 0;
    std::vector<double> per_depth;
};

/// Cross-entropy of each auxiliary map against the detached, pooled final prediction,
/// summed over depths. `grads` (when non-null) gets one entry per map; entry 0 is always
/// zero because the targets carry no gradient.
SelfConsistency self_consistency_loss(const PyramidPrediction& pyramid, const LossConfig& config,
                                      TargetPooling pooling = TargetPooling::Average,
                                      std::vector<Tensor>* grads = nullptr);

/// P²/(4πA) on the foreground field 1 − p_background, with P from forward differences.
/// Batch items are reduced per pixel_reduction (mean or sum over images).
double compactness_loss(const Tensor& pred, const LossConfig& config, Tensor* grad = nullptr);

/// Balancing weight; treated as a constant by every gradient computation.
double dynamic_weight(double pce, double regularizer, const LossConfig& config);

struct TotalLoss {
    LossBreakdown breakdown;
    // Per-map gradients of L_PCE, and of a·L_reg (already scaled), kept apart so callers can
    // route the regularizer through a restricted parameter set.
    std::vector<Tensor> grad_supervised;
    std::vector<Tensor> grad_regularizer;

    std::vector<Tensor> combined() const;
};

TotalLoss total_loss(const PyramidPrediction& pyramid, ScribbleView scribbles, const LossConfig& config,
                     Regularizer regularizer, TargetPooling pooling = TargetPooling::Average,
                     bool with_gradients = true);

}  // namespace pyag::losses
