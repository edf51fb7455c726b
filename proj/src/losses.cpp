#include "pyag/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pyag/common.hpp"

namespace pyag::losses {

RatioMode parse_ratio_mode(const std::string& s) {
    if (s == "fixed_ratio") return RatioMode::FixedRatio;
    if (s == "literal") return RatioMode::Literal;
    fail(ErrorKind::Config, "unknown ratio_mode '" + s + "'");
}

PixelReduction parse_pixel_reduction(const std::string& s) {
    if (s == "mean") return PixelReduction::Mean;
    if (s == "sum") return PixelReduction::Sum;
    fail(ErrorKind::Config, "unknown pixel_reduction '" + s + "'");
}

std::string to_string(RatioMode m) { return m == RatioMode::FixedRatio ? "fixed_ratio" : "literal"; }
std::string to_string(PixelReduction r) { return r == PixelReduction::Mean ? "mean" : "sum"; }

void validate(const LossConfig& c) {
    if (!(c.a0 > 0)) fail(ErrorKind::Config, "a0 must be > 0");
    if (!(c.epsilon > 0)) fail(ErrorKind::Config, "epsilon must be > 0");
}

double LossBreakdown::regularizer_value() const {
    switch (regularizer) {
        case Regularizer::SelfConsistency: return self_total;
        case Regularizer::Compactness: return compactness;
        case Regularizer::None: return 0.0;
    }
    return 0.0;
}

double pce_loss(const Tensor& pred, ScribbleView scribbles, const LossConfig& config, Tensor* grad) {
    if (static_cast<int>(scribbles.size()) != pred.n())
        fail(ErrorKind::ShapeMismatch, "pce: " + std::to_string(scribbles.size()) + " scribbles for batch of " +
                                           std::to_string(pred.n()));
    for (const auto& s : scribbles)
        if (!s.same_shape(pred.h(), pred.w()))
            fail(ErrorKind::ShapeMismatch, "pce: scribble shape does not match prediction " + pred.shape_string());
    if (grad) *grad = Tensor(pred.n(), pred.c(), pred.h(), pred.w());

    double sum = 0;
    std::size_t labeled = 0;
    for (int b = 0; b < pred.n(); ++b)
        for (int y = 0; y < pred.h(); ++y)
            for (int x = 0; x < pred.w(); ++x) {
                const auto k = scribbles[b](y, x);
                if (k == Scribble::kUnlabeled) continue;
                if (k < 0 || k >= pred.c())
                    fail(ErrorKind::ShapeMismatch, "pce: scribble class " + std::to_string(k) + " out of range");
                sum -= std::log(pred(b, k, y, x) + config.epsilon);
                ++labeled;
            }
    if (labeled == 0) return 0.0;
    const double norm = config.pixel_reduction == PixelReduction::Mean ? 1.0 / static_cast<double>(labeled) : 1.0;
    if (grad)
        for (int b = 0; b < pred.n(); ++b)
            for (int y = 0; y < pred.h(); ++y)
                for (int x = 0; x < pred.w(); ++x) {
                    const auto k = scribbles[b](y, x);
                    if (k == Scribble::kUnlabeled) continue;
                    (*grad)(b, k, y, x) = -norm / (pred(b, k, y, x) + config.epsilon);
                }
    return sum * norm;
}

SelfConsistency self_consistency_loss(const PyramidPrediction& pyramid, const LossConfig& config,
                                      TargetPooling pooling, std::vector<Tensor>* grads) {
    SelfConsistency out;
    if (pyramid.maps.empty()) fail(ErrorKind::InvalidArgument, "self-consistency: empty pyramid");
    if (grads) {
        grads->clear();
        for (const auto& m : pyramid.maps) grads->emplace_back(m.n(), m.c(), m.h(), m.w());
    }
    if (pyramid.depth() < 2) {
        log::warn("self-consistency loss on a single-map pyramid is 0");
        return out;
    }
    const Tensor& final_map = pyramid.final_map();
    for (int d = 1; d < pyramid.depth(); ++d) {
        const Tensor& aux = pyramid.maps[d];
        const DetachedTarget target = downsample_target(final_map, d, pooling);
        if (!target.probs.same_shape(aux))
            fail(ErrorKind::ShapeMismatch, "self-consistency: depth " + std::to_string(d) + " map " +
                                               aux.shape_string() + " vs target " + target.probs.shape_string());
        const std::size_t pixels = static_cast<std::size_t>(aux.n()) * aux.h() * aux.w();
        const double norm = config.pixel_reduction == PixelReduction::Mean ? 1.0 / static_cast<double>(pixels) : 1.0;
        double sum = 0;
        const auto t = target.probs.values();
        const auto p = aux.values();
        for (std::size_t i = 0; i < p.size(); ++i) sum -= t[i] * std::log(p[i] + config.epsilon);
        if (grads) {
            auto g = (*grads)[d].values();
            for (std::size_t i = 0; i < p.size(); ++i) g[i] = -norm * t[i] / (p[i] + config.epsilon);
        }
        out.per_depth.push_back(sum * norm);
        out.total += sum * norm;
    }
    return out;
}

double compactness_loss(const Tensor& pred, const LossConfig& config, Tensor* grad) {
    const int H = pred.h(), W = pred.w();
    if (grad) *grad = Tensor(pred.n(), pred.c(), H, W);
    const double four_pi = 4.0 * std::numbers::pi;
    const double norm = config.pixel_reduction == PixelReduction::Mean ? 1.0 / std::max(1, pred.n()) : 1.0;
    double total = 0;
    std::vector<double> dP(static_cast<std::size_t>(H) * W);
    for (int b = 0; b < pred.n(); ++b) {
        const double* bkd = pred.plane(b, 0);
        auto y = [&](int r, int c) { return 1.0 - bkd[r * W + c]; };
        double P = 0, A = config.epsilon;
        std::fill(dP.begin(), dP.end(), 0.0);
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                A += y(r, c);
                if (r + 1 < H) {
                    const double diff = y(r + 1, c) - y(r, c);
                    P += std::abs(diff);
                    const double s = (diff > 0) - (diff < 0);
                    dP[(r + 1) * W + c] += s;
                    dP[r * W + c] -= s;
                }
                if (c + 1 < W) {
                    const double diff = y(r, c + 1) - y(r, c);
                    P += std::abs(diff);
                    const double s = (diff > 0) - (diff < 0);
                    dP[r * W + c + 1] += s;
                    dP[r * W + c] -= s;
                }
            }
        total += P * P / (four_pi * A);
        if (grad) {
            // dL/dy = (2·P·dP·A − P²) / (4π·A²); background probability enters as y = 1 − p.
            double* g = grad->plane(b, 0);
            for (std::size_t i = 0; i < dP.size(); ++i)
                g[i] = -norm * (2.0 * P * dP[i] * A - P * P) / (four_pi * A * A);
        }
    }
    return total * norm;
}

double dynamic_weight(double pce, double regularizer, const LossConfig& config) {
    const double eps = config.epsilon;
    if (config.ratio_mode == RatioMode::FixedRatio) return config.a0 * std::abs(pce) / std::max(std::abs(regularizer), eps);
    return config.a0 * std::abs(regularizer) / std::max(std::abs(pce), eps);
}

std::vector<Tensor> TotalLoss::combined() const {
    std::vector<Tensor> out = grad_supervised;
    out.resize(std::max(out.size(), grad_regularizer.size()));
    for (std::size_t d = 0; d < grad_regularizer.size(); ++d) {
        if (grad_regularizer[d].empty()) continue;
        if (out[d].empty()) out[d] = grad_regularizer[d];
        else out[d] += grad_regularizer[d];
    }
    return out;
}

TotalLoss total_loss(const PyramidPrediction& pyramid, ScribbleView scribbles, const LossConfig& config,
                     Regularizer regularizer, TargetPooling pooling, bool with_gradients) {
    validate(config);
    TotalLoss out;
    auto& br = out.breakdown;
    br.regularizer = regularizer;
    const Tensor& y0 = pyramid.final_map();

    Tensor d_pce;
    br.pce = pce_loss(y0, scribbles, config, with_gradients ? &d_pce : nullptr);
    if (with_gradients) out.grad_supervised.push_back(std::move(d_pce));

    std::vector<Tensor> reg_grads;
    double reg = 0;
    switch (regularizer) {
        case Regularizer::SelfConsistency: {
            auto sc = self_consistency_loss(pyramid, config, pooling, with_gradients ? &reg_grads : nullptr);
            br.self_per_depth = sc.per_depth;
            br.self_total = sc.total;
            reg = sc.total;
            break;
        }
        case Regularizer::Compactness: {
            Tensor g;
            br.compactness = compactness_loss(y0, config, with_gradients ? &g : nullptr);
            reg = br.compactness;
            if (with_gradients) reg_grads.push_back(std::move(g));
            break;
        }
        case Regularizer::None: break;
    }

    br.weight_a = regularizer == Regularizer::None ? 0.0 : dynamic_weight(br.pce, reg, config);
    br.total = br.pce + br.weight_a * reg;
    if (with_gradients) {
        for (auto& g : reg_grads)
            for (double& v : g.values()) v *= br.weight_a;
        out.grad_regularizer = std::move(reg_grads);
    }
    return out;
}

}  // namespace pyag::losses
