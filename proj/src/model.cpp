#include "pyag/model.hpp"

#include <cmath>

#include "pyag/common.hpp"

namespace pyag {

using nn::Group;

UpsampleMode parse_upsample_mode(const std::string& s) {
    if (s == "nearest+conv" || s == "nearest_conv") return UpsampleMode::NearestConv;
    if (s == "transposed") return UpsampleMode::Transposed;
    fail(ErrorKind::Config, "unknown upsample mode '" + s + "'");
}

SelfSupScope parse_self_sup_scope(const std::string& s) {
    if (s == "target_detach") return SelfSupScope::TargetDetach;
    if (s == "gates_and_encoder") return SelfSupScope::GatesAndEncoder;
    fail(ErrorKind::Config, "unknown self_sup_scope '" + s + "'");
}

TargetPooling parse_target_pooling(const std::string& s) {
    if (s == "average") return TargetPooling::Average;
    if (s == "nearest") return TargetPooling::Nearest;
    fail(ErrorKind::Config, "unknown target pooling '" + s + "'");
}

std::string to_string(UpsampleMode m) { return m == UpsampleMode::NearestConv ? "nearest+conv" : "transposed"; }
std::string to_string(SelfSupScope s) {
    return s == SelfSupScope::TargetDetach ? "target_detach" : "gates_and_encoder";
}
std::string to_string(TargetPooling p) { return p == TargetPooling::Average ? "average" : "nearest"; }

void validate(const ModelConfig& c) {
    if (c.depth < 2) fail(ErrorKind::Config, "model depth must be >= 2");
    if (c.classes < 2) fail(ErrorKind::Config, "model needs at least 2 classes");
    if (c.base_filters < 1) fail(ErrorKind::Config, "base_filters must be >= 1");
    if (c.in_channels < 1) fail(ErrorKind::Config, "in_channels must be >= 1");
    if (c.depth > 12) fail(ErrorKind::Config, "model depth unreasonably large");
}

Tensor gate_features(const Tensor& features, const Tensor& aux) {
    if (features.n() != aux.n() || features.h() != aux.h() || features.w() != aux.w())
        fail(ErrorKind::ShapeMismatch, "gate: features " + features.shape_string() + " vs mask " + aux.shape_string());
    Tensor gated(features.n(), features.c(), features.h(), features.w());
    const std::size_t hw = static_cast<std::size_t>(features.h()) * features.w();
    for (int b = 0; b < features.n(); ++b) {
        const double* bkd = aux.plane(b, 0);
        for (int k = 0; k < features.c(); ++k) {
            const double* f = features.plane(b, k);
            double* g = gated.plane(b, k);
            for (std::size_t i = 0; i < hw; ++i) g[i] = f[i] * (1.0 - bkd[i]);
        }
    }
    return gated;
}

GateOutput pyag_gate(const Tensor& features, nn::Conv2d& classifier, bool train) {
    Tensor aux = nn::softmax_channels(classifier.forward(features, train));
    Tensor gated = gate_features(features, aux);
    return {std::move(aux), std::move(gated)};
}

DetachedTarget downsample_target(const Tensor& final_map, int d, TargetPooling pooling) {
    if (d < 1) fail(ErrorKind::InvalidArgument, "downsample_target depth must be >= 1");
    const int f = 1 << d;
    if (final_map.h() % f || final_map.w() % f)
        fail(ErrorKind::ShapeMismatch, "prediction " + final_map.shape_string() + " not divisible by 2^" +
                                           std::to_string(d));
    const int C = final_map.c();
    Tensor out(final_map.n(), C, final_map.h() / f, final_map.w() / f);
    for (int b = 0; b < out.n(); ++b)
        for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x) {
                double total = 0;
                for (int c = 0; c < C; ++c) {
                    double v;
                    if (pooling == TargetPooling::Nearest) {
                        v = final_map(b, c, y * f, x * f);
                    } else {
                        double s = 0;
                        for (int dy = 0; dy < f; ++dy)
                            for (int dx = 0; dx < f; ++dx) s += final_map(b, c, y * f + dy, x * f + dx);
                        v = s / (f * f);
                    }
                    out(b, c, y, x) = v;
                    total += v;
                }
                if (total > 0)
                    for (int c = 0; c < C; ++c) out(b, c, y, x) /= total;
            }
    return {std::move(out)};
}

// ---------------------------------------------------------------------------

struct UNet::Impl {
    std::vector<std::unique_ptr<nn::Sequential>> encoder;  // [0, D)
    std::vector<nn::MaxPool2x2> pools;                      // [0, D-1)
    std::vector<std::unique_ptr<nn::Sequential>> up;       // [0, D-1): from depth d+1 to d
    std::vector<std::unique_ptr<nn::Sequential>> decoder;  // [0, D-1)
    std::vector<std::unique_ptr<nn::Conv2d>> gates;        // [1, D) when pyag, index 0 unused
    std::unique_ptr<nn::Conv2d> head;

    std::vector<GateTrace> traces;
    std::vector<int> up_channels;
    Tensor final_probs;
    bool has_forward = false;

    std::vector<nn::Layer*> layers_in_group(Group g) const;
};

std::vector<nn::Layer*> UNet::Impl::layers_in_group(Group g) const {
    std::vector<nn::Layer*> out;
    switch (g) {
        case Group::Encoder:
            for (auto& e : encoder) out.push_back(e.get());
            break;
        case Group::DecoderTrunk:
            for (auto& u : up) out.push_back(u.get());
            for (std::size_t d = 1; d < decoder.size(); ++d) out.push_back(decoder[d].get());
            break;
        case Group::Gate:
            for (auto& gt : gates)
                if (gt) out.push_back(gt.get());
            break;
        case Group::Head:
            out.push_back(decoder[0].get());
            out.push_back(head.get());
            break;
    }
    return out;
}

UNet::UNet(ModelConfig config) : config_(config), impl_(std::make_unique<Impl>()) {
    validate(config_);
    Rng rng(config_.seed);
    const int D = config_.depth;
    auto& m = *impl_;
    for (int d = 0; d < D; ++d) {
        const int in = d == 0 ? config_.in_channels : config_.filters_at(d - 1);
        m.encoder.push_back(nn::double_conv(in, config_.filters_at(d), "enc" + std::to_string(d), Group::Encoder, rng));
    }
    m.pools.resize(D - 1);
    m.up.resize(D - 1);
    m.decoder.resize(D - 1);
    m.up_channels.resize(D - 1);
    m.gates.resize(D);
    m.traces.resize(D);
    if (config_.pyag)
        m.gates[D - 1] = std::make_unique<nn::Conv2d>(config_.filters_at(D - 1), config_.classes, 1,
                                                      "gate" + std::to_string(D - 1), Group::Gate, rng, 1.0);
    for (int d = D - 2; d >= 0; --d) {
        const int from = config_.filters_at(d + 1), to = config_.filters_at(d);
        const Group trunk = Group::DecoderTrunk;
        auto up = std::make_unique<nn::Sequential>();
        const std::string name = "up" + std::to_string(d);
        if (config_.upsample_mode == UpsampleMode::NearestConv) {
            up->add(std::make_unique<nn::UpsampleNearest2x>());
            up->add(std::make_unique<nn::Conv2d>(from, to, 3, name + ".conv", trunk, rng));
        } else {
            up->add(std::make_unique<nn::ConvTranspose2x2>(from, to, name + ".tconv", trunk, rng));
        }
        m.up[d] = std::move(up);
        m.up_channels[d] = to;
        m.decoder[d] = nn::double_conv(2 * to, to, "dec" + std::to_string(d), d == 0 ? Group::Head : trunk, rng);
        if (d >= 1 && config_.pyag)
            m.gates[d] = std::make_unique<nn::Conv2d>(to, config_.classes, 1, "gate" + std::to_string(d), Group::Gate,
                                                      rng, 1.0);
    }
    m.head = std::make_unique<nn::Conv2d>(config_.base_filters, config_.classes, 1, "head", Group::Head, rng, 1.0);
}

UNet::~UNet() = default;
UNet::UNet(UNet&&) noexcept = default;
UNet& UNet::operator=(UNet&&) noexcept = default;

std::set<nn::Group> UNet::all_groups() { return {Group::Encoder, Group::DecoderTrunk, Group::Gate, Group::Head}; }

PyramidPrediction UNet::forward(const Tensor& images, bool train) {
    const int D = config_.depth;
    const int f = 1 << (D - 1);
    if (images.c() != config_.in_channels)
        fail(ErrorKind::InvalidArgument, "input has " + std::to_string(images.c()) + " channels, model expects " +
                                             std::to_string(config_.in_channels));
    if (images.n() < 1 || images.h() % f || images.w() % f || images.h() < f || images.w() < f)
        fail(ErrorKind::InvalidArgument, "input " + images.shape_string() + " spatial size must be divisible by " +
                                             std::to_string(f));
    auto& m = *impl_;

    std::vector<Tensor> skips(D);
    Tensor cur = images;
    for (int d = 0; d < D; ++d) {
        if (d > 0) cur = m.pools[d - 1].forward(cur, train);
        cur = m.encoder[d]->forward(cur, train);
        if (d < D - 1) skips[d] = cur;
    }

    PyramidPrediction out;
    out.maps.resize(config_.pyag ? D : 1);
    auto apply_gate = [&](int d) {
        GateOutput g = pyag_gate(cur, *m.gates[d], train);
        if (train) m.traces[d] = {cur, g.aux, g.gated};
        out.maps[d] = std::move(g.aux);
        cur = std::move(g.gated);
    };
    if (config_.pyag) apply_gate(D - 1);
    for (int d = D - 2; d >= 0; --d) {
        Tensor u = m.up[d]->forward(cur, train);
        cur = m.decoder[d]->forward(nn::concat_channels(u, skips[d]), train);
        if (d >= 1 && config_.pyag) apply_gate(d);
    }
    out.maps[0] = nn::softmax_channels(m.head->forward(cur, train));
    if (train) {
        m.final_probs = out.maps[0];
        m.has_forward = true;
    }
    return out;
}

void UNet::backward(const std::vector<Tensor>& grad_maps, const std::set<nn::Group>& groups) {
    auto& m = *impl_;
    if (!m.has_forward) fail(ErrorKind::InvalidArgument, "backward called before a training-mode forward");
    const int D = config_.depth;
    const int maps = config_.pyag ? D : 1;
    if (grad_maps.size() > static_cast<std::size_t>(maps))
        fail(ErrorKind::InvalidArgument, "more map gradients than pyramid levels");

    for (Group g : all_groups()) {
        const bool on = groups.count(g) > 0;
        for (nn::Layer* l : m.layers_in_group(g)) {
            if (auto* s = dynamic_cast<nn::Sequential*>(l)) s->set_accumulate(on);
            else l->accumulate = on;
        }
    }

    auto grad_of = [&](int d) -> const Tensor* {
        if (d < static_cast<int>(grad_maps.size()) && !grad_maps[d].empty()) return &grad_maps[d];
        return nullptr;
    };

    // Gradient w.r.t. the gate input, from the gradient w.r.t. its gated output.
    auto gate_backward = [&](int d, const Tensor& d_gated) {
        const GateTrace& t = m.traces[d];
        const Tensor& feat = t.features;
        const Tensor& aux = t.aux;
        Tensor d_feat(feat.n(), feat.c(), feat.h(), feat.w());
        Tensor d_aux(aux.n(), aux.c(), aux.h(), aux.w());
        if (const Tensor* ext = grad_of(d)) {
            if (!ext->same_shape(aux))
                fail(ErrorKind::ShapeMismatch, "gradient for depth " + std::to_string(d) + " has shape " +
                                                   ext->shape_string() + ", expected " + aux.shape_string());
            d_aux = *ext;
        }
        const std::size_t hw = static_cast<std::size_t>(feat.h()) * feat.w();
        for (int b = 0; b < feat.n(); ++b) {
            const double* bkd = aux.plane(b, 0);
            double* d_bkd = d_aux.plane(b, 0);
            for (int k = 0; k < feat.c(); ++k) {
                const double* f = feat.plane(b, k);
                const double* g = d_gated.plane(b, k);
                double* df = d_feat.plane(b, k);
                for (std::size_t i = 0; i < hw; ++i) {
                    df[i] = g[i] * (1.0 - bkd[i]);
                    d_bkd[i] -= g[i] * f[i];
                }
            }
        }
        d_feat += m.gates[d]->backward(nn::softmax_channels_backward(aux, d_aux));
        return d_feat;
    };

    Tensor g;
    {
        const Tensor& y0 = m.final_probs;
        Tensor d_y0(y0.n(), y0.c(), y0.h(), y0.w());
        if (const Tensor* ext = grad_of(0)) {
            if (!ext->same_shape(y0)) fail(ErrorKind::ShapeMismatch, "final-map gradient has wrong shape");
            d_y0 = *ext;
        }
        g = m.head->backward(nn::softmax_channels_backward(y0, d_y0));
    }

    std::vector<Tensor> skip_grads(D);
    for (int d = 0; d <= D - 2; ++d) {
        if (d >= 1 && config_.pyag) g = gate_backward(d, g);
        Tensor d_cat = m.decoder[d]->backward(g);
        Tensor d_up;
        nn::split_channels(d_cat, m.up_channels[d], d_up, skip_grads[d]);
        g = m.up[d]->backward(d_up);
    }
    if (config_.pyag) g = gate_backward(D - 1, g);

    for (int d = D - 1; d >= 0; --d) {
        if (d < D - 1) g += skip_grads[d];
        g = m.encoder[d]->backward(g);
        if (d > 0) g = m.pools[d - 1].backward(g);
    }
}

void UNet::zero_grad() {
    for (nn::Param* p : parameters()) p->grad.fill(0.0);
}

std::vector<nn::Param*> UNet::parameters() {
    std::vector<nn::Param*> params;
    std::vector<nn::Buffer*> buffers;
    auto& m = *impl_;
    for (auto& e : m.encoder) e->collect(params, buffers);
    for (int d = config_.depth - 2; d >= 0; --d) {
        m.up[d]->collect(params, buffers);
        m.decoder[d]->collect(params, buffers);
        if (m.gates[d]) m.gates[d]->collect(params, buffers);
    }
    if (m.gates[config_.depth - 1]) m.gates[config_.depth - 1]->collect(params, buffers);
    m.head->collect(params, buffers);
    return params;
}

std::vector<nn::Buffer*> UNet::buffers() {
    std::vector<nn::Param*> params;
    std::vector<nn::Buffer*> buffers;
    auto& m = *impl_;
    for (auto& e : m.encoder) e->collect(params, buffers);
    for (int d = config_.depth - 2; d >= 0; --d) {
        m.up[d]->collect(params, buffers);
        m.decoder[d]->collect(params, buffers);
    }
    return buffers;
}

std::size_t UNet::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
}

const UNet::GateTrace& UNet::gate_trace(int d) const {
    if (!config_.pyag || d < 1 || d >= config_.depth) fail(ErrorKind::InvalidArgument, "no gate at depth " + std::to_string(d));
    return impl_->traces[d];
}

nn::Conv2d& UNet::gate_classifier(int d) {
    if (!config_.pyag || d < 1 || d >= config_.depth) fail(ErrorKind::InvalidArgument, "no gate at depth " + std::to_string(d));
    return *impl_->gates[d];
}

}  // namespace pyag
