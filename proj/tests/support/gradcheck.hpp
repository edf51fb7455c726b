#pragma once
// Finite-difference checks of the model's analytic gradients.

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pyag/losses.hpp"
#include "pyag/model.hpp"

namespace gradcheck {

enum class Term { Pce, Self, Compactness };

inline const char* name(Term t) {
    switch (t) {
        case Term::Pce: return "pce";
        case Term::Self: return "self";
        case Term::Compactness: return "compactness";
    }
    return "?";
}

struct Probe {
    std::string param;
    std::size_t index = 0;
    double analytic = 0, numeric = 0;
    double rel_error() const {
        const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
        return scale == 0 ? 0.0 : std::fabs(analytic - numeric) / scale;
    }
};

struct Toy {
    pyag::UNet model;
    pyag::Tensor input;
    std::vector<pyag::Grid<std::int32_t>> scribbles;
    std::vector<pyag::Tensor> frozen_targets;  // self term: targets taken at the unperturbed point
};

inline pyag::ModelConfig toy_config(std::uint64_t seed, int depth = 3, int classes = 3) {
    pyag::ModelConfig c;
    c.depth = depth;
    c.base_filters = 2;
    c.classes = classes;
    c.in_channels = 1;
    c.seed = seed;
    return c;
}

inline Toy make_toy(std::uint64_t seed, int size = 8) {
    std::mt19937_64 rng(seed);
    Toy t{pyag::UNet(toy_config(seed)), pyag::Tensor(2, 1, size, size), {}, {}};
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : t.input.values()) v = n(rng);
    for (int b = 0; b < 2; ++b) t.scribbles.push_back(oracle::random_scribble(rng, size, size, 3, 0.5));
    const auto maps = t.model.forward(t.input, true).maps;
    t.frozen_targets.resize(maps.size());
    for (std::size_t d = 1; d < maps.size(); ++d)
        t.frozen_targets[d] = pyag::downsample_target(maps[0], static_cast<int>(d)).probs;
    return t;
}

// Loss value at the model's current parameters, written independently of the library losses.
inline double value(Toy& t, Term term, double eps) {
    const auto maps = t.model.forward(t.input, true).maps;
    switch (term) {
        case Term::Pce: return oracle::pce(maps[0], t.scribbles, eps);
        case Term::Self: return oracle::self_against(maps, t.frozen_targets, eps);
        case Term::Compactness: return oracle::compactness(maps[0], eps);
    }
    return 0;
}

// Analytic parameter gradients of one loss term, left in Param::grad.
inline void analytic(Toy& t, Term term, const pyag::losses::LossConfig& cfg) {
    t.model.zero_grad();
    const auto pyr = t.model.forward(t.input, true);
    std::vector<pyag::Tensor> grads(pyr.maps.size());
    switch (term) {
        case Term::Pce: pyag::losses::pce_loss(pyr.maps[0], t.scribbles, cfg, &grads[0]); break;
        case Term::Self: pyag::losses::self_consistency_loss(pyr, cfg, pyag::TargetPooling::Average, &grads); break;
        case Term::Compactness: pyag::losses::compactness_loss(pyr.maps[0], cfg, &grads[0]); break;
    }
    t.model.backward(grads);
}

/// `count` random probes with a non-negligible gradient, each compared with a central difference.
inline std::vector<Probe> run(Toy& t, Term term, int count, std::uint64_t seed, double h = 1e-5) {
    pyag::losses::LossConfig cfg;
    analytic(t, term, cfg);
    auto params = t.model.parameters();
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p]->value.size(); ++i)
            if (std::fabs(params[p]->grad.data()[i]) > 1e-7) candidates.emplace_back(p, i);
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::vector<Probe> out;
    for (std::size_t k = 0; k < candidates.size() && static_cast<int>(out.size()) < count; ++k) {
        auto [p, i] = candidates[k];
        double& w = params[p]->value.data()[i];
        const double saved = w;
        w = saved + h;
        const double up = value(t, term, cfg.epsilon);
        w = saved - h;
        const double down = value(t, term, cfg.epsilon);
        w = saved;
        out.push_back({params[p]->name, i, params[p]->grad.data()[i], (up - down) / (2 * h)});
    }
    return out;
}

}  // namespace gradcheck
