#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "pyag/common.hpp"
#include "pyag/losses.hpp"
#include "pyag/model.hpp"

using namespace pyag;

namespace {

Tensor random_input(std::uint64_t seed, int n, int c, int h, int w) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor t(n, c, h, w);
    for (double& v : t.values()) v = nd(rng);
    return t;
}

ModelConfig small(int depth, int classes, std::uint64_t seed = 1) {
    ModelConfig c;
    c.depth = depth;
    c.base_filters = 4;
    c.classes = classes;
    c.seed = seed;
    return c;
}

void check_simplex(const Tensor& t) {
    for (int b = 0; b < t.n(); ++b)
        for (int y = 0; y < t.h(); ++y)
            for (int x = 0; x < t.w(); ++x) {
                double s = 0;
                for (int k = 0; k < t.c(); ++k) {
                    CHECK(t(b, k, y, x) >= 0.0);
                    CHECK(std::isfinite(t(b, k, y, x)));
                    s += t(b, k, y, x);
                }
                CHECK(std::fabs(s - 1.0) < 1e-5);
            }
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("shape law: D=4, c=4 on 224x224 gives 224/112/56/28 maps") {
    ModelConfig c = small(4, 4);
    c.base_filters = 2;
    UNet net(c);
    const auto p = net.forward(random_input(1, 1, 1, 224, 224), false);
    REQUIRE(p.depth() == 4);
    for (int d = 0; d < 4; ++d) {
        CHECK(p.maps[d].h() == 224 >> d);
        CHECK(p.maps[d].w() == 224 >> d);
        CHECK(p.maps[d].c() == 4);
    }
}

TEST_CASE("minimal D=2 model runs and every map is on the simplex") {
    for (int depth : {2, 3, 4})
        for (bool train : {false, true}) {
            UNet net(small(depth, 3));
            const auto p = net.forward(random_input(depth, 2, 1, 32, 48), train);
            CHECK(p.depth() == depth);
            for (const auto& m : p.maps) check_simplex(m);
        }
}

TEST_CASE("batch dimension is preserved") {
    UNet net(small(3, 3));
    const auto p = net.forward(random_input(2, 12, 1, 16, 16), false);
    for (const auto& m : p.maps) CHECK(m.n() == 12);
}

TEST_CASE("zero input gives finite outputs in both modes") {
    UNet net(small(3, 3));
    for (bool train : {true, false})
        for (const auto& m : net.forward(Tensor(2, 1, 16, 16), train).maps)
            for (double v : m.values()) CHECK(std::isfinite(v));
}

TEST_CASE("same seed gives identical parameters; inference is deterministic") {
    UNet a(small(3, 3, 7)), b(small(3, 3, 7)), c(small(3, 3, 8));
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->value == pb[i]->value);
        differs |= !(pa[i]->value == pc[i]->value);
    }
    CHECK(differs);
    const Tensor x = random_input(3, 2, 1, 16, 16);
    CHECK(a.forward(x, false).maps == a.forward(x, false).maps);
}

TEST_CASE("bad inputs are invalid-argument errors") {
    UNet net(small(3, 3));
    CHECK_THROWS_AS(net.forward(Tensor(1, 1, 18, 16), false), Error);
    CHECK_THROWS_AS(net.forward(Tensor(1, 3, 16, 16), false), Error);
    ModelConfig bad = small(1, 3);
    CHECK_THROWS_AS(UNet{bad}, Error);
    bad = small(3, 1);
    CHECK_THROWS_AS(UNet{bad}, Error);
}

TEST_CASE("plain UNet returns a single map") {
    ModelConfig c = small(3, 3);
    c.pyag = false;
    UNet net(c);
    CHECK(net.forward(random_input(1, 1, 1, 16, 16), false).depth() == 1);
}

TEST_CASE("gate algebra on hand values") {
    Tensor f(1, 2, 1, 3);
    Tensor aux(1, 2, 1, 3);
    const double bkd[] = {1.0, 0.0, 0.25};
    for (int x = 0; x < 3; ++x) {
        f(0, 0, 0, x) = 2.0;
        f(0, 1, 0, x) = -4.0;
        aux(0, 0, 0, x) = bkd[x];
        aux(0, 1, 0, x) = 1.0 - bkd[x];
    }
    const Tensor g = gate_features(f, aux);
    CHECK(g(0, 0, 0, 0) == 0.0);
    CHECK(g(0, 1, 0, 0) == 0.0);
    CHECK(g(0, 0, 0, 1) == 2.0);
    CHECK(g(0, 1, 0, 1) == -4.0);
    CHECK(g(0, 0, 0, 2) == 1.5);
    CHECK(g(0, 1, 0, 2) == -3.0);
}

TEST_CASE("internal gated features equal features*(1-aux_bkd) bit for bit") {
    UNet net(small(4, 3, 5));
    net.forward(random_input(11, 2, 1, 32, 32), true);
    for (int d = 1; d < 4; ++d) {
        const auto& t = net.gate_trace(d);
        REQUIRE(t.features.same_shape(t.gated));
        for (int b = 0; b < t.features.n(); ++b)
            for (int ch = 0; ch < t.features.c(); ++ch)
                for (int y = 0; y < t.features.h(); ++y)
                    for (int x = 0; x < t.features.w(); ++x)
                        CHECK(t.gated(b, ch, y, x) == t.features(b, ch, y, x) * (1.0 - t.aux(b, 0, y, x)));
    }
}

TEST_CASE("downsample_target: constants, block means, checkerboard") {
    Tensor c(1, 3, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            c(0, 0, y, x) = 0.2;
            c(0, 1, y, x) = 0.3;
            c(0, 2, y, x) = 0.5;
        }
    const Tensor t = downsample_target(c, 2).probs;
    CHECK(t.h() == 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            CHECK(t(0, 0, y, x) == doctest::Approx(0.2));
            CHECK(t(0, 2, y, x) == doctest::Approx(0.5));
        }

    Tensor blk(1, 2, 2, 2);
    const double bg[] = {1, 1, 0, 0};
    for (int i = 0; i < 4; ++i) {
        blk(0, 0, i / 2, i % 2) = bg[i];
        blk(0, 1, i / 2, i % 2) = 1 - bg[i];
    }
    CHECK(downsample_target(blk, 1).probs(0, 0, 0, 0) == 0.5);

    Tensor cb(1, 2, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            cb(0, 0, y, x) = (y + x) % 2;
            cb(0, 1, y, x) = 1 - (y + x) % 2;
        }
    const Tensor p = downsample_target(cb, 1).probs;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            CHECK(p(0, 0, y, x) == 0.5);
            CHECK(p(0, 1, y, x) == 0.5);
        }
}

TEST_CASE("downsample_target matches the block-mean oracle") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor full = oracle::random_simplex(rng, 2, 3, 8, 8);
        for (int d = 1; d <= 3; ++d) {
            const Tensor t = downsample_target(full, d).probs;
            for (int b = 0; b < 2; ++b)
                for (int y = 0; y < t.h(); ++y)
                    for (int x = 0; x < t.w(); ++x) {
                        const auto ref = oracle::pooled_target(full, b, d, y, x);
                        for (int k = 0; k < 3; ++k) CHECK(t(b, k, y, x) == doctest::Approx(ref[k]).epsilon(1e-12));
                    }
        }
    }
}

TEST_CASE("nearest target pooling samples the block corner") {
    std::mt19937_64 rng(3);
    const Tensor full = oracle::random_simplex(rng, 1, 3, 8, 8);
    const Tensor t = downsample_target(full, 1, TargetPooling::Nearest).probs;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int k = 0; k < 3; ++k) CHECK(t(0, k, y, x) == doctest::Approx(full(0, k, 2 * y, 2 * x)));
}

TEST_CASE("self-consistency gradient never reaches head parameters") {
    for (auto scope : {SelfSupScope::TargetDetach, SelfSupScope::GatesAndEncoder}) {
        ModelConfig c = small(3, 3, 2);
        c.self_sup_scope = scope;
        UNet net(c);
        net.zero_grad();
        const auto p = net.forward(random_input(4, 2, 1, 16, 16), true);
        std::vector<Tensor> g;
        losses::self_consistency_loss(p, {}, TargetPooling::Average, &g);
        net.backward(g);
        bool gate = false, encoder = false;
        for (auto* prm : net.parameters()) {
            double mag = 0;
            for (double v : prm->grad.values()) mag = std::max(mag, std::fabs(v));
            if (prm->group == nn::Group::Head) CHECK_MESSAGE(mag == 0.0, prm->name);
            if (prm->group == nn::Group::Gate) gate |= mag > 0;
            if (prm->group == nn::Group::Encoder) encoder |= mag > 0;
        }
        CHECK(gate);
        CHECK(encoder);
    }
}

TEST_CASE("group-restricted backward leaves other groups untouched") {
    UNet net(small(3, 3, 2));
    net.zero_grad();
    const auto p = net.forward(random_input(4, 2, 1, 16, 16), true);
    std::vector<Tensor> g;
    losses::self_consistency_loss(p, {}, TargetPooling::Average, &g);
    net.backward(g, {nn::Group::Encoder, nn::Group::Gate});
    for (auto* prm : net.parameters()) {
        double mag = 0;
        for (double v : prm->grad.values()) mag = std::max(mag, std::fabs(v));
        if (prm->group == nn::Group::DecoderTrunk || prm->group == nn::Group::Head) CHECK(mag == 0.0);
    }
}

TEST_CASE("finite differences agree with backprop, both upsampling modes") {
    for (auto mode : {UpsampleMode::NearestConv, UpsampleMode::Transposed}) {
        auto toy = gradcheck::make_toy(3);
        if (mode == UpsampleMode::Transposed) {
            auto cfg = gradcheck::toy_config(3);
            cfg.upsample_mode = mode;
            toy.model = UNet(cfg);
        }
        for (auto term : {gradcheck::Term::Pce, gradcheck::Term::Compactness}) {
            const auto probes = gradcheck::run(toy, term, 8, 5);
            CHECK(probes.size() == 8);
            for (const auto& p : probes) CHECK_MESSAGE(p.rel_error() < 1e-3, gradcheck::name(term), " ", p.param);
        }
    }
}

}  // TEST_SUITE
