#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "../support/tempdir.hpp"
#include "pyag/checkpoint.hpp"
#include "pyag/common.hpp"
#include "pyag/config.hpp"
#include "pyag/datakit.hpp"
#include "pyag/png_io.hpp"
#include "pyag/rng.hpp"
#include "pyag/scribbles.hpp"
#include "pyag/trainer.hpp"

using namespace pyag;
namespace fs = std::filesystem;

namespace {

std::vector<datakit::Sample> phantoms(int n, int size = 32, std::uint64_t seed = 3) {
    datakit::SyntheticSpec spec;
    spec.height = spec.width = size;
    spec.blob_radius = {3, 5};
    spec.ring_thickness = {2, 4};
    spec.center_jitter = 2;
    std::vector<datakit::Sample> out;
    for (int i = 0; i < n; ++i) {
        auto [img, lab] = datakit::generate_synthetic_sample(spec, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        img.subject_id = datakit::subject_name(i);
        out.push_back({img, lab, std::nullopt, img.subject_id, 0});
    }
    scribbles::annotate_samples(out, {});
    return out;
}

TrainConfig tiny_config(Method m = Method::Pyag) {
    TrainConfig c;
    c.method = m;
    c.lr = 1e-3;
    c.batch_size = 3;
    c.max_steps = 6;
    c.val_every = 3;
    c.seed = 11;
    c.model.depth = 3;
    c.model.base_filters = 4;
    c.model.classes = 3;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_params(const Checkpoint& a, const Checkpoint& b) {
    for (const auto& [name, e] : a.tensors) {
        if (e.kind != "param" && e.kind != "buffer") continue;
        const auto it = b.tensors.find(name);
        if (it == b.tensors.end() || !(it->second.value == e.value)) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("batch schedule: per-epoch permutations, short batch kept, pure in (seed, step)") {
    const std::size_t n = 10;
    const int bs = 4;  // batches of 4, 4, 2 per epoch
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::multiset<std::size_t> seen;
        for (int b = 0; b < 3; ++b) {
            const auto idx = batch_indices(n, bs, 5, epoch * 3 + b);
            CHECK(idx.size() == (b < 2 ? 4u : 2u));
            seen.insert(idx.begin(), idx.end());
        }
        CHECK(seen.size() == n);
        CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == n);
    }
    CHECK(batch_indices(n, bs, 5, 7) == batch_indices(n, bs, 5, 7));
    CHECK(batch_indices(n, bs, 5, 0) != batch_indices(n, bs, 6, 0));
    CHECK(batch_indices(n, bs, 5, 0) != batch_indices(n, bs, 5, 3));
    CHECK(batch_indices(3, 12, 1, 0).size() == 3);
}

TEST_CASE("prepare_samples normalizes per subject and crops supervision consistently") {
    auto samples = phantoms(2, 32);
    DataConfig d;
    d.crop_h = d.crop_w = 16;
    const auto prepared = prepare_samples(samples, d);
    REQUIRE(prepared.size() == 2);
    CHECK(prepared[0].image.h() == 16);
    CHECK(prepared[0].supervision->h() == 16);
    CHECK(prepared[0].truth->h() == 16);
    CHECK(*prepared[0].truth == datakit::crop_or_pad(samples[0].label->classes, 16, 16, std::int32_t{0}));
    d.supervision = Supervision::Full;
    d.crop_h = d.crop_w = 0;
    const auto full = prepare_samples(samples, d);
    CHECK(*full[0].supervision == samples[0].label->classes);
}

TEST_CASE("zero steps leaves the initialization in the checkpoint") {
    TempDir tmp;
    const auto data = prepare_samples(phantoms(4), {});
    TrainConfig c = tiny_config();
    c.max_steps = 0;
    train(c, data, {}, {tmp.path()});
    const Checkpoint ck = load_checkpoint(tmp.path() / "last.ckpt");
    CHECK(ck.step == 0);
    ModelConfig mc = c.model;
    mc.seed = derive_seed(c.seed, {0x30de1ULL});
    UNet fresh(mc);
    for (auto* p : fresh.parameters()) CHECK(ck.tensors.at(p->name).value == p->value);
}

TEST_CASE("identical configs give identical logs and checkpoints") {
    TempDir a, b;
    const auto data = prepare_samples(phantoms(5), {});
    const auto val = prepare_samples(phantoms(2, 32, 9), {});
    const auto ra = train(tiny_config(), data, val, {a.path()});
    train(tiny_config(), data, val, {b.path()});
    CHECK(slurp(a.path() / "log.csv") == slurp(b.path() / "log.csv"));
    CHECK(slurp(a.path() / "last.ckpt") == slurp(b.path() / "last.ckpt"));
    CHECK(slurp(a.path() / "best.ckpt") == slurp(b.path() / "best.ckpt"));
    CHECK(ra.steps.size() == 6);
    CHECK(ra.validations.size() == 2);
    CHECK(ra.ratio_violations == 0);
    CHECK(fs::exists(a.path() / "summary.json"));
}

TEST_CASE("resume from step k reproduces the uninterrupted run") {
    TempDir a, b;
    const auto data = prepare_samples(phantoms(5), {});
    TrainConfig full = tiny_config();
    full.max_steps = 8;
    train(full, data, {}, {a.path()});
    TrainConfig part = full;
    part.max_steps = 3;
    train(part, data, {}, {b.path()});
    train(full, data, {}, {b.path(), b.path() / "last.ckpt"});
    const Checkpoint ca = load_checkpoint(a.path() / "last.ckpt");
    const Checkpoint cb = load_checkpoint(b.path() / "last.ckpt");
    CHECK(ca.step == 8);
    CHECK(cb.step == 8);
    CHECK(same_params(ca, cb));
    CHECK(same_params(cb, ca));
    CHECK(slurp(a.path() / "log.csv") == slurp(b.path() / "log.csv"));
}

TEST_CASE("missing scribbles is a configuration error before step 0") {
    TempDir tmp;
    auto samples = phantoms(3);
    samples[1].scribble.reset();
    const auto data = prepare_samples(samples, {});
    int steps = 0;
    TrainOptions opts{tmp.path()};
    opts.on_step = [&](const StepRecord&) { return ++steps, true; };
    try {
        train(tiny_config(), data, {}, opts);
        FAIL("expected a configuration error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    CHECK(steps == 0);
}

TEST_CASE("fixed-ratio telemetry holds for both regularized methods") {
    for (auto m : {Method::Pyag, Method::PceCompactness}) {
        TempDir tmp;
        const auto data = prepare_samples(phantoms(4), {});
        const auto r = train(tiny_config(m), data, {}, {tmp.path()});
        CHECK(r.ratio_violations == 0);
        for (const auto& s : r.steps) {
            const double reg = s.loss.regularizer_value();
            if (s.loss.pce > 1e-8 && reg > 1e-8) CHECK(std::fabs(s.loss.weight_a * reg / s.loss.pce - 0.1) < 1e-4);
        }
    }
    TempDir tmp;
    const auto r = train(tiny_config(Method::PceOnly), prepare_samples(phantoms(4), {}), {}, {tmp.path()});
    for (const auto& s : r.steps) {
        CHECK(s.loss.weight_a == 0.0);
        CHECK(s.loss.total == s.loss.pce);
    }
}

TEST_CASE("pce_only first update ignores label content at unlabeled pixels") {
    TempDir a, b;
    auto data = prepare_samples(phantoms(4), {});
    TrainConfig c = tiny_config(Method::PceOnly);
    c.max_steps = 1;
    train(c, data, {}, {a.path()});
    for (auto& s : data)
        for (std::size_t i = 0; i < s.truth->size(); ++i)
            if ((*s.supervision)[i] == Scribble::kUnlabeled) (*s.truth)[i] = ((*s.truth)[i] + 1) % 3;
    train(c, data, {}, {b.path()});
    CHECK(same_params(load_checkpoint(a.path() / "last.ckpt"), load_checkpoint(b.path() / "last.ckpt")));
}

TEST_CASE("gates_and_encoder scope trains and keeps the routing check") {
    TempDir tmp;
    TrainConfig c = tiny_config();
    c.model.self_sup_scope = SelfSupScope::GatesAndEncoder;
    const auto r = train(c, prepare_samples(phantoms(4), {}), {}, {tmp.path()});
    CHECK(r.steps.size() == 6);
}

TEST_CASE("routing self-test restores model state") {
    ModelConfig mc;
    mc.depth = 3;
    mc.base_filters = 4;
    mc.classes = 3;
    UNet net(mc);
    const auto data = prepare_samples(phantoms(2), {});
    std::vector<Tensor> before;
    for (auto* b : net.buffers()) before.push_back(b->value);
    check_gradient_routing(net, stack_images(data, {0, 1}), {});
    std::size_t i = 0;
    for (auto* b : net.buffers()) CHECK(b->value == before[i++]);
    for (auto* p : net.parameters())
        for (double v : p->grad.values()) CHECK(v == 0.0);
}

TEST_CASE("evaluate: deterministic, empty split, class mismatch") {
    TempDir tmp;
    const auto data = prepare_samples(phantoms(4), {});
    train(tiny_config(), data, {}, {tmp.path()});
    const auto r1 = evaluate(tmp.path() / "best.ckpt", data);
    const auto r2 = evaluate(tmp.path() / "best.ckpt", data);
    REQUIRE(r1.rows.size() == 8);
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        CHECK(r1.rows[i].dice == r2.rows[i].dice);
        CHECK(r1.rows[i].hausdorff == r2.rows[i].hausdorff);
    }
    CHECK(evaluate(tmp.path() / "best.ckpt", {}).rows.empty());
    auto bad = data;
    (*bad[0].truth)(0, 0) = 5;
    CHECK_THROWS_AS(evaluate(tmp.path() / "best.ckpt", bad), Error);
}

TEST_CASE("predict: round trip, aux resolutions, class range, per-file errors") {
    TempDir tmp;
    auto data = prepare_samples(phantoms(3), {});
    train(tiny_config(), data, {}, {tmp.path() / "run"});
    PreparedSample odd = data[0];
    odd.subject = "odd";
    odd.image = Tensor(1, 1, 18, 18);
    data.push_back(odd);
    const auto out = predict(tmp.path() / "run" / "best.ckpt", data, tmp.path() / "pred", {true});
    CHECK(out.errors.size() == 1);
    CHECK(out.written.size() == 9);
    UNet model = restore_model(load_checkpoint(tmp.path() / "run" / "best.ckpt"));
    for (int i = 0; i < 3; ++i) {
        const auto dir = tmp.path() / "pred" / data[i].subject;
        const auto pred = png::read_classes(dir / "pred_0.png");
        CHECK(pred == argmax_classes(model.forward(data[i].image, false).final_map(), 0));
        for (auto v : pred.values()) CHECK((v >= 0 && v < 3));
        for (int d = 1; d < 3; ++d) {
            const auto aux = png::read_classes(dir / ("aux" + std::to_string(d) + "_0.png"));
            CHECK(aux.h() == 32 >> d);
            CHECK(aux.w() == 32 >> d);
        }
    }
}

TEST_CASE("load_splits reads a dataset directory and respects fractions") {
    TempDir tmp;
    datakit::SyntheticSpec spec;
    spec.num_subjects = 10;
    datakit::write_synthetic_dataset(tmp.path(), spec, 1);
    DataConfig d;
    d.dir = tmp.path().string();
    d.fractions = {0.6, 0.2, 0.2};
    const auto s = load_splits(d);
    CHECK(s.train.size() == 6);
    CHECK(s.val.size() == 2);
    CHECK(s.test.size() == 2);
    CHECK(s.num_classes == 3);
    CHECK_FALSE(s.train[0].supervision.has_value());
    CHECK(s.train[0].truth.has_value());
}

}  // TEST_SUITE
