#include "pyag/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pyag/common.hpp"
#include "pyag/optim.hpp"
#include "pyag/png_io.hpp"
#include "pyag/rng.hpp"

namespace fs = std::filesystem;

namespace pyag {

std::vector<PreparedSample> prepare_samples(const std::vector<datakit::Sample>& samples, const DataConfig& data) {
    std::map<std::string, std::vector<Image>> by_subject;
    for (const auto& s : samples) by_subject[s.subject_id].push_back(s.image);

    std::vector<PreparedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        Image img = datakit::normalize(s.image, by_subject.at(s.subject_id), data.normalization);
        std::optional<Grid<std::int32_t>> supervision, truth;
        if (s.label) truth = s.label->classes;
        if (data.supervision == Supervision::Full) supervision = truth;
        else if (s.scribble) supervision = s.scribble->classes;
        if (data.crop_h > 0 && data.crop_w > 0) {
            img = datakit::crop_or_pad(img, data.crop_h, data.crop_w, 0.0);
            if (truth) truth = datakit::crop_or_pad(*truth, data.crop_h, data.crop_w, std::int32_t{0});
            if (supervision) {
                const std::int32_t fill = data.supervision == Supervision::Full ? 0 : Scribble::kUnlabeled;
                supervision = datakit::crop_or_pad(*supervision, data.crop_h, data.crop_w, fill);
            }
        }
        PreparedSample p;
        p.subject = s.subject_id;
        p.index = s.index;
        p.image = Tensor(1, img.channels, img.height, img.width);
        std::copy(img.pixels.begin(), img.pixels.end(), p.image.data());
        p.supervision = std::move(supervision);
        p.truth = std::move(truth);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<PreparedSample> select_subjects(const std::vector<PreparedSample>& all, const std::vector<std::string>& ids) {
    std::vector<PreparedSample> out;
    for (const auto& s : all)
        if (std::find(ids.begin(), ids.end(), s.subject) != ids.end()) out.push_back(s);
    return out;
}

PreparedSplits load_splits(const DataConfig& data, int num_classes) {
    if (data.dir.empty()) fail(ErrorKind::Config, "data.dir is not set");
    const auto samples = datakit::load_dataset(data.dir, num_classes);
    PreparedSplits out;
    std::vector<std::string> ids;
    for (const auto& s : samples) {
        if (ids.empty() || ids.back() != s.subject_id) ids.push_back(s.subject_id);
        if (s.label) out.num_classes = std::max(out.num_classes, s.label->num_classes);
    }
    out.ids = datakit::split_patients(ids, data.fractions, data.split_seed);
    const auto all = prepare_samples(samples, data);
    out.train = select_subjects(all, out.ids.train_ids);
    out.val = select_subjects(all, out.ids.val_ids);
    out.test = select_subjects(all, out.ids.test_ids);
    return out;
}

std::vector<std::size_t> batch_indices(std::size_t n, int batch_size, std::uint64_t seed, std::int64_t step) {
    if (n == 0) return {};
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    const std::int64_t per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
    const std::int64_t epoch = step / per_epoch;
    const std::size_t slot = static_cast<std::size_t>(step % per_epoch);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(derive_seed(seed, {0xba7c4ULL, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    const std::size_t lo = slot * bs, hi = std::min(n, lo + bs);
    return {perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi)};
}

Tensor stack_images(const std::vector<PreparedSample>& samples, const std::vector<std::size_t>& idx) {
    if (idx.empty()) fail(ErrorKind::InvalidArgument, "empty batch");
    const Tensor& first = samples[idx[0]].image;
    Tensor out(static_cast<int>(idx.size()), first.c(), first.h(), first.w());
    const std::size_t per = first.size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor& img = samples[idx[i]].image;
        if (!img.same_shape(first))
            fail(ErrorKind::ShapeMismatch, "batch images differ in shape: " + img.shape_string() + " vs " +
                                               first.shape_string() + " (set data.crop)");
        std::copy_n(img.data(), per, out.data() + i * per);
    }
    return out;
}

Grid<std::int32_t> argmax_classes(const Tensor& probs, int b) {
    Grid<std::int32_t> g(probs.h(), probs.w());
    for (int y = 0; y < probs.h(); ++y)
        for (int x = 0; x < probs.w(); ++x) {
            int best = 0;
            for (int c = 1; c < probs.c(); ++c)
                if (probs(b, c, y, x) > probs(b, best, y, x)) best = c;
            g(y, x) = best;
        }
    return g;
}

namespace {

losses::Regularizer regularizer_for(Method m) {
    switch (m) {
        case Method::Pyag: return losses::Regularizer::SelfConsistency;
        case Method::PceCompactness: return losses::Regularizer::Compactness;
        case Method::PceOnly: return losses::Regularizer::None;
    }
    return losses::Regularizer::None;
}

std::set<nn::Group> regularizer_groups(const ModelConfig& m) {
    if (m.self_sup_scope == SelfSupScope::GatesAndEncoder) return {nn::Group::Encoder, nn::Group::Gate};
    return UNet::all_groups();
}

std::string rng_state(const Rng& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_checkpoint(const fs::path& path, const TrainConfig& config, UNet& model, Adam& opt, std::int64_t step,
                      double best, const Rng& rng) {
    Checkpoint ckpt;
    ckpt.train_config = to_json(config);
    ckpt.step = step;
    ckpt.rng_state = rng_state(rng);
    ckpt.best_val_dice = best;
    capture_state(ckpt, model, &opt);
    save_checkpoint(path, ckpt);
}

}  // namespace

std::string loss_csv_header(int depth) {
    std::string h = "step,pce";
    for (int d = 1; d < depth; ++d) h += ",self_d" + std::to_string(d);
    return h + ",self_total,weight_a,total,compactness";
}

std::string loss_csv_row(const StepRecord& r, int depth) {
    std::string row = std::to_string(r.step) + "," + fmt(r.loss.pce);
    for (int d = 1; d < depth; ++d) {
        const auto i = static_cast<std::size_t>(d - 1);
        row += "," + fmt(i < r.loss.self_per_depth.size() ? r.loss.self_per_depth[i] : 0.0);
    }
    row += "," + fmt(r.loss.self_total) + "," + fmt(r.loss.weight_a) + "," + fmt(r.loss.total) + "," +
           fmt(r.loss.compactness);
    return row;
}

void check_gradient_routing(UNet& model, const Tensor& probe, const losses::LossConfig& loss) {
    if (!model.config().pyag) return;
    std::vector<Tensor> saved_buffers, saved_grads;
    for (auto* b : model.buffers()) saved_buffers.push_back(b->value);
    for (auto* p : model.parameters()) saved_grads.push_back(p->grad);

    const auto pyramid = model.forward(probe, true);
    std::vector<Tensor> grads;
    losses::self_consistency_loss(pyramid, loss, model.config().target_pooling, &grads);
    model.zero_grad();
    model.backward(grads, regularizer_groups(model.config()));

    std::string leaked;
    bool gate_moved = false;
    for (auto* p : model.parameters()) {
        const bool nonzero = std::any_of(p->grad.values().begin(), p->grad.values().end(), [](double v) { return v != 0.0; });
        if (p->group == nn::Group::Head && nonzero) leaked += " " + p->name;
        if (p->group == nn::Group::Gate && nonzero) gate_moved = true;
    }

    auto buffers = model.buffers();
    for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i]->value = saved_buffers[i];
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = saved_grads[i];

    if (!leaked.empty())
        fail(ErrorKind::Config, "gradient routing self-test failed: self-consistency gradient reaches" + leaked);
    if (!gate_moved) log::warn("gradient routing self-test: no gate parameter received self-consistency gradient");
}

metrics::MetricsReport evaluate(UNet& model, const std::vector<PreparedSample>& samples) {
    std::vector<metrics::EvaluationItem> items;
    const int C = model.config().classes;
    for (const auto& s : samples) {
        if (!s.truth) {
            log::warn("evaluate: " + s.subject + "/" + std::to_string(s.index) + " has no dense label; skipped");
            continue;
        }
        for (auto v : s.truth->values())
            if (v < 0 || v >= C)
                fail(ErrorKind::ShapeMismatch, "class-count mismatch: label value " + std::to_string(v) +
                                                   " but checkpoint has " + std::to_string(C) + " classes");
        const auto pyramid = model.forward(s.image, false);
        items.push_back({s.subject, s.index, argmax_classes(pyramid.final_map(), 0), *s.truth});
    }
    return metrics::build_report(items, C);
}

metrics::MetricsReport evaluate(const fs::path& checkpoint, const std::vector<PreparedSample>& samples) {
    UNet model = restore_model(load_checkpoint(checkpoint));
    return evaluate(model, samples);
}

TrainResult train(const TrainConfig& config_in, const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& val_set, const TrainOptions& options) {
    TrainConfig config = config_in;
    config.model.pyag = config.method == Method::Pyag;
    config.model.seed = derive_seed(config.seed, {0x30de1ULL});
    validate(config);
    if (train_set.empty()) fail(ErrorKind::Config, "training set is empty");
    for (const auto& s : train_set) {
        if (!s.supervision)
            fail(ErrorKind::Config, "missing scribbles for training image " + s.subject + "/" + std::to_string(s.index));
        for (auto v : s.supervision->values())
            if (v != Scribble::kUnlabeled && (v < 0 || v >= config.model.classes))
                fail(ErrorKind::Config, "supervision class " + std::to_string(v) + " exceeds model.classes for " +
                                            s.subject);
    }
    fs::create_directories(options.out_dir);

    const auto reg = regularizer_for(config.method);
    TrainResult result;
    result.best_checkpoint = options.out_dir / "best.ckpt";
    result.last_checkpoint = options.out_dir / "last.ckpt";

    std::int64_t start = 0;
    double best = -1.0;
    Rng rng(config.seed);
    std::optional<UNet> model_holder;
    Adam opt(config.lr);
    if (options.resume_from) {
        const Checkpoint ckpt = load_checkpoint(*options.resume_from);
        if (to_json(ckpt.model) != to_json(config.model))
            fail(ErrorKind::Config, "resume checkpoint was trained with a different model config");
        model_holder.emplace(restore_model(ckpt));
        restore_optimizer(ckpt, *model_holder, opt);
        start = ckpt.step;
        best = ckpt.best_val_dice;
        std::istringstream(ckpt.rng_state) >> rng;
    } else {
        model_holder.emplace(config.model);
    }
    UNet& model = *model_holder;
    result.best_val_dice = best;
    const int D = config.model.depth;

    const fs::path log_path = options.out_dir / "log.csv";
    std::ofstream log_csv;
    if (start > 0 && fs::exists(log_path)) {
        log_csv.open(log_path, std::ios::app);
    } else {
        log_csv.open(log_path);
        log_csv << loss_csv_header(D) << '\n';
    }

    if (config.routing_self_test && config.method == Method::Pyag) {
        const auto idx = batch_indices(train_set.size(), config.batch_size, config.seed, 0);
        check_gradient_routing(model, stack_images(train_set, idx), config.loss);
    }

    bool best_written = start > 0 && fs::exists(result.best_checkpoint);
    auto validate_now = [&](std::int64_t step) {
        if (val_set.empty()) return;
        const double dice = evaluate(model, val_set).mean_foreground_dice();
        result.validations.push_back({static_cast<int>(step), dice});
        if (dice > best) {
            best = dice;
            write_checkpoint(result.best_checkpoint, config, model, opt, step, best, rng);
            best_written = true;
        }
    };

    const auto params = model.parameters();
    std::int64_t step = start;
    for (; step < config.max_steps; ++step) {
        const auto idx = batch_indices(train_set.size(), config.batch_size, config.seed, step);
        const Tensor x = stack_images(train_set, idx);
        std::vector<Grid<std::int32_t>> labels;
        for (auto i : idx) labels.push_back(*train_set[i].supervision);

        const auto pyramid = model.forward(x, true);
        const auto loss = losses::total_loss(pyramid, labels, config.loss, reg, config.model.target_pooling);
        model.zero_grad();
        if (reg == losses::Regularizer::SelfConsistency && config.model.self_sup_scope == SelfSupScope::GatesAndEncoder) {
            model.backward(loss.grad_supervised);
            model.backward(loss.grad_regularizer, regularizer_groups(config.model));
        } else {
            model.backward(loss.combined());
        }
        opt.step(params);

        StepRecord rec{static_cast<int>(step + 1), loss.breakdown};
        const double eps = config.loss.epsilon;
        if (config.loss.ratio_mode == losses::RatioMode::FixedRatio && reg != losses::Regularizer::None &&
            rec.loss.pce > eps && rec.loss.regularizer_value() > eps) {
            const double ratio = rec.loss.weight_a * rec.loss.regularizer_value() / rec.loss.pce;
            if (std::abs(ratio - config.loss.a0) > 1e-4) {
                ++result.ratio_violations;
                log::warn("loss ratio telemetry off at step " + std::to_string(rec.step) + ": " + fmt(ratio));
            }
        }
        log_csv << loss_csv_row(rec, D) << '\n';
        result.steps.push_back(rec);

        const bool keep_going = !options.on_step || options.on_step(rec);
        if ((step + 1) % config.val_every == 0 || step + 1 == config.max_steps) validate_now(step + 1);
        if (!keep_going) {
            ++step;
            break;
        }
    }
    log_csv.flush();

    write_checkpoint(result.last_checkpoint, config, model, opt, step, best, rng);
    if (!best_written) fs::copy_file(result.last_checkpoint, result.best_checkpoint, fs::copy_options::overwrite_existing);
    result.best_val_dice = best;

    nlohmann::json summary;
    summary["config"] = to_json(config);
    summary["steps_completed"] = step;
    summary["best_val_dice"] = best;
    summary["ratio_violations"] = result.ratio_violations;
    summary["parameters"] = model.parameter_count();
    nlohmann::json vals = nlohmann::json::array();
    for (const auto& v : result.validations) vals.push_back({{"step", v.step}, {"mean_foreground_dice", v.mean_foreground_dice}});
    summary["validations"] = vals;
    if (!result.steps.empty()) {
        const auto& l = result.steps.back().loss;
        summary["final_loss"] = {{"pce", l.pce}, {"self_total", l.self_total}, {"compactness", l.compactness},
                                 {"weight_a", l.weight_a}, {"total", l.total}};
    }
    std::ofstream(options.out_dir / "summary.json") << summary.dump(2) << '\n';
    return result;
}

PredictOutcome predict(const fs::path& checkpoint, const std::vector<PreparedSample>& samples, const fs::path& out_dir,
                       const PredictOptions& options) {
    UNet model = restore_model(load_checkpoint(checkpoint));
    PredictOutcome outcome;
    for (const auto& s : samples) {
        try {
            const auto pyramid = model.forward(s.image, false);
            const fs::path dir = out_dir / s.subject;
            fs::create_directories(dir);
            const fs::path p = dir / ("pred_" + std::to_string(s.index) + ".png");
            png::write_classes(p, argmax_classes(pyramid.final_map(), 0));
            outcome.written.push_back(p);
            if (options.write_aux)
                for (int d = 1; d < pyramid.depth(); ++d) {
                    const fs::path a = dir / ("aux" + std::to_string(d) + "_" + std::to_string(s.index) + ".png");
                    png::write_classes(a, argmax_classes(pyramid.maps[d], 0));
                    outcome.written.push_back(a);
                }
        } catch (const Error& e) {
            outcome.errors.push_back(s.subject + "/" + std::to_string(s.index) + ": " + e.what());
            log::warn("predict: " + outcome.errors.back());
        }
    }
    return outcome;
}

}  // namespace pyag
