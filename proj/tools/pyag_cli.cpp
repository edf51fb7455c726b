// pyag: data synthesis, scribbles, training, evaluation, prediction and reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pyag/common.hpp"
#include "pyag/config.hpp"
#include "pyag/datakit.hpp"
#include "pyag/manifest.hpp"
#include "pyag/png_io.hpp"
#include "pyag/report.hpp"
#include "pyag/scribbles.hpp"
#include "pyag/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pyag;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
    bool force = false;
    bool json = false;
};

// Reported as a plain error; exit code 1.
struct Refusal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void emit(const Globals& g, const json& result, const std::string& human) {
    if (g.json) std::cout << result.dump() << std::endl;
    else std::cout << human << std::endl;
}

std::string require_out(const Globals& g, const std::string& what) {
    if (g.out.empty()) fail(ErrorKind::InvalidArgument, what + " needs --out");
    return g.out;
}

bool dir_nonempty(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

manifest::RunManifest start_manifest(const std::string& command, const json& config, const std::string& hash) {
    manifest::RunManifest m;
    m.command = command;
    m.config = config;
    m.input_hash = hash;
    m.run_id = hash.substr(0, 12);
    return m;
}

// generate-data

struct GenerateArgs {
    int size = 64;
    int subjects = 20;
    int images_per_subject = 1;
    double noise_std = 0.05;
};

void cmd_generate(const Globals& g, const GenerateArgs& a) {
    const fs::path out = require_out(g, "generate-data");
    if (dir_nonempty(out)) {
        if (!g.force) throw Refusal("output directory " + out.string() + " is not empty; pass --force to overwrite");
        for (const auto& e : fs::directory_iterator(out)) fs::remove_all(e.path());
    }
    datakit::SyntheticSpec spec;
    spec.height = spec.width = a.size;
    spec.num_subjects = a.subjects;
    spec.images_per_subject = a.images_per_subject;
    spec.noise_std = a.noise_std;
    const double scale = a.size / 64.0;
    spec.center_jitter *= scale;
    spec.blob_radius = {spec.blob_radius.first * scale, spec.blob_radius.second * scale};
    spec.ring_thickness = {spec.ring_thickness.first * scale, spec.ring_thickness.second * scale};
    datakit::validate(spec);
    const std::uint64_t seed = g.seed.value_or(0);

    const json config = {{"size", a.size}, {"subjects", a.subjects}, {"images_per_subject", a.images_per_subject},
                         {"noise_std", a.noise_std}, {"seed", seed}};
    auto m = start_manifest("generate-data", config, manifest::sha1_hex(config.dump()));
    manifest::write(out / "manifest.json", m);
    const auto r = datakit::write_synthetic_dataset(out, spec, seed);
    m.outputs = {{"subjects", r.subject_ids.size()}, {"images", r.images}, {"root", out.string()}};
    m.status = "complete";
    manifest::write(out / "manifest.json", m);
    emit(g, manifest::to_json(m),
         "wrote " + std::to_string(r.subject_ids.size()) + " subjects (" + std::to_string(r.images) + " images) to " +
             out.string());
}

// make-scribbles

struct ScribbleArgs {
    std::string labels;
    std::string fg_mode = "skeleton";
    std::optional<int> walk_length;
    int max_thickness = 2;
};

void cmd_make_scribbles(const Globals& g, const ScribbleArgs& a) {
    const fs::path in = a.labels;
    const fs::path out = g.out.empty() ? in : fs::path(g.out);
    scribbles::ScribbleConfig cfg;
    cfg.fg_mode = scribbles::parse_fg_mode(a.fg_mode);
    cfg.max_thickness = a.max_thickness;
    cfg.bg_walk_length = a.walk_length;
    cfg.seed = g.seed.value_or(0);
    scribbles::validate(cfg);

    std::vector<fs::path> label_files;
    if (fs::is_directory(in))
        for (const auto& e : fs::recursive_directory_iterator(in))
            if (e.is_regular_file() && e.path().filename().string().rfind("label_", 0) == 0)
                label_files.push_back(e.path());
    const json config = {{"labels", in.string()}, {"fg_mode", a.fg_mode}, {"max_thickness", a.max_thickness},
                         {"walk_length", a.walk_length ? json(*a.walk_length) : json(nullptr)}, {"seed", cfg.seed}};
    const std::string hash = manifest::hash_inputs(label_files, config.dump());
    const fs::path mpath = out / "scribbles_manifest.json";
    if (!g.force && manifest::already_done(mpath, "make-scribbles", hash)) {
        emit(g, {{"status", "up_to_date"}, {"manifest", mpath.string()}}, "scribbles up to date (" + mpath.string() + ")");
        return;
    }
    auto m = start_manifest("make-scribbles", config, hash);
    manifest::write(mpath, m);

    auto samples = datakit::load_dataset(in);
    if (samples.empty()) fail(ErrorKind::InvalidArgument, "no images found under " + in.string());
    const auto stats = scribbles::annotate_samples(samples, cfg);
    for (const auto& s : samples) {
        if (out == in) {
            png::write_classes(out / s.subject_id / ("scribble_" + std::to_string(s.index) + ".png"), s.scribble->classes);
        } else {
            datakit::save_sample(out, s);
        }
    }
    std::ofstream csv(out / "scribble_stats.csv");
    csv << "subject,image,labeled,total,labeled_fraction,empty_classes\n";
    for (const auto& st : stats) {
        std::string empty;
        for (int c : st.stats.empty_classes) empty += (empty.empty() ? "" : ";") + std::to_string(c);
        char frac[32];
        std::snprintf(frac, sizeof frac, "%.6f", st.stats.labeled_fraction());
        csv << st.subject << ',' << st.index << ',' << st.stats.labeled << ',' << st.stats.total << ',' << frac << ','
            << empty << '\n';
        if (!st.stats.empty_classes.empty())
            log::warn("scribble for " + st.subject + "/" + std::to_string(st.index) + " has empty classes: " + empty);
    }
    m.outputs = {{"root", out.string()}, {"images", samples.size()}, {"stats", (out / "scribble_stats.csv").string()}};
    m.status = "complete";
    manifest::write(mpath, m);
    emit(g, manifest::to_json(m), "scribbled " + std::to_string(samples.size()) + " images into " + out.string());
}

// train

struct TrainArgs {
    std::string method;
    std::string data;
    std::string resume;
    std::vector<std::string> sets;
};

TrainConfig assemble_config(const Globals& g, const TrainArgs& a) {
    TrainConfig cfg = g.config.empty() ? TrainConfig{} : load_config_file(g.config);
    std::string overrides;
    for (const auto& kv : a.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail(ErrorKind::Config, "--set expects key=value, got '" + kv + "'");
        overrides += kv + "\n";
    }
    if (!overrides.empty()) cfg = parse_config_text(overrides, cfg);
    if (!a.method.empty()) cfg.method = parse_method(a.method);
    if (!a.data.empty()) cfg.data.dir = a.data;
    if (g.seed) cfg.seed = *g.seed;
    validate(cfg);
    return cfg;
}

void cmd_train(const Globals& g, const TrainArgs& a) {
    const fs::path out = require_out(g, "train");
    const TrainConfig cfg = assemble_config(g, a);
    std::vector<fs::path> inputs{cfg.data.dir};
    if (!a.resume.empty()) inputs.emplace_back(a.resume);
    const std::string hash = manifest::hash_inputs(inputs, to_config_text(cfg) + "resume=" + a.resume);
    const fs::path mpath = out / "manifest.json";
    if (!g.force && manifest::already_done(mpath, "train", hash)) {
        emit(g, {{"status", "up_to_date"}, {"manifest", mpath.string()}}, "training run up to date (" + mpath.string() + ")");
        return;
    }
    auto m = start_manifest("train", to_json(cfg), hash);
    manifest::write(mpath, m);

    const auto splits = load_splits(cfg.data, cfg.model.classes);
    TrainOptions opts;
    opts.out_dir = out;
    if (!a.resume.empty()) opts.resume_from = fs::path(a.resume);
    const auto r = train(cfg, splits.train, splits.val, opts);
    m.outputs = {{"best", r.best_checkpoint.string()}, {"last", r.last_checkpoint.string()},
                 {"log", (out / "log.csv").string()}, {"summary", (out / "summary.json").string()},
                 {"best_val_dice", r.best_val_dice}, {"steps", r.steps.size()}};
    m.status = "complete";
    manifest::write(mpath, m);
    emit(g, manifest::to_json(m), "trained " + std::to_string(r.steps.size()) + " steps; best checkpoint " +
                                      r.best_checkpoint.string());
}

// evaluate / predict share split selection

std::vector<PreparedSample> split_samples(const fs::path& checkpoint, const std::string& data_override,
                                          const std::string& split) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    TrainConfig tc = train_config_from_json(ckpt.train_config);
    if (!data_override.empty()) tc.data.dir = data_override;
    const auto s = load_splits(tc.data, ckpt.model.classes);
    if (split == "train") return s.train;
    if (split == "val") return s.val;
    if (split == "test") return s.test;
    if (split == "all") {
        auto all = s.train;
        all.insert(all.end(), s.val.begin(), s.val.end());
        all.insert(all.end(), s.test.begin(), s.test.end());
        return all;
    }
    fail(ErrorKind::InvalidArgument, "unknown split '" + split + "' (train, val, test, all)");
}

struct EvalArgs {
    std::string checkpoint;
    std::string split = "test";
    std::string data;
    bool aux = false;
};

json report_json(const metrics::MetricsReport& r) {
    auto agg = [](const std::map<int, metrics::Aggregate>& m) {
        json j = json::object();
        for (const auto& [cls, a] : m)
            j[cls < 0 ? "overall" : std::to_string(cls)] = {
                {"median", a.median}, {"iqr", a.iqr}, {"mean", a.mean}, {"count", a.count}};
        return j;
    };
    return {{"rows", r.rows.size()}, {"mean_foreground_dice", r.mean_foreground_dice()},
            {"dice", agg(r.dice)}, {"iou", agg(r.iou)}, {"hausdorff", agg(r.hausdorff)}};
}

void cmd_evaluate(const Globals& g, const EvalArgs& a) {
    const fs::path out = require_out(g, "evaluate");
    const json config = {{"checkpoint", a.checkpoint}, {"split", a.split}, {"data", a.data}};
    std::vector<fs::path> inputs{a.checkpoint};
    if (!a.data.empty()) inputs.emplace_back(a.data);
    const std::string hash = manifest::hash_inputs(inputs, config.dump());
    const fs::path mpath = out / "manifest.json";
    if (!g.force && manifest::already_done(mpath, "evaluate", hash)) {
        emit(g, {{"status", "up_to_date"}, {"manifest", mpath.string()}}, "evaluation up to date (" + mpath.string() + ")");
        return;
    }
    auto m = start_manifest("evaluate", config, hash);
    manifest::write(mpath, m);

    const auto samples = split_samples(a.checkpoint, a.data, a.split);
    const auto report = evaluate(fs::path(a.checkpoint), samples);
    metrics::write_report_csv((out / "report.csv").string(), report);
    const json summary = report_json(report);
    std::ofstream(out / "report.json") << summary.dump(2) << '\n';
    m.outputs = {{"csv", (out / "report.csv").string()}, {"json", (out / "report.json").string()},
                 {"mean_foreground_dice", report.mean_foreground_dice()}};
    m.status = "complete";
    manifest::write(mpath, m);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", report.mean_foreground_dice());
    emit(g, manifest::to_json(m), "evaluated " + std::to_string(samples.size()) + " images; mean foreground Dice " + buf);
}

void cmd_predict(const Globals& g, const EvalArgs& a) {
    const fs::path out = require_out(g, "predict");
    const json config = {{"checkpoint", a.checkpoint}, {"split", a.split}, {"data", a.data}, {"aux", a.aux}};
    std::vector<fs::path> inputs{a.checkpoint};
    if (!a.data.empty()) inputs.emplace_back(a.data);
    const std::string hash = manifest::hash_inputs(inputs, config.dump());
    const fs::path mpath = out / "manifest.json";
    if (!g.force && manifest::already_done(mpath, "predict", hash)) {
        emit(g, {{"status", "up_to_date"}, {"manifest", mpath.string()}}, "predictions up to date (" + mpath.string() + ")");
        return;
    }
    auto m = start_manifest("predict", config, hash);
    manifest::write(mpath, m);

    const auto samples = split_samples(a.checkpoint, a.data, a.split);
    const auto r = predict(a.checkpoint, samples, out, {a.aux});
    for (const auto& e : r.errors) log::warn(e);
    m.outputs = {{"files", r.written.size()}, {"errors", r.errors}};
    m.status = "complete";
    manifest::write(mpath, m);
    emit(g, manifest::to_json(m), "wrote " + std::to_string(r.written.size()) + " masks to " + out.string() +
                                      (r.errors.empty() ? "" : " (" + std::to_string(r.errors.size()) + " errors)"));
}

// report

void cmd_report(const Globals& g, const std::vector<std::string>& runs) {
    const fs::path out = require_out(g, "report");
    std::vector<report::NamedReport> named;
    std::vector<fs::path> inputs;
    for (const auto& spec : runs) {
        std::string name, path = spec;
        if (const auto eq = spec.find('='); eq != std::string::npos) {
            name = spec.substr(0, eq);
            path = spec.substr(eq + 1);
        }
        fs::path csv = path;
        if (fs::is_directory(csv)) csv /= "report.csv";
        if (!fs::exists(csv)) fail(ErrorKind::Io, "no report.csv at " + path);
        if (name.empty()) name = fs::path(path).filename().string();
        if (name.empty() || name == "report.csv") name = fs::path(path).parent_path().filename().string();
        named.push_back({name, metrics::read_report_csv(csv.string())});
        inputs.push_back(csv);
    }
    const std::string hash = manifest::hash_inputs(inputs, json(runs).dump());
    const fs::path mpath = out / "manifest.json";
    if (!g.force && manifest::already_done(mpath, "report", hash)) {
        emit(g, {{"status", "up_to_date"}, {"manifest", mpath.string()}}, "report up to date (" + mpath.string() + ")");
        return;
    }
    auto m = start_manifest("report", json{{"runs", runs}}, hash);
    manifest::write(mpath, m);
    const auto cmp = report::compare_runs(named, out);
    json figs = json::array();
    for (const auto& f : cmp.figures) figs.push_back(f.string());
    m.outputs = {{"figures", figs}, {"tests", cmp.tests.size()}, {"paired", cmp.paired}};
    if (!cmp.refusal.empty()) m.outputs["refusal"] = cmp.refusal;
    m.status = "complete";
    manifest::write(mpath, m);

    std::ostringstream human;
    human << "report for " << named.size() << " run(s) in " << out.string();
    for (const auto& t : cmp.tests)
        if (t.cls == -1)
            human << "\n  " << t.metric << ' ' << t.run_a << " vs " << t.run_b << ": p=" << t.p_value
                  << (t.significant ? " *" : "");
    if (!cmp.refusal.empty()) human << "\n  pairwise tests refused: " << cmp.refusal;
    emit(g, manifest::to_json(m), human.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PyAG scribble-supervised segmentation toolkit"};
    app.name("pyag");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--config", g.config, "Training config file (key = value)");
    app.add_flag("--force", g.force, "Overwrite or recompute existing outputs");
    app.add_flag("--json", g.json, "Machine-readable output and errors on stdout");

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate-data", "Write a synthetic ring+blob phantom dataset");
    c_gen->add_option("--size", gen.size, "Image side in pixels")->check(CLI::Range(16, 4096));
    c_gen->add_option("--subjects", gen.subjects, "Number of subjects")->check(CLI::PositiveNumber);
    c_gen->add_option("--images-per-subject", gen.images_per_subject)->check(CLI::PositiveNumber);
    c_gen->add_option("--noise-std", gen.noise_std, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);

    ScribbleArgs scr;
    auto* c_scr = app.add_subcommand("make-scribbles", "Emulate scribbles from dense label maps");
    c_scr->add_option("--labels", scr.labels, "Dataset root holding label_<k>.png files")->required();
    c_scr->add_option("--fg-mode", scr.fg_mode, "skeleton or iterated_erosion");
    c_scr->add_option("--walk-length", scr.walk_length, "Background random-walk positions")->check(CLI::PositiveNumber);
    c_scr->add_option("--max-thickness", scr.max_thickness)->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a model");
    c_train->add_option("--method", tr.method, "pyag, pce_only or pce_compactness");
    c_train->add_option("--data", tr.data, "Dataset root (overrides data.dir)");
    c_train->add_option("--resume", tr.resume, "Continue from a checkpoint");
    c_train->add_option("--set", tr.sets, "Config override key=value (repeatable)");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "Score a checkpoint on a data split");
    c_eval->add_option("--checkpoint", ev.checkpoint)->required();
    c_eval->add_option("--split", ev.split, "train, val, test or all");
    c_eval->add_option("--data", ev.data, "Dataset root (default: the one recorded in the checkpoint)");

    EvalArgs pr;
    pr.split = "all";
    auto* c_pred = app.add_subcommand("predict", "Write argmax masks for a data split");
    c_pred->add_option("--checkpoint", pr.checkpoint)->required();
    c_pred->add_option("--split", pr.split, "train, val, test or all");
    c_pred->add_option("--data", pr.data, "Dataset root (default: the one recorded in the checkpoint)");
    c_pred->add_flag("--aux", pr.aux, "Also write per-depth auxiliary masks");

    std::vector<std::string> runs;
    auto* c_rep = app.add_subcommand("report", "Compare evaluated runs: box plots and Wilcoxon tests");
    c_rep->add_option("runs", runs, "Evaluation dirs or report.csv files, optionally name=path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        if (g.json) std::cout << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
        return 2;
    }

    try {
        if (c_gen->parsed()) cmd_generate(g, gen);
        else if (c_scr->parsed()) cmd_make_scribbles(g, scr);
        else if (c_train->parsed()) cmd_train(g, tr);
        else if (c_eval->parsed()) cmd_evaluate(g, ev);
        else if (c_pred->parsed()) cmd_predict(g, pr);
        else if (c_rep->parsed()) cmd_report(g, runs);
        return 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        if (g.json) std::cout << json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << std::endl;
    } catch (const Refusal& e) {
        std::cerr << "refused: " << e.what() << '\n';
        if (g.json) std::cout << json{{"error", "refused"}, {"message", e.what()}}.dump() << std::endl;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (g.json) std::cout << json{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    }
    return 1;
}
