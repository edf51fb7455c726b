#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pyag/checkpoint.hpp"
#include "pyag/common.hpp"
#include "pyag/config.hpp"
#include "pyag/datakit.hpp"
#include "pyag/losses.hpp"
#include "pyag/metrics.hpp"
#include "pyag/model.hpp"
#include "pyag/scribbles.hpp"
#include "pyag/trainer.hpp"

namespace py = pybind11;
using namespace pyag;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I32 = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64& a) {
    if (a.ndim() != 4) throw py::value_error("expected an NCHW array");
    Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
             static_cast<int>(a.shape(3)));
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

F64 from_tensor(const Tensor& t) {
    F64 a({t.n(), t.c(), t.h(), t.w()});
    std::copy(t.data(), t.data() + t.size(), a.mutable_data());
    return a;
}

template <class T, class A>
Grid<T> to_grid(const A& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    Grid<T> g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), g.values().begin());
    return g;
}

template <class T>
py::array_t<T> from_grid(const Grid<T>& g) {
    py::array_t<T> a({g.h(), g.w()});
    std::copy(g.values().begin(), g.values().end(), a.mutable_data());
    return a;
}

std::vector<Grid<std::int32_t>> to_scribbles(const I32& a) {
    if (a.ndim() != 3) throw py::value_error("expected an N×H×W scribble array");
    std::vector<Grid<std::int32_t>> out;
    const std::size_t plane = static_cast<std::size_t>(a.shape(1) * a.shape(2));
    for (py::ssize_t b = 0; b < a.shape(0); ++b) {
        Grid<std::int32_t> g(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
        std::copy(a.data() + b * plane, a.data() + (b + 1) * plane, g.values().begin());
        out.push_back(std::move(g));
    }
    return out;
}

PyramidPrediction to_pyramid(const std::vector<F64>& maps) {
    PyramidPrediction p;
    for (const auto& m : maps) p.maps.push_back(to_tensor(m));
    return p;
}

py::dict report_dict(const metrics::MetricsReport& r) {
    py::list rows;
    for (const auto& row : r.rows)
        rows.append(py::dict(py::arg("subject") = row.subject, py::arg("image") = row.image_index,
                             py::arg("cls") = row.cls, py::arg("dice") = row.dice, py::arg("iou") = row.iou,
                             py::arg("hausdorff") = row.hausdorff));
    return py::dict(py::arg("rows") = rows, py::arg("mean_foreground_dice") = r.mean_foreground_dice());
}

}  // namespace

PYBIND11_MODULE(_pyag, m) {
    m.doc() = "Pyramid attention-gated UNet for scribble-supervised segmentation";

    static PyObject* error = py::exception<Error>(m, "Error").release().ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def(
        "synthetic_sample",
        [](int size, std::uint64_t seed, double noise_std) {
            datakit::SyntheticSpec spec;
            const double s = size / 64.0;
            spec.height = spec.width = size;
            spec.center_jitter *= s;
            spec.blob_radius = {spec.blob_radius.first * s, spec.blob_radius.second * s};
            spec.ring_thickness = {spec.ring_thickness.first * s, spec.ring_thickness.second * s};
            spec.noise_std = noise_std;
            auto [img, lab] = datakit::generate_synthetic_sample(spec, seed);
            F64 image({img.height, img.width});
            std::copy(img.pixels.begin(), img.pixels.end(), image.mutable_data());
            return py::make_tuple(image, from_grid(lab.classes));
        },
        py::arg("size") = 64, py::arg("seed") = 0, py::arg("noise_std") = 0.05,
        "Ring+blob phantom: (image H×W float64, labels H×W int32; 0 background, 1 annulus, 2 blob).");

    m.def(
        "synthesize_scribbles",
        [](const I32& labels, int num_classes, const std::string& fg_mode, int max_thickness,
           std::optional<int> walk_length, std::uint64_t seed) {
            scribbles::ScribbleConfig cfg;
            if (fg_mode != "skeleton" && fg_mode != "iterated_erosion") throw py::value_error("unknown fg_mode " + fg_mode);
            cfg.fg_mode = fg_mode == "iterated_erosion" ? scribbles::ForegroundMode::IteratedErosion
                                                        : scribbles::ForegroundMode::Skeleton;
            cfg.max_thickness = max_thickness;
            cfg.bg_walk_length = walk_length;
            cfg.seed = seed;
            LabelMap lab{to_grid<std::int32_t>(labels), num_classes};
            return from_grid(scribbles::synthesize_scribbles(lab, cfg).classes);
        },
        py::arg("labels"), py::arg("num_classes"), py::arg("fg_mode") = "skeleton", py::arg("max_thickness") = 2,
        py::arg("walk_length") = py::none(), py::arg("seed") = 0, "Scribble map; unlabeled pixels are -1.");

    m.def(
        "pce_loss", [](const F64& pred, const I32& scribbles) { return losses::pce_loss(to_tensor(pred), to_scribbles(scribbles), {}); },
        py::arg("pred"), py::arg("scribbles"), "Partial cross-entropy over labeled pixels (-1 = unlabeled).");
    m.def(
        "self_consistency_loss",
        [](const std::vector<F64>& maps) {
            const auto sc = losses::self_consistency_loss(to_pyramid(maps), {});
            return py::make_tuple(sc.total, sc.per_depth);
        },
        py::arg("maps"), "Multi-scale consistency against the pooled final map: (total, per-depth).");
    m.def(
        "compactness_loss", [](const F64& pred) { return losses::compactness_loss(to_tensor(pred), {}); }, py::arg("pred"));

    m.def(
        "dice", [](const U8& a, const U8& b) { return metrics::dice(to_grid<std::uint8_t>(a), to_grid<std::uint8_t>(b)); });
    m.def(
        "iou", [](const U8& a, const U8& b) { return metrics::iou(to_grid<std::uint8_t>(a), to_grid<std::uint8_t>(b)); });
    m.def(
        "hausdorff",
        [](const U8& a, const U8& b) { return metrics::hausdorff(to_grid<std::uint8_t>(a), to_grid<std::uint8_t>(b)); },
        "Symmetric Hausdorff distance in pixels; max(H, W) when exactly one mask is empty.");
    m.def(
        "wilcoxon",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const auto r = metrics::wilcoxon_signed_rank(a, b);
            return py::dict(py::arg("p_value") = r.p_value, py::arg("statistic") = r.statistic,
                            py::arg("n") = r.n_used, py::arg("exact") = r.exact);
        },
        py::arg("a"), py::arg("b"), "Two-sided paired signed-rank test.");

    py::class_<UNet>(m, "UNet")
        .def(py::init([](int depth, int base_filters, int classes, bool pyag, std::uint64_t seed) {
                 ModelConfig c;
                 c.depth = depth;
                 c.base_filters = base_filters;
                 c.classes = classes;
                 c.pyag = pyag;
                 c.seed = seed;
                 return UNet(c);
             }),
             py::arg("depth") = 4, py::arg("base_filters") = 8, py::arg("classes") = 3, py::arg("pyag") = true,
             py::arg("seed") = 0)
        .def(
            "forward",
            [](UNet& net, const F64& x, bool train) {
                std::vector<F64> out;
                for (const auto& t : net.forward(to_tensor(x), train).maps) out.push_back(from_tensor(t));
                return out;
            },
            py::arg("x"), py::arg("train") = false, "Softmax maps, full resolution first.")
        .def_property_readonly("num_parameters", [](UNet& net) {
            std::size_t n = 0;
            for (auto* p : net.parameters()) n += p->value.size();
            return n;
        });

    m.def(
        "load_model", [](const std::filesystem::path& ckpt) { return restore_model(load_checkpoint(ckpt)); },
        py::arg("checkpoint"));

    m.def(
        "train",
        [](const std::string& config_text, const std::filesystem::path& out_dir) {
            const TrainConfig cfg = parse_config_text(config_text);
            const auto splits = load_splits(cfg.data, cfg.model.classes);
            TrainConfig run = cfg;
            run.model.classes = splits.num_classes;
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(run, splits.train, splits.val, {out_dir});
            }
            py::list steps;
            for (const auto& s : r.steps)
                steps.append(py::dict(py::arg("step") = s.step, py::arg("pce") = s.loss.pce,
                                      py::arg("regularizer") = s.loss.regularizer_value(),
                                      py::arg("weight_a") = s.loss.weight_a, py::arg("total") = s.loss.total));
            return py::dict(py::arg("best_checkpoint") = r.best_checkpoint.string(),
                            py::arg("last_checkpoint") = r.last_checkpoint.string(),
                            py::arg("best_val_dice") = r.best_val_dice, py::arg("steps") = steps);
        },
        py::arg("config_text"), py::arg("out_dir"), "Train from flat key = value config text (data.dir required).");

    m.def(
        "evaluate",
        [](const std::filesystem::path& ckpt_path, const std::string& split, const std::string& data_dir) {
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            TrainConfig cfg = train_config_from_json(ckpt.train_config);
            if (!data_dir.empty()) cfg.data.dir = data_dir;
            const auto s = load_splits(cfg.data, ckpt.model.classes);
            const auto& part = split == "train" ? s.train : split == "val" ? s.val : s.test;
            if (split != "train" && split != "val" && split != "test") throw py::value_error("split must be train, val or test");
            return report_dict(evaluate(ckpt_path, part));
        },
        py::arg("checkpoint"), py::arg("split") = "test", py::arg("data_dir") = "");
}
