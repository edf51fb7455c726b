#include "pyag/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>

#include <nlohmann/json.hpp>

#include "pyag/common.hpp"
#include "pyag/png_io.hpp"
#include "pyag/rng.hpp"
#include "pyag/stats.hpp"

namespace fs = std::filesystem;

namespace pyag::datakit {

NormalizationMode parse_normalization(const std::string& name) {
    if (name == "median_iqr") return NormalizationMode::MedianIqr;
    if (name == "minmax_sym") return NormalizationMode::MinMaxSymmetric;
    if (name == "minmax_unit") return NormalizationMode::MinMaxUnit;
    fail(ErrorKind::Config, "unknown normalization mode '" + name + "'");
}

std::string to_string(NormalizationMode mode) {
    switch (mode) {
        case NormalizationMode::MedianIqr: return "median_iqr";
        case NormalizationMode::MinMaxSymmetric: return "minmax_sym";
        case NormalizationMode::MinMaxUnit: return "minmax_unit";
    }
    return "median_iqr";
}

namespace {

std::vector<double> pool_pixels(std::span<const Image> subject_images) {
    if (subject_images.empty()) fail(ErrorKind::InvalidArgument, "normalization needs at least one subject image");
    std::vector<double> all;
    for (const auto& img : subject_images) all.insert(all.end(), img.pixels.begin(), img.pixels.end());
    if (all.empty()) fail(ErrorKind::InvalidArgument, "subject images contain no pixels");
    return all;
}

Image affine(const Image& image, double shift, double scale) {
    Image out = image;
    for (double& v : out.pixels) v = (v - shift) / scale;
    return out;
}

}  // namespace

Image normalize_median_iqr(const Image& image, std::span<const Image> subject_images) {
    const auto q = stats::quartiles(pool_pixels(subject_images));
    double iqr = q.iqr();
    if (!(iqr > 0.0)) {
        log::warn("subject '" + image.subject_id + "' has zero interquartile range; dividing by 1");
        iqr = 1.0;
    }
    return affine(image, q.median, iqr);
}

Image normalize_minmax(const Image& image, std::span<const Image> subject_images, bool symmetric) {
    const auto all = pool_pixels(subject_images);
    const auto [lo, hi] = std::minmax_element(all.begin(), all.end());
    double range = *hi - *lo;
    if (!(range > 0.0)) {
        log::warn("subject '" + image.subject_id + "' has constant intensity; dividing by 1");
        range = 1.0;
    }
    Image out = affine(image, *lo, range);  // [0, 1]
    if (symmetric)
        for (double& v : out.pixels) v = 2.0 * v - 1.0;
    return out;
}

Image normalize(const Image& image, std::span<const Image> subject_images, NormalizationMode mode) {
    switch (mode) {
        case NormalizationMode::MedianIqr: return normalize_median_iqr(image, subject_images);
        case NormalizationMode::MinMaxSymmetric: return normalize_minmax(image, subject_images, true);
        case NormalizationMode::MinMaxUnit: return normalize_minmax(image, subject_images, false);
    }
    return image;
}

Image crop_or_pad(const Image& image, int target_h, int target_w, double pad_value) {
    if (target_h < 16 || target_w < 16)
        fail(ErrorKind::InvalidArgument, "crop/pad target must be at least 16x16");
    Image out(target_h, target_w, image.channels, pad_value);
    out.spacing = image.spacing;
    out.subject_id = image.subject_id;
    for (int c = 0; c < image.channels; ++c) {
        Grid<double> plane(image.height, image.width);
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) plane(y, x) = image.at(y, x, c);
        const auto moved = crop_or_pad(plane, target_h, target_w, pad_value);
        for (int y = 0; y < target_h; ++y)
            for (int x = 0; x < target_w; ++x) out.at(y, x, c) = moved(y, x);
    }
    return out;
}

void validate(const SyntheticSpec& spec) {
    auto bad = [](const std::string& why) { fail(ErrorKind::InvalidSpec, "synthetic spec: " + why); };
    if (spec.height < 16 || spec.width < 16) bad("image must be at least 16x16");
    if (spec.num_subjects < 0 || spec.images_per_subject < 1) bad("subject/image counts must be positive");
    if (!(spec.noise_std >= 0.0)) bad("noise_std must be >= 0");
    if (spec.center_jitter < 0) bad("center_jitter must be >= 0");
    if (!(spec.blob_radius.first >= 1.0) || spec.blob_radius.second < spec.blob_radius.first)
        bad("blob radius range invalid");
    if (spec.ring_gap < 0) bad("ring gap must be >= 0");
    if (!(spec.ring_thickness.first >= 2.0) || spec.ring_thickness.second < spec.ring_thickness.first)
        bad("ring thickness range invalid (minimum 2 px keeps the annulus 4-connected)");
    const double outer = spec.blob_radius.second + spec.ring_gap + spec.ring_thickness.second;
    // One-pixel margin so the annulus never touches the border.
    if (outer + spec.center_jitter + 1.0 > std::min(spec.height, spec.width) / 2.0)
        bad("outer radius plus jitter does not fit inside the image");
}

std::pair<Image, LabelMap> generate_synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed) {
    validate(spec);
    Rng rng(seed);
    const double cy = (spec.height - 1) / 2.0 + uniform(rng, -spec.center_jitter, spec.center_jitter);
    const double cx = (spec.width - 1) / 2.0 + uniform(rng, -spec.center_jitter, spec.center_jitter);
    const double r_blob = uniform(rng, spec.blob_radius.first, spec.blob_radius.second);
    const double r_inner = r_blob + spec.ring_gap;
    const double r_outer = r_inner + uniform(rng, spec.ring_thickness.first, spec.ring_thickness.second);

    LabelMap labels{Grid<std::int32_t>(spec.height, spec.width, 0), 3};
    Image image(spec.height, spec.width, 1);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            int k = 0;
            if (d <= r_blob) k = 2;
            else if (d >= r_inner && d <= r_outer) k = 1;
            labels.classes(y, x) = k;
            image.at(y, x) = spec.intensity_levels[k];
        }
    if (spec.noise_std > 0)
        for (double& v : image.pixels) v += spec.noise_std * normal(rng);
    return {std::move(image), std::move(labels)};
}

DatasetSplit split_patients(std::vector<std::string> ids, std::array<double, 3> fractions, std::uint64_t seed) {
    for (double f : fractions)
        if (f < 0) fail(ErrorKind::InvalidArgument, "split fractions must be non-negative");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        fail(ErrorKind::InvalidArgument, "split fractions must sum to 1");
    const int parts = static_cast<int>(std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0; }));
    if (static_cast<int>(ids.size()) < std::max(parts, 3))
        fail(ErrorKind::InvalidArgument, "need at least 3 ids to split, got " + std::to_string(ids.size()));
    {
        auto sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            fail(ErrorKind::InvalidArgument, "duplicate subject ids");
    }

    // Fisher-Yates with the project's own index draw, stable across standard libraries.
    Rng rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);

    const auto n = static_cast<double>(ids.size());
    auto part_size = [&](double f) -> std::size_t {
        if (f <= 0) return 0;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * n)));
    };
    const std::size_t n_val = part_size(fractions[1]);
    const std::size_t n_test = part_size(fractions[2]);
    if (n_val + n_test >= ids.size()) fail(ErrorKind::InvalidArgument, "split leaves no training subjects");

    DatasetSplit split;
    const std::size_t n_train = ids.size() - n_val - n_test;
    split.train_ids.assign(ids.begin(), ids.begin() + n_train);
    split.val_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test_ids.assign(ids.begin() + n_train + n_val, ids.end());
    return split;
}

namespace {

std::optional<std::pair<double, double>> read_spacing(const fs::path& meta) {
    if (!fs::exists(meta)) return std::nullopt;
    std::ifstream in(meta);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::CorruptData, meta.string() + ": " + e.what());
    }
    if (!j.contains("spacing")) return std::nullopt;
    const auto& s = j["spacing"];
    if (!s.is_array() || s.size() != 2) fail(ErrorKind::CorruptData, meta.string() + ": spacing must be [row, col]");
    return std::pair{s[0].get<double>(), s[1].get<double>()};
}

}  // namespace

std::vector<Sample> load_dataset(const fs::path& root, int num_classes) {
    if (!fs::is_directory(root)) fail(ErrorKind::Io, "dataset root " + root.string() + " is not a directory");
    std::vector<fs::path> subjects;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) subjects.push_back(entry.path());
    std::sort(subjects.begin(), subjects.end());

    static const std::regex image_re(R"(image_(\d+)\.png)");
    std::vector<Sample> out;
    for (const auto& dir : subjects) {
        const std::string subject = dir.filename().string();
        const auto spacing = read_spacing(dir / "meta.json");
        std::map<int, fs::path> images;
        for (const auto& entry : fs::directory_iterator(dir)) {
            std::smatch m;
            const std::string name = entry.path().filename().string();
            if (std::regex_match(name, m, image_re)) images[std::stoi(m[1].str())] = entry.path();
        }
        for (const auto& [k, path] : images) {
            Sample s;
            s.subject_id = subject;
            s.index = k;
            s.image = png::read_image(path);
            s.image.subject_id = subject;
            s.image.spacing = spacing;
            const std::string suffix = std::to_string(k) + ".png";
            const fs::path label_path = dir / ("label_" + suffix);
            const fs::path scribble_path = dir / ("scribble_" + suffix);
            if (fs::exists(label_path)) {
                auto classes = png::read_classes(label_path);
                if (!classes.same_shape(s.image.height, s.image.width))
                    fail(ErrorKind::CorruptData, label_path.string() + ": shape does not match " + path.filename().string());
                int max_class = 0;
                for (auto v : classes.values()) {
                    if (v < 0) fail(ErrorKind::CorruptData, label_path.string() + ": label maps may not contain 255");
                    max_class = std::max(max_class, v);
                }
                const int c = num_classes > 0 ? num_classes : max_class + 1;
                if (max_class >= c)
                    fail(ErrorKind::CorruptData, label_path.string() + ": class index exceeds class count");
                s.label = LabelMap{std::move(classes), c};
            }
            if (fs::exists(scribble_path)) {
                auto classes = png::read_classes(scribble_path);
                if (!classes.same_shape(s.image.height, s.image.width))
                    fail(ErrorKind::CorruptData,
                         scribble_path.string() + ": shape does not match " + path.filename().string());
                s.scribble = Scribble{std::move(classes)};
            }
            out.push_back(std::move(s));
        }
    }
    if (num_classes <= 0) {
        // Unify inferred class counts across the dataset.
        int c = 0;
        for (const auto& s : out)
            if (s.label) c = std::max(c, s.label->num_classes);
        for (auto& s : out)
            if (s.label) s.label->num_classes = c;
    }
    return out;
}

void save_sample(const fs::path& root, const Sample& sample) {
    const fs::path dir = root / sample.subject_id;
    fs::create_directories(dir);
    const std::string suffix = std::to_string(sample.index) + ".png";
    png::write_image16(dir / ("image_" + suffix), sample.image);
    if (sample.label) png::write_classes(dir / ("label_" + suffix), sample.label->classes);
    if (sample.scribble) png::write_classes(dir / ("scribble_" + suffix), sample.scribble->classes);
    if (sample.image.spacing) {
        nlohmann::json j;
        j["spacing"] = {sample.image.spacing->first, sample.image.spacing->second};
        std::ofstream(dir / "meta.json") << j.dump(2) << '\n';
    }
}

std::string subject_name(int index) {
    std::string digits = std::to_string(index);
    return "subject_" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

GenerateResult write_synthetic_dataset(const fs::path& root, const SyntheticSpec& spec, std::uint64_t seed) {
    validate(spec);
    GenerateResult result;
    for (int s = 0; s < spec.num_subjects; ++s) {
        const std::string id = subject_name(s);
        for (int k = 0; k < spec.images_per_subject; ++k) {
            auto [image, label] = generate_synthetic_sample(
                spec, derive_seed(seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(k)}));
            image.subject_id = id;
            Sample sample{std::move(image), std::move(label), std::nullopt, id, k};
            save_sample(root, sample);
            ++result.images;
        }
        result.subject_ids.push_back(id);
    }
    return result;
}

}  // namespace pyag::datakit
