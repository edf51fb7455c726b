#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pyag/image.hpp"

namespace pyag::datakit {

enum class NormalizationMode { MedianIqr, MinMaxSymmetric, MinMaxUnit };

NormalizationMode parse_normalization(const std::string& name);
std::string to_string(NormalizationMode mode);

/// Subtracts the median and divides by the interquartile range, both computed over every
/// pixel of every image in `subject_images`. A zero IQR divides by 1 and logs a warning.
Image normalize_median_iqr(const Image& image, std::span<const Image> subject_images);

// Subject-level min/max scaling to [-1, 1] or [0, 1]; a flat subject maps to the lower bound.
Image normalize_minmax(const Image& image, std::span<const Image> subject_images, bool symmetric);

Image normalize(const Image& image, std::span<const Image> subject_images, NormalizationMode mode);

// Centered crop when larger, symmetric pad when smaller; the odd pixel goes bottom/right.
Image crop_or_pad(const Image& image, int target_h, int target_w, double pad_value);

template <class T>
Grid<T> crop_or_pad(const Grid<T>& grid, int target_h, int target_w, T pad_value) {
    Grid<T> out(target_h, target_w, pad_value);
    // Positive offset crops, negative pads; truncating division keeps the odd pixel bottom/right.
    const int oy = (grid.h() - target_h) / 2;
    const int ox = (grid.w() - target_w) / 2;
    for (int y = 0; y < target_h; ++y)
        for (int x = 0; x < target_w; ++x)
            if (grid.inside(y + oy, x + ox)) out(y, x) = grid(y + oy, x + ox);
    return out;
}

/// Ring+blob phantom parameters. Radii are in pixels.
struct SyntheticSpec {
    int height = 64;
    int width = 64;
    int num_subjects = 20;
    int images_per_subject = 1;
    double center_jitter = 4.0;
    std::pair<double, double> blob_radius{6.0, 10.0};
    // Inner radius offset from the blob radius (0 = annulus touches the blob).
    double ring_gap = 0.0;
    std::pair<double, double> ring_thickness{4.0, 7.0};
    double noise_std = 0.05;
    std::array<double, 3> intensity_levels{0.45, 0.2, 0.85};  // background, annulus, blob
};

void validate(const SyntheticSpec& spec);

struct Sample {
    Image image;
    std::optional<LabelMap> label;
    std::optional<Scribble> scribble;
    std::string subject_id;
    int index = 0;
};

/// Deterministic in (spec, seed). Throws InvalidSpec when the geometry cannot fit.
std::pair<Image, LabelMap> generate_synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed);

struct DatasetSplit {
    std::vector<std::string> train_ids, val_ids, test_ids;
};

/// Seeded shuffle, then val/test take round(fraction·n) (at least one each when the
/// fraction is positive) and train takes the remainder.
DatasetSplit split_patients(std::vector<std::string> ids, std::array<double, 3> fractions, std::uint64_t seed);

/// Reads `<root>/<subject>/image_<k>.png` with optional `label_<k>.png`, `scribble_<k>.png`
/// and `meta.json`. Results are ordered by subject id then k.
std::vector<Sample> load_dataset(const std::filesystem::path& root, int num_classes = 0);

void save_sample(const std::filesystem::path& root, const Sample& sample);

struct GenerateResult {
    std::vector<std::string> subject_ids;
    std::size_t images = 0;
};

// Writes a full synthetic dataset in the folder layout above.
GenerateResult write_synthetic_dataset(const std::filesystem::path& root, const SyntheticSpec& spec,
                                       std::uint64_t seed);

std::string subject_name(int index);

}  // namespace pyag::datakit
