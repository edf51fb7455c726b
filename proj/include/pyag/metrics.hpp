#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pyag/image.hpp"

namespace pyag::metrics {

// Both masks empty counts as a perfect match (1.0).
double dice(const Mask& pred, const Mask& truth);
double iou(const Mask& pred, const Mask& truth);

/// Symmetric Hausdorff distance between foreground pixel sets, in pixels (or millimetres
/// when `spacing` is given). Exactly one empty mask yields max(H, W); both empty yield 0.
double hausdorff(const Mask& pred, const Mask& truth,
                 std::optional<std::pair<double, double>> spacing = std::nullopt);

// max over a ∈ from of the distance to the nearest pixel of `to` (which must be non-empty).
double directed_hausdorff(const Mask& from, const Mask& to, std::pair<double, double> spacing = {1.0, 1.0});

struct WilcoxonResult {
    double p_value = 1.0;
    double statistic = 0;  // W+ (sum of positive ranks)
    int n_used = 0;        // pairs left after dropping zero differences
    bool exact = false;
};

/// Two-sided paired signed-rank test. Exact null distribution (midranks allowed) for n ≤ 25,
/// tie-corrected normal approximation above. All-zero differences give p = 1 with a warning.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

struct MetricRow {
    std::string subject;
    int image_index = 0;
    int cls = 0;
    double dice = 0, iou = 0, hausdorff = 0;
};

struct Aggregate {
    double median = 0, iqr = 0, mean = 0;
    std::size_t count = 0;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    // Keyed by class index; key -1 holds the aggregate over all foreground classes.
    std::map<int, Aggregate> dice, iou, hausdorff;

    double mean_foreground_dice() const;
    // Rows keyed by (subject, image, class) for pairing runs.
    std::string row_key(const MetricRow& row) const;
};

struct EvaluationItem {
    std::string subject;
    int image_index = 0;
    Grid<std::int32_t> prediction;  // argmax-decoded
    Grid<std::int32_t> truth;
};

/// One row per image and foreground class plus median/IQR aggregates.
MetricsReport build_report(std::span<const EvaluationItem> items, int num_classes);
// Recomputes the per-class and pooled aggregates from `rows`.
void fill_aggregates(MetricsReport& report);

void write_report_csv(const std::string& path, const MetricsReport& report);
MetricsReport read_report_csv(const std::string& path);

}  // namespace pyag::metrics
