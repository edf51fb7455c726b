#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pyag/metrics.hpp"

namespace pyag::report {

/// Box-plot summary; whiskers reach the most extreme values within
/// [q1 − k·IQR, q3 + k·IQR] and everything beyond is an outlier.
struct BoxStats {
    double q1 = 0, median = 0, q3 = 0;
    double whisker_low = 0, whisker_high = 0;
    std::vector<double> outliers;
};

BoxStats box_stats(std::span<const double> values, double whisker_iqr = 2.0);

struct BoxGroup {
    std::string label;
    std::vector<double> values;
};

std::string box_plot_svg(const std::string& title, const std::vector<BoxGroup>& groups);

struct NamedReport {
    std::string name;
    metrics::MetricsReport report;
};

struct PairwiseTest {
    std::string run_a, run_b, metric;
    int cls = -1;  // -1: all foreground classes pooled
    int n = 0;
    double median_a = 0, median_b = 0;
    double p_value = 1;
    bool significant = false;
};

struct Comparison {
    std::vector<std::filesystem::path> figures;
    std::vector<PairwiseTest> tests;
    bool paired = false;
    std::string refusal;  // why pairwise tests were skipped
};

inline constexpr double kSignificance = 0.01;

/// Box plots per metric (SVG), a median/IQR table, and pairwise Wilcoxon tests with a star
/// at p < 0.01. Runs evaluated on different test rows still get plots but no tests.
Comparison compare_runs(const std::vector<NamedReport>& runs, const std::filesystem::path& out_dir);

}  // namespace pyag::report
