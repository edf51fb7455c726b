#pragma once

#include <span>
#include <vector>

namespace pyag::stats {

// Linear-interpolation quantile (the "type 7" estimator). q in [0, 1]. Empty input returns NaN.
double quantile(std::span<const double> values, double q);
double quantile_sorted(std::span<const double> sorted, double q);

double median(std::span<const double> values);

struct Quartiles {
    double q1 = 0, median = 0, q3 = 0;
    double iqr() const { return q3 - q1; }
};
Quartiles quartiles(std::span<const double> values);

double mean(std::span<const double> values);

}  // namespace pyag::stats
