#include "pyag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pyag/common.hpp"
#include "pyag/stats.hpp"

namespace pyag::metrics {
namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* who) {
    if (!a.same_shape(b))
        fail(ErrorKind::ShapeMismatch, std::string(who) + ": mask shapes differ (" + std::to_string(a.h()) + "x" +
                                           std::to_string(a.w()) + " vs " + std::to_string(b.h()) + "x" +
                                           std::to_string(b.w()) + ")");
}

struct Counts {
    std::size_t a = 0, b = 0, both = 0;
};

Counts count(const Mask& a, const Mask& b) {
    Counts c;
    for (std::size_t i = 0; i < a.size(); ++i) {
        c.a += a[i] != 0;
        c.b += b[i] != 0;
        c.both += a[i] && b[i];
    }
    return c;
}

bool empty(const Mask& m) {
    return std::none_of(m.values().begin(), m.values().end(), [](auto v) { return v != 0; });
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas w·(q − v)² + f(v) over the finite sites of f.
void envelope_1d(const std::vector<double>& f, double weight, std::vector<double>& out) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v;
    std::vector<double> z;
    v.reserve(n);
    z.reserve(n + 1);
    for (int q = 0; q < n; ++q) {
        if (!std::isfinite(f[q])) continue;
        while (!v.empty()) {
            const int p = v.back();
            const double s = ((f[q] + weight * q * q) - (f[p] + weight * p * p)) / (2.0 * weight * (q - p));
            if (s <= z.back()) {
                v.pop_back();
                z.pop_back();
            } else {
                z.push_back(s);
                break;
            }
        }
        if (v.empty()) z.assign(1, -kInf);
        v.push_back(q);
    }
    out.assign(n, kInf);
    if (v.empty()) return;
    z.push_back(kInf);
    std::size_t k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        out[q] = weight * dq * dq + f[v[k]];
    }
}

// Squared (weighted) Euclidean distance from every pixel to the nearest set pixel of `to`.
std::vector<double> squared_distance_transform(const Mask& to, std::pair<double, double> spacing) {
    const int H = to.h(), W = to.w();
    const double wy = spacing.first * spacing.first, wx = spacing.second * spacing.second;
    std::vector<double> grid(static_cast<std::size_t>(H) * W);
    std::vector<double> f, out;
    f.resize(H);
    for (int x = 0; x < W; ++x) {
        for (int y = 0; y < H; ++y) f[y] = to(y, x) ? 0.0 : kInf;
        envelope_1d(f, wy, out);
        for (int y = 0; y < H; ++y) grid[static_cast<std::size_t>(y) * W + x] = out[y];
    }
    f.resize(W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) f[x] = grid[static_cast<std::size_t>(y) * W + x];
        envelope_1d(f, wx, out);
        for (int x = 0; x < W; ++x) grid[static_cast<std::size_t>(y) * W + x] = out[x];
    }
    return grid;
}

}  // namespace

double dice(const Mask& pred, const Mask& truth) {
    require_same_shape(pred, truth, "dice");
    const Counts c = count(pred, truth);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double iou(const Mask& pred, const Mask& truth) {
    require_same_shape(pred, truth, "iou");
    const Counts c = count(pred, truth);
    const std::size_t uni = c.a + c.b - c.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.both) / static_cast<double>(uni);
}

double directed_hausdorff(const Mask& from, const Mask& to, std::pair<double, double> spacing) {
    require_same_shape(from, to, "hausdorff");
    if (empty(to)) fail(ErrorKind::InvalidArgument, "directed Hausdorff target set is empty");
    const auto dist2 = squared_distance_transform(to, spacing);
    double worst = 0;
    for (std::size_t i = 0; i < from.size(); ++i)
        if (from[i]) worst = std::max(worst, dist2[i]);
    return std::sqrt(worst);
}

double hausdorff(const Mask& pred, const Mask& truth, std::optional<std::pair<double, double>> spacing) {
    require_same_shape(pred, truth, "hausdorff");
    const bool ep = empty(pred), et = empty(truth);
    if (ep && et) return 0.0;
    if (ep || et) {
        const double dim = std::max(pred.h(), pred.w());
        if (!spacing) return dim;
        return std::max(pred.h() * spacing->first, pred.w() * spacing->second);
    }
    const auto s = spacing.value_or(std::pair{1.0, 1.0});
    return std::max(directed_hausdorff(pred, truth, s), directed_hausdorff(truth, pred, s));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(ErrorKind::InvalidArgument, "wilcoxon: samples must be paired (equal length)");
    if (a.size() < 5) fail(ErrorKind::InvalidArgument, "wilcoxon: need at least 5 pairs");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);

    WilcoxonResult r;
    r.n_used = static_cast<int>(d.size());
    if (d.empty()) {
        log::warn("wilcoxon: all paired differences are zero; p = 1");
        r.exact = true;
        return r;
    }
    const int n = r.n_used;

    // Doubled midranks of |d| stay integral.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<long> rank2(n);
    double tie_term = 0;
    for (int i = 0; i < n;) {
        int j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const long doubled = (i + 1) + (j + 1);  // 2 × average of ranks i+1..j+1
        for (int k = i; k <= j; ++k) rank2[order[k]] = doubled;
        const double t = j - i + 1;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    long w2 = 0, total2 = 0;
    for (int i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (d[i] > 0) w2 += rank2[i];
    }
    r.statistic = w2 / 2.0;

    if (n <= 25) {
        r.exact = true;
        // Number of sign assignments reaching each doubled positive-rank sum.
        std::vector<double> ways(total2 + 1, 0.0);
        ways[0] = 1.0;
        long reach = 0;
        for (int i = 0; i < n; ++i) {
            reach += rank2[i];
            for (long s = reach; s >= rank2[i]; --s) ways[s] += ways[s - rank2[i]];
        }
        const double all = std::ldexp(1.0, n);
        double lower = 0, upper = 0;
        for (long s = 0; s <= total2; ++s) {
            if (s <= w2) lower += ways[s];
            if (s >= w2) upper += ways[s];
        }
        r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
        return r;
    }
    const double mean = n * (n + 1) / 4.0;
    const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
    if (!(var > 0)) return r;
    const double z = (r.statistic - mean) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    return r;
}

double MetricsReport::mean_foreground_dice() const {
    if (rows.empty()) return 0.0;
    double s = 0;
    for (const auto& r : rows) s += r.dice;
    return s / static_cast<double>(rows.size());
}

std::string MetricsReport::row_key(const MetricRow& row) const {
    return row.subject + "#" + std::to_string(row.image_index) + "#" + std::to_string(row.cls);
}

namespace {

Aggregate aggregate(const std::vector<double>& v) {
    Aggregate a;
    a.count = v.size();
    if (v.empty()) return a;
    const auto q = stats::quartiles(v);
    a.median = q.median;
    a.iqr = q.iqr();
    a.mean = stats::mean(v);
    return a;
}

}  // namespace

void fill_aggregates(MetricsReport& report) {
    std::map<int, std::vector<double>> d, j, h;
    for (const auto& r : report.rows)
        for (int key : {r.cls, -1}) {
            d[key].push_back(r.dice);
            j[key].push_back(r.iou);
            h[key].push_back(r.hausdorff);
        }
    report.dice.clear();
    report.iou.clear();
    report.hausdorff.clear();
    for (auto& [k, v] : d) report.dice[k] = aggregate(v);
    for (auto& [k, v] : j) report.iou[k] = aggregate(v);
    for (auto& [k, v] : h) report.hausdorff[k] = aggregate(v);
}

MetricsReport build_report(std::span<const EvaluationItem> items, int num_classes) {
    MetricsReport report;
    if (items.empty()) {
        log::warn("metrics report over an empty set of images");
        return report;
    }
    for (const auto& item : items) {
        if (!item.prediction.same_shape(item.truth))
            fail(ErrorKind::ShapeMismatch, "prediction and truth differ in shape for " + item.subject);
        for (int k = 1; k < num_classes; ++k) {
            const Mask p = class_mask(item.prediction, k);
            const Mask t = class_mask(item.truth, k);
            report.rows.push_back({item.subject, item.image_index, k, dice(p, t), iou(p, t), hausdorff(p, t)});
        }
    }
    fill_aggregates(report);
    return report;
}

void write_report_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path);
    out << "subject,image,class,dice,iou,hausdorff\n";
    char buf[128];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", r.dice, r.iou, r.hausdorff);
        out << r.subject << ',' << r.image_index << ',' << r.cls << ',' << buf << '\n';
    }
}

MetricsReport read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read " + path);
    MetricsReport report;
    std::string line;
    std::getline(in, line);
    if (line.rfind("subject,image,class,dice,iou,hausdorff", 0) != 0)
        fail(ErrorKind::CorruptData, path + ": unexpected report header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string f[6];
        for (auto& field : f)
            if (!std::getline(ss, field, ',')) fail(ErrorKind::CorruptData, path + ": short row '" + line + "'");
        try {
            report.rows.push_back({f[0], std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]),
                                   std::stod(f[5])});
        } catch (const std::exception&) {
            fail(ErrorKind::CorruptData, path + ": malformed row '" + line + "'");
        }
    }
    fill_aggregates(report);
    return report;
}

}  // namespace pyag::metrics
