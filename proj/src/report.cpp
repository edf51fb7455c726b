#include "pyag/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pyag/common.hpp"
#include "pyag/stats.hpp"

namespace fs = std::filesystem;

namespace pyag::report {

BoxStats box_stats(std::span<const double> values, double whisker_iqr) {
    BoxStats b;
    if (values.empty()) return b;
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    b.q1 = stats::quantile_sorted(v, 0.25);
    b.median = stats::quantile_sorted(v, 0.5);
    b.q3 = stats::quantile_sorted(v, 0.75);
    const double iqr = b.q3 - b.q1;
    const double lo = b.q1 - whisker_iqr * iqr, hi = b.q3 + whisker_iqr * iqr;
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    for (double x : v) {
        if (x < lo || x > hi) {
            b.outliers.push_back(x);
            continue;
        }
        b.whisker_low = std::min(b.whisker_low, x);
        b.whisker_high = std::max(b.whisker_high, x);
    }
    return b;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string box_plot_svg(const std::string& title, const std::vector<BoxGroup>& groups) {
    const double slot = 90, left = 60, top = 40, plot_h = 260, bottom = 70;
    const double width = left + slot * std::max<std::size_t>(1, groups.size()) + 20;
    const double height = top + plot_h + bottom;
    double lo = 0, hi = 1;
    bool first = true;
    for (const auto& g : groups)
        for (double v : g.values) {
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto ymap = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
    s << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + plot_h) << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        s << "<text x=\"" << num(left - 5) << "\" y=\"" << num(ymap(v) + 4) << "\" text-anchor=\"end\">" << num(v)
          << "</text>\n";
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& g = groups[i];
        const double cx = left + slot * (i + 0.5);
        if (!g.values.empty()) {
            const BoxStats b = box_stats(g.values);
            const double bw = slot * 0.5;
            s << "<line x1=\"" << num(cx) << "\" y1=\"" << num(ymap(b.whisker_low)) << "\" x2=\"" << num(cx)
              << "\" y2=\"" << num(ymap(b.whisker_high)) << "\" stroke=\"black\"/>\n";
            s << "<rect x=\"" << num(cx - bw / 2) << "\" y=\"" << num(ymap(b.q3)) << "\" width=\"" << num(bw)
              << "\" height=\"" << num(std::max(0.5, ymap(b.q1) - ymap(b.q3)))
              << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
            s << "<line x1=\"" << num(cx - bw / 2) << "\" y1=\"" << num(ymap(b.median)) << "\" x2=\""
              << num(cx + bw / 2) << "\" y2=\"" << num(ymap(b.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
            for (double o : b.outliers)
                s << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(ymap(o)) << "\" r=\"2.5\" fill=\"none\" "
                  << "stroke=\"black\"/>\n";
        }
        s << "<text x=\"" << num(cx) << "\" y=\"" << num(top + plot_h + 16) << "\" text-anchor=\"middle\">"
          << escape(g.label) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

namespace {

const std::vector<std::string> kMetrics = {"dice", "iou", "hausdorff"};

double metric_of(const metrics::MetricRow& r, const std::string& m) {
    if (m == "dice") return r.dice;
    if (m == "iou") return r.iou;
    return r.hausdorff;
}

std::set<std::string> keys_of(const metrics::MetricsReport& r) {
    std::set<std::string> k;
    for (const auto& row : r.rows) k.insert(r.row_key(row));
    return k;
}

}  // namespace

Comparison compare_runs(const std::vector<NamedReport>& runs, const fs::path& out_dir) {
    if (runs.empty()) fail(ErrorKind::InvalidArgument, "report needs at least one run");
    fs::create_directories(out_dir);
    Comparison out;

    std::set<int> classes;
    for (const auto& r : runs)
        for (const auto& row : r.report.rows) classes.insert(row.cls);

    std::ofstream table(out_dir / "comparison.csv");
    table << "run,class,metric,median,iqr,mean,n\n";
    for (const auto& metric : kMetrics) {
        std::vector<BoxGroup> groups;
        for (const auto& r : runs)
            for (int c : classes) {
                BoxGroup g{r.name + (classes.size() > 1 ? " c" + std::to_string(c) : ""), {}};
                for (const auto& row : r.report.rows)
                    if (row.cls == c) g.values.push_back(metric_of(row, metric));
                const auto q = stats::quartiles(g.values);
                table << r.name << ',' << c << ',' << metric << ',' << q.median << ',' << q.iqr() << ','
                      << stats::mean(g.values) << ',' << g.values.size() << '\n';
                groups.push_back(std::move(g));
            }
        const fs::path fig = out_dir / ("boxplot_" + metric + ".svg");
        std::ofstream(fig) << box_plot_svg(metric, groups);
        out.figures.push_back(fig);
    }

    nlohmann::json summary;
    summary["runs"] = nlohmann::json::array();
    for (const auto& r : runs) summary["runs"].push_back(r.name);

    if (runs.size() >= 2) {
        const auto reference = keys_of(runs.front().report);
        out.paired = true;
        for (const auto& r : runs)
            if (keys_of(r.report) != reference) {
                out.paired = false;
                out.refusal = "run '" + r.name + "' was evaluated on a different test set than '" + runs.front().name + "'";
                log::warn("report: " + out.refusal + "; pairwise tests skipped");
                break;
            }
    }

    if (out.paired) {
        std::ofstream w(out_dir / "wilcoxon.csv");
        w << "run_a,run_b,metric,class,n,median_a,median_b,p_value,significant\n";
        for (std::size_t i = 0; i < runs.size(); ++i)
            for (std::size_t j = i + 1; j < runs.size(); ++j)
                for (const auto& metric : kMetrics)
                    for (int c : [&] {
                             std::vector<int> cs(classes.begin(), classes.end());
                             cs.push_back(-1);
                             return cs;
                         }()) {
                        std::map<std::string, double> a, b;
                        for (const auto& row : runs[i].report.rows)
                            if (c == -1 || row.cls == c) a[runs[i].report.row_key(row)] = metric_of(row, metric);
                        for (const auto& row : runs[j].report.rows)
                            if (c == -1 || row.cls == c) b[runs[j].report.row_key(row)] = metric_of(row, metric);
                        std::vector<double> va, vb;
                        for (const auto& [k, v] : a) {
                            va.push_back(v);
                            vb.push_back(b.at(k));
                        }
                        PairwiseTest t{runs[i].name, runs[j].name, metric, c, static_cast<int>(va.size())};
                        t.median_a = stats::median(va);
                        t.median_b = stats::median(vb);
                        if (va.size() < 5) {
                            log::warn("report: fewer than 5 paired values for " + metric + "; test skipped");
                            continue;
                        }
                        t.p_value = metrics::wilcoxon_signed_rank(va, vb).p_value;
                        t.significant = t.p_value < kSignificance;
                        w << t.run_a << ',' << t.run_b << ',' << metric << ',' << c << ',' << t.n << ','
                          << t.median_a << ',' << t.median_b << ',' << t.p_value << ',' << (t.significant ? "*" : "")
                          << '\n';
                        out.tests.push_back(t);
                    }
        nlohmann::json tests = nlohmann::json::array();
        for (const auto& t : out.tests)
            tests.push_back({{"run_a", t.run_a}, {"run_b", t.run_b}, {"metric", t.metric}, {"class", t.cls},
                             {"n", t.n}, {"median_a", t.median_a}, {"median_b", t.median_b},
                             {"p_value", t.p_value}, {"significant", t.significant}});
        summary["wilcoxon"] = tests;
    } else if (!out.refusal.empty()) {
        summary["wilcoxon_refused"] = out.refusal;
    }
    summary["significance_level"] = kSignificance;
    std::ofstream(out_dir / "report.json") << summary.dump(2) << '\n';
    return out;
}

}  // namespace pyag::report
