#pragma once
// Brute-force reference implementations. Deliberately naive and written without reusing any
// library routine they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "pyag/image.hpp"
#include "pyag/tensor.hpp"

namespace oracle {

using pyag::Grid;
using pyag::Mask;
using pyag::Tensor;

inline constexpr std::int32_t kUnlabeled = -1;

// Random per-pixel simplex map, strictly positive.
inline Tensor random_simplex(std::mt19937_64& rng, int n, int c, int h, int w) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Tensor t(n, c, h, w);
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int k = 0; k < c; ++k) s += (t(b, k, y, x) = u(rng));
                for (int k = 0; k < c; ++k) t(b, k, y, x) /= s;
            }
    return t;
}

inline Grid<std::int32_t> random_scribble(std::mt19937_64& rng, int h, int w, int c, double labeled_prob) {
    std::bernoulli_distribution lab(labeled_prob);
    std::uniform_int_distribution<int> cls(0, c - 1);
    Grid<std::int32_t> g(h, w, kUnlabeled);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (lab(rng)) g(y, x) = cls(rng);
    return g;
}

inline double pce(const Tensor& pred, const std::vector<Grid<std::int32_t>>& s, double eps) {
    double total = 0;
    long count = 0;
    for (int b = 0; b < pred.n(); ++b)
        for (int y = 0; y < pred.h(); ++y)
            for (int x = 0; x < pred.w(); ++x) {
                if (s[b](y, x) == kUnlabeled) continue;
                // one-hot target, full sum over classes
                for (int k = 0; k < pred.c(); ++k) {
                    const double t = s[b](y, x) == k ? 1.0 : 0.0;
                    total += -t * std::log(pred(b, k, y, x) + eps);
                }
                ++count;
            }
    return count ? total / count : 0.0;
}

// Target for one low-resolution pixel: mean of the full-resolution block, renormalized.
inline std::vector<double> pooled_target(const Tensor& full, int b, int d, int y, int x) {
    const int f = 1 << d;
    std::vector<double> t(full.c(), 0.0);
    for (int k = 0; k < full.c(); ++k) {
        for (int i = 0; i < f; ++i)
            for (int j = 0; j < f; ++j) t[k] += full(b, k, y * f + i, x * f + j);
        t[k] /= f * f;
    }
    double s = 0;
    for (double v : t) s += v;
    for (double& v : t) v /= s;
    return t;
}

inline double self_consistency(const std::vector<Tensor>& maps, double eps, std::vector<double>* per_depth = nullptr) {
    double total = 0;
    for (std::size_t d = 1; d < maps.size(); ++d) {
        const Tensor& m = maps[d];
        double sum = 0;
        for (int b = 0; b < m.n(); ++b)
            for (int y = 0; y < m.h(); ++y)
                for (int x = 0; x < m.w(); ++x) {
                    const auto t = pooled_target(maps[0], b, static_cast<int>(d), y, x);
                    for (int k = 0; k < m.c(); ++k) sum -= t[k] * std::log(m(b, k, y, x) + eps);
                }
        const double v = sum / (static_cast<double>(m.n()) * m.h() * m.w());
        if (per_depth) per_depth->push_back(v);
        total += v;
    }
    return total;
}

// Cross-entropy of `maps[d]` (d ≥ 1) against fixed targets; used for finite differences.
inline double self_against(const std::vector<Tensor>& maps, const std::vector<Tensor>& targets, double eps) {
    double total = 0;
    for (std::size_t d = 1; d < maps.size(); ++d) {
        const Tensor& m = maps[d];
        double sum = 0;
        for (std::size_t i = 0; i < m.size(); ++i) sum -= targets[d].data()[i] * std::log(m.data()[i] + eps);
        total += sum / (static_cast<double>(m.n()) * m.h() * m.w());
    }
    return total;
}

inline double compactness(const Tensor& pred, double eps) {
    double total = 0;
    for (int b = 0; b < pred.n(); ++b) {
        double P = 0, A = eps;
        for (int y = 0; y < pred.h(); ++y)
            for (int x = 0; x < pred.w(); ++x) {
                const double v = 1.0 - pred(b, 0, y, x);
                A += v;
                if (y + 1 < pred.h()) P += std::fabs((1.0 - pred(b, 0, y + 1, x)) - v);
                if (x + 1 < pred.w()) P += std::fabs((1.0 - pred(b, 0, y, x + 1)) - v);
            }
        total += P * P / (4.0 * M_PI * A);
    }
    return total / pred.n();
}

inline Mask random_mask(std::mt19937_64& rng, int h, int w, double p) {
    std::bernoulli_distribution on(p);
    Mask m(h, w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m(y, x) = on(rng) ? 1 : 0;
    return m;
}

inline double hausdorff(const Mask& a, const Mask& b) {
    std::vector<std::pair<int, int>> pa, pb;
    for (int y = 0; y < a.h(); ++y)
        for (int x = 0; x < a.w(); ++x) {
            if (a(y, x)) pa.emplace_back(y, x);
            if (b(y, x)) pb.emplace_back(y, x);
        }
    if (pa.empty() && pb.empty()) return 0.0;
    if (pa.empty() || pb.empty()) return std::max(a.h(), a.w());
    auto directed = [](const auto& from, const auto& to) {
        long worst = 0;
        for (auto [y0, x0] : from) {
            long best = std::numeric_limits<long>::max();
            for (auto [y1, x1] : to) {
                const long dy = y0 - y1, dx = x0 - x1;
                best = std::min(best, dy * dy + dx * dx);
            }
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::sqrt(static_cast<double>(std::max(directed(pa, pb), directed(pb, pa))));
}

// Two-sided signed-rank p-value by enumerating all 2^n sign patterns of the observed
// |differences| (zeros dropped, midranks for ties).
inline double wilcoxon_enumerated(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    const int n = static_cast<int>(d.size());
    if (n == 0) return 1.0;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return std::fabs(d[i]) < std::fabs(d[j]); });
    std::vector<int> rank2(n);  // doubled midranks stay integral
    for (int i = 0; i < n;) {
        int j = i;
        while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
        for (int k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;
        i = j + 1;
    }
    long observed = 0;
    for (int i = 0; i < n; ++i)
        if (d[i] > 0) observed += rank2[i];
    long le = 0, ge = 0;
    const long total = 1L << n;
    for (long mask = 0; mask < total; ++mask) {
        long w = 0;
        for (int i = 0; i < n; ++i)
            if (mask >> i & 1) w += rank2[i];
        if (w <= observed) ++le;
        if (w >= observed) ++ge;
    }
    const double p = 2.0 * static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
    return std::min(1.0, p);
}

// Reference 4-cross erosion; outside pixels are background.
inline Mask erode(const Mask& m) {
    Mask out(m.h(), m.w(), 0);
    auto at = [&](int y, int x) { return m.inside(y, x) && m(y, x); };
    for (int y = 0; y < m.h(); ++y)
        for (int x = 0; x < m.w(); ++x)
            out(y, x) = at(y, x) && at(y - 1, x) && at(y + 1, x) && at(y, x - 1) && at(y, x + 1);
    return out;
}

inline std::size_t count(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.values()) n += v != 0;
    return n;
}

// 4-connected component count of the pixels equal to `value`.
inline int components(const Grid<std::int32_t>& g, std::int32_t value) {
    Grid<int> seen(g.h(), g.w(), 0);
    int comps = 0;
    for (int y = 0; y < g.h(); ++y)
        for (int x = 0; x < g.w(); ++x) {
            if (g(y, x) != value || seen(y, x)) continue;
            ++comps;
            std::vector<std::pair<int, int>> stack{{y, x}};
            seen(y, x) = 1;
            while (!stack.empty()) {
                auto [cy, cx] = stack.back();
                stack.pop_back();
                const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int ny = cy + dy[k], nx = cx + dx[k];
                    if (g.inside(ny, nx) && !seen(ny, nx) && g(ny, nx) == value) {
                        seen(ny, nx) = 1;
                        stack.emplace_back(ny, nx);
                    }
                }
            }
        }
    return comps;
}

// True when no 4-path of pixels outside `barrier` classes connects an `inner` pixel to the
// grid border.
inline bool enclosed(const Grid<std::int32_t>& g, std::int32_t inner, std::int32_t ring) {
    Grid<int> seen(g.h(), g.w(), 0);
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < g.h(); ++y)
        for (int x = 0; x < g.w(); ++x)
            if ((y == 0 || x == 0 || y == g.h() - 1 || x == g.w() - 1) && g(y, x) != ring) {
                seen(y, x) = 1;
                stack.emplace_back(y, x);
            }
    while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        if (g(cy, cx) == inner) return false;
        const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int ny = cy + dy[k], nx = cx + dx[k];
            if (g.inside(ny, nx) && !seen(ny, nx) && g(ny, nx) != ring) {
                seen(ny, nx) = 1;
                stack.emplace_back(ny, nx);
            }
        }
    }
    return true;
}

}  // namespace oracle
