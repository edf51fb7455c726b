#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "../support/tempdir.hpp"
#include "pyag/common.hpp"
#include "pyag/metrics.hpp"
#include "pyag/stats.hpp"

using namespace pyag;
using namespace pyag::metrics;

namespace {

Mask with_pixels(int h, int w, std::initializer_list<std::pair<int, int>> px) {
    Mask m(h, w, 0);
    for (auto [y, x] : px) m(y, x) = 1;
    return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("dice and iou hand cases") {
    const Mask a = with_pixels(4, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const Mask b = with_pixels(4, 4, {{0, 0}, {0, 1}, {2, 2}, {3, 3}});
    const Mask c = with_pixels(4, 4, {{3, 0}});
    CHECK(dice(a, a) == 1.0);
    CHECK(iou(a, a) == 1.0);
    CHECK(dice(a, c) == 0.0);
    CHECK(dice(a, b) == 0.5);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
    const Mask empty(4, 4, 0);
    CHECK(dice(empty, empty) == 1.0);
    CHECK(iou(empty, empty) == 1.0);
    CHECK_THROWS_AS(dice(a, Mask(3, 4, 0)), Error);
    CHECK_THROWS_AS(hausdorff(a, Mask(4, 5, 0)), Error);
}

TEST_CASE("hausdorff hand cases and empty-mask convention") {
    const Mask p = with_pixels(8, 8, {{0, 0}});
    const Mask q = with_pixels(8, 8, {{3, 4}});
    CHECK(hausdorff(p, q) == 5.0);
    CHECK(hausdorff(p, p) == 0.0);
    const Mask empty(224, 224, 0);
    Mask full(224, 224, 0);
    full(100, 100) = 1;
    CHECK(hausdorff(empty, full) == 224.0);
    CHECK(hausdorff(full, empty) == 224.0);
    CHECK(hausdorff(empty, empty) == 0.0);
    CHECK(hausdorff(Mask(10, 30, 0), with_pixels(10, 30, {{1, 1}})) == 30.0);
}

TEST_CASE("hausdorff equals brute force and is symmetric on random masks") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> dens(0.0, 0.6);
    for (int t = 0; t < 100; ++t) {
        const Mask a = oracle::random_mask(rng, 16, 16, dens(rng));
        const Mask b = oracle::random_mask(rng, 16, 16, dens(rng));
        const double ref = oracle::hausdorff(a, b);
        CHECK(hausdorff(a, b) == ref);
        CHECK(hausdorff(b, a) == hausdorff(a, b));
        const double d = dice(a, b), j = iou(a, b);
        CHECK(d == doctest::Approx(2 * j / (1 + j)).epsilon(1e-12));
        CHECK(dice(b, a) == d);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
    }
}

TEST_CASE("hausdorff with anisotropic spacing") {
    const Mask p = with_pixels(8, 8, {{0, 0}});
    const Mask q = with_pixels(8, 8, {{3, 4}});
    CHECK(hausdorff(p, q, std::pair{2.0, 0.5}) == doctest::Approx(std::sqrt(36.0 + 4.0)));
}

TEST_CASE("wilcoxon: identical samples and constant shift") {
    std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(wilcoxon_signed_rank(a, a).p_value == 1.0);
    std::vector<double> b = a;
    for (double& v : b) v += 0.5;
    const auto r = wilcoxon_signed_rank(b, a);
    CHECK(r.exact);
    CHECK(r.p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
    CHECK(r.p_value < 0.01);
}

TEST_CASE("wilcoxon matches sign enumeration for n <= 12, ties included") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> nd(5, 12), vd(-4, 4);
    for (int t = 0; t < 60; ++t) {
        const int n = nd(rng);
        std::vector<double> a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = vd(rng) * 0.25;
            b[i] = vd(rng) * 0.25;
        }
        const double ref = oracle::wilcoxon_enumerated(a, b);
        CHECK(std::fabs(wilcoxon_signed_rank(a, b).p_value - ref) < 1e-12);
    }
}

TEST_CASE("wilcoxon: symmetric differences give p near 1; large n uses the normal tail") {
    std::vector<double> a{1, -1, 2, -2, 3, -3, 4, -4}, z(8, 0.0);
    CHECK(wilcoxon_signed_rank(a, z).p_value > 0.9);
    std::vector<double> big(40), zero(40, 0.0);
    for (int i = 0; i < 40; ++i) big[i] = (i % 3 == 0 ? -1.0 : 1.0) * (i + 1);
    const auto r = wilcoxon_signed_rank(big, zero);
    CHECK_FALSE(r.exact);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value < 1.0);
    CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
    CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>(6, 1), std::vector<double>(5, 1)), Error);
}

TEST_CASE("report: perfect, all-background, cardinality, CSV round trip") {
    Grid<std::int32_t> truth(16, 16, 0);
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) truth(y, x) = y < 8 ? 1 : 2;
    std::vector<EvaluationItem> items{{"s0", 0, truth, truth}, {"s1", 0, Grid<std::int32_t>(16, 16, 0), truth}};
    const auto r = build_report(items, 3);
    REQUIRE(r.rows.size() == 4);
    CHECK(r.rows[0].dice == 1.0);
    CHECK(r.rows[0].hausdorff == 0.0);
    CHECK(r.rows[2].dice == 0.0);
    CHECK(r.rows[2].hausdorff == 16.0);
    CHECK(r.mean_foreground_dice() == 0.5);
    CHECK(r.dice.at(-1).median == doctest::Approx(stats::median(std::vector<double>{1, 1, 0, 0})));

    TempDir tmp;
    write_report_csv((tmp.path() / "r.csv").string(), r);
    const auto back = read_report_csv((tmp.path() / "r.csv").string());
    REQUIRE(back.rows.size() == r.rows.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        CHECK(back.rows[i].dice == r.rows[i].dice);
        CHECK(back.rows[i].hausdorff == r.rows[i].hausdorff);
        CHECK(back.row_key(back.rows[i]) == r.row_key(r.rows[i]));
    }
}

TEST_CASE("report over no images is empty") {
    const auto r = build_report(std::vector<EvaluationItem>{}, 3);
    CHECK(r.rows.empty());
}

TEST_CASE("type-7 quantiles") {
    std::vector<double> v{1, 2, 3, 4};
    CHECK(stats::quantile(v, 0.25) == doctest::Approx(1.75));
    CHECK(stats::median(v) == 2.5);
    CHECK(std::isnan(stats::median(std::vector<double>{})));
}

}  // TEST_SUITE
