#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "../support/tempdir.hpp"
#include "pyag/manifest.hpp"
#include "pyag/metrics.hpp"
#include "pyag/report.hpp"

using namespace pyag;
using namespace pyag::report;

namespace {

metrics::MetricsReport synthetic_report(int subjects, double dice_offset) {
    metrics::MetricsReport r;
    for (int s = 0; s < subjects; ++s)
        for (int k = 1; k < 3; ++k) {
            metrics::MetricRow row;
            row.subject = "subject_" + std::to_string(s);
            row.image_index = 0;
            row.cls = k;
            row.dice = 0.5 + 0.03 * s + 0.01 * k + dice_offset;
            row.iou = row.dice / (2 - row.dice);
            row.hausdorff = 10.0 - s;
            r.rows.push_back(row);
        }
    metrics::fill_aggregates(r);
    return r;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("box statistics on a hand sample") {
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 100};
    const auto b = box_stats(v);
    CHECK(b.median == 5.0);
    CHECK(b.q1 == 3.0);
    CHECK(b.q3 == 7.0);
    CHECK(b.whisker_low == 1.0);
    CHECK(b.whisker_high == 8.0);
    REQUIRE(b.outliers.size() == 1);
    CHECK(b.outliers[0] == 100.0);
}

TEST_CASE("single run: plots but no tests") {
    TempDir tmp;
    const auto c = compare_runs({{"a", synthetic_report(6, 0)}}, tmp.path());
    CHECK(c.tests.empty());
    CHECK(std::filesystem::exists(tmp.path() / "boxplot_dice.svg"));
    CHECK(std::filesystem::exists(tmp.path() / "comparison.csv"));
}

TEST_CASE("identical runs give p = 1 and no star; a constant shift over 10 pairs is starred") {
    TempDir tmp;
    auto c = compare_runs({{"a", synthetic_report(5, 0)}, {"b", synthetic_report(5, 0)}}, tmp.path() / "same");
    REQUIRE_FALSE(c.tests.empty());
    for (const auto& t : c.tests) {
        CHECK(t.p_value == 1.0);
        CHECK_FALSE(t.significant);
    }
    c = compare_runs({{"a", synthetic_report(5, 0.05)}, {"b", synthetic_report(5, 0)}}, tmp.path() / "shift");
    bool pooled = false;
    for (const auto& t : c.tests)
        if (t.metric == "dice" && t.cls == -1) {
            pooled = true;
            CHECK(t.n == 10);
            CHECK(t.p_value == doctest::Approx(2.0 / 1024.0));
            CHECK(t.significant);
        }
    CHECK(pooled);
    std::ifstream in(tmp.path() / "shift" / "wilcoxon.csv");
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text.find('*') != std::string::npos);
}

TEST_CASE("runs over different test rows are refused pairwise tests") {
    TempDir tmp;
    const auto c = compare_runs({{"a", synthetic_report(6, 0)}, {"b", synthetic_report(5, 0)}}, tmp.path());
    CHECK(c.tests.empty());
    CHECK_FALSE(c.refusal.empty());
}

TEST_CASE("git blob hashes match git") {
    CHECK(manifest::git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(manifest::git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK(manifest::sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST_CASE("input hashes follow content, and manifests round trip") {
    TempDir tmp;
    std::filesystem::create_directories(tmp.path() / "d" / "sub");
    std::ofstream(tmp.path() / "d" / "x.txt") << "x";
    std::ofstream(tmp.path() / "d" / "sub" / "y.txt") << "y";
    const auto h1 = manifest::hash_inputs({tmp.path() / "d"}, "cfg");
    CHECK(h1 == manifest::hash_inputs({tmp.path() / "d"}, "cfg"));
    CHECK(h1 != manifest::hash_inputs({tmp.path() / "d"}, "cfg2"));
    std::ofstream(tmp.path() / "d" / "sub" / "y.txt") << "z";
    CHECK(h1 != manifest::hash_inputs({tmp.path() / "d"}, "cfg"));

    manifest::RunManifest m;
    m.command = "train";
    m.input_hash = h1;
    m.run_id = h1.substr(0, 12);
    m.status = "complete";
    manifest::write(tmp.path() / "m.json", m);
    CHECK(manifest::already_done(tmp.path() / "m.json", "train", h1));
    CHECK_FALSE(manifest::already_done(tmp.path() / "m.json", "train", "other"));
    CHECK_FALSE(manifest::already_done(tmp.path() / "none.json", "train", h1));
}

}  // TEST_SUITE
