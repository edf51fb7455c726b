#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "../support/tempdir.hpp"
#include "pyag/manifest.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome run_cli(const std::string& args) {
    const std::string cmd = std::string("'") + PYAG_CLI_PATH + "' " + args + " 2>/dev/null";
    Outcome o;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) o.out.append(buf, n);
    const int status = pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string tree_hash(const fs::path& dir) {
    // Data files only; manifest.json is left out.
    std::ostringstream all;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        all << fs::relative(f, dir).string() << ' ' << pyag::manifest::git_blob_hash(s.str()) << '\n';
    }
    return pyag::manifest::sha1_hex(all.str());
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("unknown flags are usage errors with exit code 2") {
    CHECK(run_cli("--no-such-flag").code == 2);
    CHECK(run_cli("generate-data --subjects abc").code == 2);
    const auto o = run_cli("--json generate-data --bogus");
    CHECK(o.code == 2);
    CHECK(nlohmann::json::parse(o.out).contains("error"));
}

TEST_CASE("generate-data: cardinality, refusal, forced rerun is bit-identical") {
    TempDir tmp;
    const std::string out = "'" + (tmp.path() / "d").string() + "'";
    REQUIRE(run_cli("generate-data --subjects 20 --size 64 --seed 7 --out " + out).code == 0);
    int subjects = 0;
    for (const auto& e : fs::directory_iterator(tmp.path() / "d")) subjects += e.is_directory();
    CHECK(subjects == 20);
    const auto before = tree_hash(tmp.path() / "d");
    CHECK(run_cli("generate-data --subjects 20 --size 64 --seed 7 --out " + out).code == 1);
    REQUIRE(run_cli("generate-data --subjects 20 --size 64 --seed 7 --force --out " + out).code == 0);
    CHECK(tree_hash(tmp.path() / "d") == before);
}

TEST_CASE("scribbles, train, evaluate, predict and report end to end") {
    TempDir tmp;
    const auto q = [&](const std::string& rel) { return "'" + (tmp.path() / rel).string() + "'"; };
    REQUIRE(run_cli("generate-data --subjects 6 --size 32 --seed 2 --out " + q("d")).code == 0);
    REQUIRE(run_cli("make-scribbles --labels " + q("d") + " --seed 2").code == 0);
    CHECK(fs::exists(tmp.path() / "d" / "scribble_stats.csv"));
    std::ofstream(tmp.path() / "t.cfg") << "max_steps = 2\nval_every = 1\nbatch_size = 2\nmodel.depth = 2\n"
                                           "model.base_filters = 2\ndata.fractions = 0.5, 0.25, 0.25\n";
    const std::string train = "train --config " + q("t.cfg") + " --data " + q("d") + " --seed 1 --out " + q("run");
    REQUIRE(run_cli(train).code == 0);
    CHECK(fs::exists(tmp.path() / "run" / "best.ckpt"));
    const auto log_before = fs::last_write_time(tmp.path() / "run" / "log.csv");
    // Same inputs again: a no-op.
    REQUIRE(run_cli(train).code == 0);
    CHECK(fs::last_write_time(tmp.path() / "run" / "log.csv") == log_before);

    const auto ev = run_cli("--json evaluate --checkpoint " + q("run/best.ckpt") + " --out " + q("ev"));
    REQUIRE(ev.code == 0);
    CHECK(fs::exists(tmp.path() / "ev" / "report.csv"));
    REQUIRE(run_cli("predict --checkpoint " + q("run/best.ckpt") + " --split test --aux --out " + q("pr")).code == 0);
    CHECK_FALSE(fs::is_empty(tmp.path() / "pr"));
    REQUIRE(run_cli("report a=" + q("ev") + " b=" + q("ev") + " --out " + q("rep")).code == 0);
    CHECK(fs::exists(tmp.path() / "rep" / "boxplot_dice.svg"));

    const auto bad = run_cli("--json evaluate --checkpoint " + q("nope.ckpt") + " --out " + q("ev2"));
    CHECK(bad.code == 1);
    CHECK(nlohmann::json::parse(bad.out).contains("error"));
}

}  // TEST_SUITE
