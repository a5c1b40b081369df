#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/bench.hpp"

#include <cstdio>
#include <filesystem>

// Runs the full acceptance suite and prints one verdict line per criterion.
// Tolerances and seeds are pinned inside the suite itself; this binary only
// reports and enforces the outcome.

TEST_CASE("acceptance criteria") {
    const auto dir = std::filesystem::temp_directory_path() / "fblab_acceptance";
    std::filesystem::create_directories(dir);

    const auto result = fblab::bench::run_acceptance(dir.string(), 1);
    REQUIRE(result.criteria.size() == 12);

    for (const auto& c : result.criteria) {
        std::printf("%s %2d %s (%.1fs): %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    c.seconds, c.detail.c_str());
        std::fflush(stdout);
    }
    for (const auto& c : result.criteria) {
        INFO("criterion " << c.id << " " << c.name << ": " << c.detail);
        CHECK(c.pass);
    }
    CHECK(result.all_pass());

    fblab::bench::write_report(result, dir.string());
    CHECK(std::filesystem::exists(dir / "criteria.csv"));
    CHECK(std::filesystem::exists(dir / "bench_report.json"));
}
