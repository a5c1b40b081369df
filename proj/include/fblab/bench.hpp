#pragma once

#include <string>
#include <vector>

namespace fblab::bench {

/// Outcome of one acceptance criterion. `detail` holds the measured numbers
/// and thresholds; it is deterministic across runs (no timings) so the CSV
/// report can be diffed byte for byte.
struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct BenchResult {
    std::vector<CriterionResult> criteria;

    bool all_pass() const {
        for (const auto& c : criteria)
            if (!c.pass) return false;
        return !criteria.empty();
    }
};

/// Runs the full acceptance suite. Artifacts (determinism pipelines, reports)
/// land under out_dir; `threads` is the worker-count setting restored after
/// the determinism criterion has toggled it. Tolerances are pinned inside.
BenchResult run_acceptance(const std::string& out_dir, int threads = 1);

/// Writes <out_dir>/bench_report.json (with timings) and
/// <out_dir>/criteria.csv (timing-free, byte-stable across identical runs).
void write_report(const BenchResult& result, const std::string& out_dir);

} // namespace fblab::bench
