#pragma once

#include "fblab/verify.hpp"

// Run configuration: one JSON document holding the problem, the grid, the
// well-posedness constants and every solver tolerance, so an experiment is
// fully described by (config, seed).

namespace fblab::config {

struct RunConfig {
    ProblemSpec problem;
    AssumptionConstants constants;
    bool allow_gate_override = false;

    bool has_grid = false;
    SpaceTimeGrid grid;

    std::uint64_t seed = 1;
    int threads = 1;
    std::string simd = "auto"; // auto | scalar | avx2

    // algebra
    double algebra_tol = algebra::kDefaultTol;
    int algebra_max_iter = algebra::kDefaultMaxIter;

    // paths + fbsde
    fbsde::PicardOptions picard;
    int fbsde_M = 10000;
    int fbsde_steps = 50;
    std::vector<double> x0; // defaults to the box center when empty

    // hjb
    bool cfl_check = true;

    // value
    value::DppOptions dpp;

    // probing
    long probe_pairs = 10000;
    double probe_box = 1.0;
    double monotonicity_tol = 1e-10;
    bool has_monotonicity = false;
    MonotonicityConfig monotonicity;

    // verify
    std::string verify_mode = "frozen-sigma"; // pr-um | frozen-sigma | full | ito
    std::string candidate_path;               // CSV+JSON base; empty = compute a fresh field
    double verify_t = 0.0;
    bool has_verify_t = false;
    std::vector<double> verify_x; // defaults to the box center when empty
    verify::PrUmOptions pr_um;
    verify::UniquenessOptions uniqueness;
    verify::FullUniquenessOptions full;
    verify::ItoOptions ito;
};

/// Parse a config document. Unknown keys, malformed values, bad expressions
/// and inconsistent shapes all throw ConfigError (or the expression module's
/// parse errors, which the CLI also maps to the config exit code).
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// Built-in problem registry: "heat", "burgers", "drift_control",
/// "weak_coupling", "sigma_z".
ProblemSpec builtin_problem(const std::string& name);
std::vector<std::string> builtin_names();

/// The gate for a loaded config: standing assumptions evaluated with the
/// config's constants, override flag carried over.
Gate make_gate(const RunConfig& cfg);

/// Apply cfg.threads and cfg.simd to the process-wide execution settings.
void apply_execution_settings(const RunConfig& cfg);

} // namespace fblab::config
