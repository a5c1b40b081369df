#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fblab/bench.hpp"
#include "fblab/config.hpp"
#include "fblab/core.hpp"
#include "fblab/errors.hpp"
#include "fblab/fbsde.hpp"
#include "fblab/field.hpp"
#include "fblab/hjb.hpp"
#include "fblab/paths.hpp"
#include "fblab/value.hpp"
#include "fblab/verify.hpp"

namespace {

using fblab::config::RunConfig;
using nlohmann::json;

std::vector<double> box_center(const fblab::SpaceTimeGrid& g) {
    std::vector<double> x(static_cast<std::size_t>(g.dim()));
    for (int a = 0; a < g.dim(); ++a)
        x[static_cast<std::size_t>(a)] =
            0.5 * (g.x_min[static_cast<std::size_t>(a)] + g.x_max[static_cast<std::size_t>(a)]);
    return x;
}

const fblab::SpaceTimeGrid& require_grid(const RunConfig& cfg, const char* who) {
    if (!cfg.has_grid)
        throw fblab::ConfigError(std::string(who) + " needs a grid section");
    return cfg.grid;
}

std::vector<double> start_point(const fblab::SpaceTimeGrid& g,
                                const std::vector<double>& configured) {
    if (configured.empty()) return box_center(g);
    if (static_cast<int>(configured.size()) != g.dim())
        throw fblab::ConfigError("start point dimension does not match the grid");
    return configured;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fblab::ConfigError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

json gate_json(const fblab::AssumptionReport& r) {
    json j;
    j["c1"] = r.c1;
    j["Lambda"] = r.Lambda;
    j["L_bar"] = r.L_bar;
    j["Lambda_bar"] = r.Lambda_bar;
    j["L_W"] = r.L_W;
    j["smallness_ok"] = r.smallness_ok;
    j["l3_ok"] = r.l3_ok;
    j["constants_source"] = r.constants_source;
    return j;
}

json grid_json(const fblab::SpaceTimeGrid& g) {
    json j;
    j["t0"] = g.t0;
    j["T"] = g.T;
    j["steps"] = g.steps;
    j["x_min"] = g.x_min;
    j["x_max"] = g.x_max;
    j["x_nodes"] = g.x_nodes;
    return j;
}

int cmd_check(const RunConfig& cfg, const std::string& out) {
    const auto gate = fblab::config::make_gate(cfg);
    const auto& spec = cfg.problem;
    const auto probe =
        fblab::probe_lipschitz(spec, cfg.probe_pairs, cfg.probe_box, cfg.seed);

    json j;
    j["schema"] = 1;
    j["command"] = "check";
    j["problem"] = spec.name;
    j["hash"] = spec.hash;
    j["seed"] = cfg.seed;
    j["assumptions"] = gate_json(gate.report);
    j["lipschitz_probe"] = {
        {"b_x", probe.b_x},         {"b_yz", probe.b_yz},   {"sigma_x", probe.sigma_x},
        {"sigma_y", probe.sigma_y}, {"sigma_z", probe.sigma_z},
        {"g_xyz", probe.g_xyz},     {"phi_x", probe.phi_x},
        {"growth_ratio", probe.growth_ratio},
        {"warnings", probe.warnings},
    };
    if (cfg.has_monotonicity) {
        const auto m =
            fblab::check_monotonicity_sampled(spec, cfg.monotonicity, cfg.probe_pairs,
                                              cfg.probe_box, cfg.seed, cfg.monotonicity_tol);
        j["monotonicity"] = {
            {"ok", m.ok},
            {"worst_violation", m.worst_violation},
            {"violations", m.violations},
            {"probes", m.probes},
            {"certificate_admissible", m.certificate_admissible},
        };
    }
    write_json(out + "/report.json", j);

    std::printf("problem %s: Lambda = %.6g, Lambda_bar = %.6g, smallness %s, L3 conditions %s\n",
                spec.name.c_str(), gate.report.Lambda, gate.report.Lambda_bar,
                gate.report.smallness_ok ? "ok" : "FAIL", gate.report.l3_ok ? "ok" : "FAIL");
    for (const auto& w : probe.warnings) std::printf("probe warning: %s\n", w.c_str());
    std::printf("wrote %s/report.json\n", out.c_str());
    gate.require("check"); // exits with the gate code when refused
    return 0;
}

int cmd_solve_hjb(const RunConfig& cfg, const std::string& out) {
    const auto& grid = require_grid(cfg, "solve-hjb");
    const auto gate = fblab::config::make_gate(cfg);
    fblab::hjb::HjbOptions ho;
    ho.algebra_tol = cfg.algebra_tol;
    ho.algebra_max_iter = cfg.algebra_max_iter;
    ho.check_cfl = cfg.cfl_check;
    const auto field = fblab::hjb::solve_hjb(cfg.problem, gate, grid, ho);
    field.save(out + "/value_hjb");
    const auto rr = fblab::hjb::residual(cfg.problem, field, ho);
    rr.field.save(out + "/residual", "residual");

    const auto x0 = start_point(grid, cfg.x0);
    const double w0 = field.interp(grid.t0, x0, true);
    json j;
    j["schema"] = 1;
    j["command"] = "solve-hjb";
    j["problem"] = cfg.problem.name;
    j["hash"] = cfg.problem.hash;
    j["grid"] = grid_json(grid);
    j["x0"] = x0;
    j["w_at_x0"] = w0;
    j["residual"] = {{"max_abs", rr.max_abs}, {"l2", rr.l2}, {"evaluated", rr.evaluated}};
    j["assumptions"] = gate_json(gate.report);
    write_json(out + "/report.json", j);
    std::printf("W(t0, x0) = %.10g, scheme residual max %.3g\n", w0, rr.max_abs);
    std::printf("wrote %s/value_hjb.csv, residual.csv, report.json\n", out.c_str());
    return 0;
}

int cmd_value_dpp(const RunConfig& cfg, const std::string& out) {
    const auto& grid = require_grid(cfg, "value-dpp");
    const auto gate = fblab::config::make_gate(cfg);
    const auto field = fblab::value::compute_value_dpp(cfg.problem, gate, grid, cfg.dpp);
    field.save(out + "/value_dpp");

    const auto x0 = start_point(grid, cfg.x0);
    const double w0 = field.interp(grid.t0, x0, true);
    json j;
    j["schema"] = 1;
    j["command"] = "value-dpp";
    j["problem"] = cfg.problem.name;
    j["hash"] = cfg.problem.hash;
    j["grid"] = grid_json(grid);
    j["paths_per_slab"] = cfg.dpp.M;
    j["slab_substeps"] = cfg.dpp.slab_substeps;
    j["seed"] = cfg.dpp.seed;
    j["x0"] = x0;
    j["w_at_x0"] = w0;
    j["assumptions"] = gate_json(gate.report);
    write_json(out + "/report.json", j);
    std::printf("W(t0, x0) = %.10g over %d slabs, M = %d\n", w0, grid.steps, cfg.dpp.M);
    std::printf("wrote %s/value_dpp.csv, report.json\n", out.c_str());
    return 0;
}

int cmd_solve_fbsde(const RunConfig& cfg, const std::string& out) {
    const auto& grid = require_grid(cfg, "solve-fbsde");
    const auto gate = fblab::config::make_gate(cfg);
    fblab::SpaceTimeGrid sim = grid;
    sim.steps = cfg.fbsde_steps;
    sim.x_nodes.assign(sim.x_nodes.size(), 2);

    const auto ens = fblab::paths::generate_ensemble(sim, cfg.fbsde_M, cfg.problem.d,
                                                     cfg.seed, true);
    const auto x0 = start_point(grid, cfg.x0);
    const auto sol = fblab::fbsde::solve_fully_coupled(cfg.problem, gate, ens, x0,
                                                       fblab::paths::Policy::constant(0),
                                                       cfg.picard);
    fblab::paths::export_trajectories(out + "/paths.csv", sim, sol.X, &sol.YZ, cfg.problem.d);

    json j;
    j["schema"] = 1;
    j["command"] = "solve-fbsde";
    j["problem"] = cfg.problem.name;
    j["hash"] = cfg.problem.hash;
    j["paths"] = cfg.fbsde_M;
    j["steps"] = cfg.fbsde_steps;
    j["seed"] = cfg.seed;
    j["x0"] = x0;
    j["y0"] = sol.y0;
    j["picard_iters"] = sol.picard_iters;
    j["gap_history"] = sol.gap_history;
    j["assumptions"] = gate_json(gate.report);
    write_json(out + "/report.json", j);
    std::printf("Y(t0) = %.10g after %d sweeps\n", sol.y0, sol.picard_iters);
    std::printf("wrote %s/paths.csv, report.json\n", out.c_str());
    return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& out) {
    const auto gate = fblab::config::make_gate(cfg);
    const auto& spec = cfg.problem;

    fblab::ValueField cand;
    if (!cfg.candidate_path.empty()) {
        cand = fblab::ValueField::load(cfg.candidate_path);
        if (!cand.problem_hash().empty() && !spec.hash.empty() &&
            cand.problem_hash() != spec.hash)
            std::fprintf(stderr,
                         "verify: candidate was produced for a different problem (hash %s)\n",
                         cand.problem_hash().c_str());
    } else {
        cand = fblab::value::compute_value_dpp(spec, gate, require_grid(cfg, "verify"),
                                               cfg.dpp);
    }
    const auto& cg = cand.grid();
    const auto x = start_point(cg, cfg.verify_x);
    const double t = cfg.has_verify_t ? cfg.verify_t : cg.t0;

    json j;
    j["schema"] = 1;
    j["command"] = "verify";
    j["mode"] = cfg.verify_mode;
    j["problem"] = spec.name;
    j["hash"] = spec.hash;

    if (cfg.verify_mode == "pr-um") {
        const auto rep = fblab::verify::pr_um_pipeline(spec, gate, cand, t, x, cfg.pr_um);
        j["rho"] = rep.rho;
        j["rho_stderr"] = rep.rho_stderr;
        j["y_start"] = rep.y_start;
        j["w_start"] = rep.w_start;
        j["slab_gaps"] = rep.slab_gaps;
        j["slabs"] = cfg.pr_um.m;
        std::printf("rho = %.6g (stderr %.2g), y = %.6g vs candidate %.6g\n", rep.rho,
                    rep.rho_stderr, rep.y_start, rep.w_start);
    } else if (cfg.verify_mode == "frozen-sigma") {
        const auto rep = fblab::verify::uniqueness_check_frozen_sigma(spec, gate, cand,
                                                                      cfg.uniqueness);
        j["check"] = rep.check;
        j["verdict"] = rep.verdict;
        j["gap_min"] = rep.gap_min;
        j["gap_max"] = rep.gap_max;
        j["aux_gap"] = rep.aux_gap;
        j["tol"] = rep.tol;
        j["seed"] = rep.seed;
        std::printf("verdict: %s (gaps [%.4g, %.4g], tol %.3g)\n", rep.verdict.c_str(),
                    rep.gap_min, rep.gap_max, rep.tol);
    } else if (cfg.verify_mode == "full") {
        const auto rep = fblab::verify::uniqueness_check_full(spec, gate, cand, cfg.full);
        j["check"] = rep.check;
        j["verdict"] = rep.verdict;
        j["gap_min"] = rep.gap_min;
        j["gap_max"] = rep.gap_max;
        j["aux_gap"] = rep.aux_gap;
        j["grad_inf"] = rep.grad_inf;
        j["z_gap"] = rep.z_gap;
        j["tol"] = rep.tol;
        j["seed"] = rep.seed;
        std::printf("verdict: %s (gaps [%.4g, %.4g], grad %.4g, z gap %.4g)\n",
                    rep.verdict.c_str(), rep.gap_min, rep.gap_max, rep.grad_inf, rep.z_gap);
    } else { // ito
        const auto mf = fblab::verify::mollify(cand, cfg.full.epsilon);
        const auto rep = fblab::verify::ito_residual(spec, gate, mf, t, x,
                                                     fblab::paths::Policy::constant(0), cfg.ito);
        j["epsilon"] = cfg.full.epsilon;
        j["min_residual"] = rep.min_residual;
        j["mean_residual"] = rep.mean_residual;
        j["max_abs_residual"] = rep.max_abs_residual;
        j["terminal_gap"] = rep.terminal_gap;
        j["samples"] = rep.samples;
        j["outside_box"] = rep.outside;
        std::printf("generator residual: min %.4g, mean %.4g, max|.| %.4g, terminal gap %.4g\n",
                    rep.min_residual, rep.mean_residual, rep.max_abs_residual, rep.terminal_gap);
    }
    write_json(out + "/report.json", j);
    std::printf("wrote %s/report.json\n", out.c_str());
    return 0;
}

int cmd_bench(const std::string& out, int threads) {
    const auto res = fblab::bench::run_acceptance(out, threads);
    fblab::bench::write_report(res, out);
    for (const auto& c : res.criteria)
        std::printf("%s %2d %s (%.1fs): %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    c.seconds, c.detail.c_str());
    std::printf("wrote %s/bench_report.json, criteria.csv\n", out.c_str());
    return res.all_pass() ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"value fields for coupled forward-backward systems"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    long long seed_override = -1;
    int threads = 0;

    const auto add_common = [&](CLI::App* sc, bool config_required) {
        auto* o = sc->add_option("--config", config_path, "config JSON path");
        if (config_required) o->required();
        sc->add_option("--out", out_dir, "output directory (default: out)");
        sc->add_option("--seed-override", seed_override, "replace every configured seed");
        sc->add_option("--threads", threads, "worker threads (overrides the config)");
    };

    auto* sc_check = app.add_subcommand("check", "evaluate admission gates and sampling probes");
    auto* sc_hjb = app.add_subcommand("solve-hjb", "backward grid scheme with control scan");
    auto* sc_dpp = app.add_subcommand("value-dpp", "dynamic-programming value field");
    auto* sc_fbsde = app.add_subcommand("solve-fbsde", "coupled path simulation");
    auto* sc_verify = app.add_subcommand("verify", "candidate-field verification");
    auto* sc_bench = app.add_subcommand("bench", "run the acceptance suite");
    for (auto* sc : {sc_check, sc_hjb, sc_dpp, sc_fbsde, sc_verify})
        add_common(sc, true);
    add_common(sc_bench, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 4;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = fblab::config::load_config(config_path);
        if (seed_override >= 0) {
            const auto s = static_cast<std::uint64_t>(seed_override);
            cfg.seed = s;
            cfg.dpp.seed = s;
            cfg.pr_um.seed = s;
            cfg.uniqueness.dpp.seed = s;
            cfg.full.dpp.seed = s;
            cfg.ito.seed = s;
        }
        if (threads > 0) cfg.threads = threads;
        fblab::config::apply_execution_settings(cfg);
        std::filesystem::create_directories(out_dir);

        if (sc_check->parsed()) return cmd_check(cfg, out_dir);
        if (sc_hjb->parsed()) return cmd_solve_hjb(cfg, out_dir);
        if (sc_dpp->parsed()) return cmd_value_dpp(cfg, out_dir);
        if (sc_fbsde->parsed()) return cmd_solve_fbsde(cfg, out_dir);
        if (sc_verify->parsed()) return cmd_verify(cfg, out_dir);
        return cmd_bench(out_dir, cfg.threads);
    } catch (const fblab::GateRefused& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const fblab::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const fblab::SyntaxError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const fblab::UnknownVariable& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const fblab::DimensionError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const fblab::InvalidConstants& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 4;
    } catch (const fblab::Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal: %s\n", e.what());
        return 3;
    }
}
