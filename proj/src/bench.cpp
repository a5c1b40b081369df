#include "fblab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fblab/algebra.hpp"
#include "fblab/config.hpp"
#include "fblab/core.hpp"
#include "fblab/errors.hpp"
#include "fblab/expr.hpp"
#include "fblab/fbsde.hpp"
#include "fblab/field.hpp"
#include "fblab/hjb.hpp"
#include "fblab/parallel.hpp"
#include "fblab/paths.hpp"
#include "fblab/rng.hpp"
#include "fblab/value.hpp"
#include "fblab/verify.hpp"

namespace fblab::bench {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SpaceTimeGrid grid1d(double t0, double T, int steps, double lo, double hi, int nodes) {
    SpaceTimeGrid g;
    g.t0 = t0;
    g.T = T;
    g.steps = steps;
    g.x_min = {lo};
    g.x_max = {hi};
    g.x_nodes = {nodes};
    return g;
}

Gate gate_for(const ProblemSpec& spec, bool override_gate) {
    return Gate{check_standing_assumptions(spec, AssumptionConstants{}), override_gate};
}

ProblemSpec make_spec(std::string name, int n, int d, double T,
                      const std::vector<std::string>& b, const std::vector<std::string>& sigma,
                      const std::string& g, const std::string& phi, double L1, double L2,
                      double L3, ControlSet controls = ControlSet::single({0.0})) {
    ProblemSpec s;
    s.name = std::move(name);
    s.n = n;
    s.d = d;
    s.k = controls.k;
    s.T = T;
    const expr::Dims dims{n, d, s.k};
    for (const auto& e : b) s.b.emplace_back(expr::parse(e, dims));
    for (const auto& e : sigma) s.sigma.emplace_back(expr::parse(e, dims));
    s.g = Coefficient(expr::parse(g, dims));
    s.phi = Coefficient(expr::parse(phi, dims));
    s.L1 = L1;
    s.L2 = L2;
    s.L3 = L3;
    s.controls = std::move(controls);
    s.validate();
    s.hash = problem_hash(s);
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// 1. Both solver families reproduce the heat value at the box center.
bool c1_heat_value(std::string& detail) {
    const auto spec = config::builtin_problem("heat");
    const Gate gate = gate_for(spec, false);

    auto t0 = std::chrono::steady_clock::now();
    const auto gh = grid1d(0.0, 1.0, 440, -3.0, 3.0, 121);
    const auto fh = hjb::solve_hjb(spec, gate, gh);
    const double hjb_sec = seconds_since(t0);
    const std::size_t center = 60;
    const double xc = gh.x_at(0, 60);
    const double want = xc * xc + 1.0;
    const double err_h = std::abs(fh.at(0, center) - want);

    t0 = std::chrono::steady_clock::now();
    const auto gd = grid1d(0.0, 1.0, 20, -3.0, 3.0, 121);
    value::DppOptions dopt;
    dopt.M = 50000;
    dopt.seed = 20240501;
    const auto fd = value::compute_value_dpp(spec, gate, gd, dopt);
    const double dpp_sec = seconds_since(t0);
    const double err_d = std::abs(fd.at(0, center) - want);

    std::ostringstream d;
    d << "hjb error " << fmt(err_h) << " (tol 1e-2), dpp error " << fmt(err_d)
      << " (tol 5e-2) at the center node";
    const bool in_time = hjb_sec <= 60.0 && dpp_sec <= 60.0;
    if (!in_time) d << "; 60 s budget exceeded";
    detail = d.str();
    return err_h <= 1e-2 && err_d <= 5e-2 && in_time;
}

// 2. Coupled simulation and the grid scheme agree on the burgers problem.
bool c2_burgers_agreement(std::string& detail) {
    const auto spec = config::builtin_problem("burgers");
    const Gate gate = gate_for(spec, true); // outside the smallness regime by design

    auto t0 = std::chrono::steady_clock::now();
    const auto gc = grid1d(0.0, 0.5, 220, -3.0, 3.0, 121);
    const auto gf = grid1d(0.0, 0.5, 880, -3.0, 3.0, 241);
    const auto fc = hjb::solve_hjb(spec, gate, gc);
    const auto ff = hjb::solve_hjb(spec, gate, gf);
    const double hjb_sec = seconds_since(t0);
    const double wc = fc.at(0, 60);
    const double wf = ff.at(0, 120);
    const double wref = 2.0 * wf - wc; // first-order Richardson reference
    const double err_rich = std::abs(wc - wref);

    t0 = std::chrono::steady_clock::now();
    const auto gs = grid1d(0.0, 0.5, 25, -3.0, 3.0, 2);
    const std::vector<double> x0{0.0};
    fbsde::PicardOptions popt;
    popt.tol = 1e-8;
    popt.max_iter = 60;
    const int reps = 8;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto ens = paths::generate_ensemble(gs, 4000, 1, 9100 + r, false);
        const auto sol =
            fbsde::solve_fully_coupled(spec, gate, ens, x0, paths::Policy::constant(0), popt);
        sum += sol.y0;
        sum2 += sol.y0 * sol.y0;
    }
    const double fbsde_sec = seconds_since(t0);
    const double mean = sum / reps;
    const double var = std::max(0.0, sum2 / reps - mean * mean) * reps / (reps - 1.0);
    const double se = std::sqrt(var / reps);
    const double err_y = std::abs(mean - wf);
    const double tol_y = 3.0 * se + 2.0 * gs.dt();

    std::ostringstream d;
    d << "richardson gap " << fmt(err_rich) << " (tol 1e-2), y0 " << fmt(mean) << " vs grid "
      << fmt(wf) << ", gap " << fmt(err_y) << " (tol " << fmt(tol_y) << ")";
    const bool in_time = hjb_sec <= 120.0 && fbsde_sec <= 120.0;
    if (!in_time) d << "; 120 s budget exceeded";
    detail = d.str();
    return err_rich <= 1e-2 && err_y <= tol_y && in_time;
}

// 3. Affine diffusion: the implied volatility argument has a closed form.
bool c3_algebra_closed_form(std::string& detail) {
    rng::Stream st(424242, 17);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double a = -2.0 + 4.0 * st.next_uniform();
        const double c = -0.9 + 1.8 * st.next_uniform();
        double p = 0.0;
        do {
            p = -3.0 + 6.0 * st.next_uniform();
        } while (std::abs(p * c) > 0.8);
        char sig[96];
        std::snprintf(sig, sizeof sig, "%.17g + %.17g*z1", a, c);
        const auto spec =
            make_spec("affine-sigma", 1, 1, 1.0, {"0"}, {sig}, "0", "0", 1.0, 0.0, std::abs(c));
        const std::vector<double> x{0.7}, pv{p}, z0{0.0};
        const auto sol = algebra::solve_algebra(spec, 0.3, x, 0.5, pv, spec.controls.at(0), 0,
                                                z0, 1e-14, 500);
        worst = std::max(worst, std::abs(sol.V[0] - p * a / (1.0 - p * c)));
    }

    bool flagged = false;
    try {
        const auto spec =
            make_spec("noncontractive", 1, 1, 1.0, {"0"}, {"1 + 0.5*z1"}, "0", "0", 1.0, 0.0, 0.5);
        const std::vector<double> x{0.0}, pv{2.5}, z0{0.0};
        algebra::solve_algebra(spec, 0.0, x, 0.0, pv, spec.controls.at(0), 0, z0, 1e-14, 500);
    } catch (const NonContractive&) {
        flagged = true;
    }

    detail = "max closed-form gap " + fmt(worst) + " over 100 draws (tol 1e-12), " +
             "noncontractive case flagged: " + (flagged ? "yes" : "no");
    return worst <= 1e-12 && flagged;
}

// 4. Raising the terminal condition never lowers the simulated value.
bool c4_comparison(std::string& detail) {
    const auto g = grid1d(0.0, 1.0, 20, -3.0, 3.0, 2);
    fbsde::PicardOptions popt;
    popt.tol = 1e-8;
    popt.max_iter = 50;
    const int M = 1000;
    int ok = 0;
    double worst = 1e300;
    for (int i = 0; i < 200; ++i) {
        rng::Stream st(777000 + static_cast<std::uint64_t>(i), 3);
        const double a1 = 0.2 * (2.0 * st.next_uniform() - 1.0);
        const double a2 = 0.2 * (2.0 * st.next_uniform() - 1.0);
        const double s0 = 0.8 + 0.4 * st.next_uniform();
        const double s1 = 0.2 * (2.0 * st.next_uniform() - 1.0);
        const double g0 = 0.5 * (2.0 * st.next_uniform() - 1.0);
        const double q0 = 0.3 + 0.7 * st.next_uniform();
        const double beta = 0.1 + 0.4 * st.next_uniform();
        const double x0v = -0.5 + st.next_uniform();

        char bb[128], sb[128], gb[96], p2[96], p1[192];
        std::snprintf(bb, sizeof bb, "%.17g*x1 + %.17g*y", a1, a2);
        std::snprintf(sb, sizeof sb, "%.17g + %.17g*tanh(y)", s0, s1);
        std::snprintf(gb, sizeof gb, "%.17g*x1", g0);
        std::snprintf(p2, sizeof p2, "%.17g*tanh(x1)", q0);
        std::snprintf(p1, sizeof p1, "%.17g*tanh(x1) + %.17g*(1 + tanh(x1))", q0, beta);

        const auto lower = make_spec("cmp-low", 1, 1, 1.0, {bb}, {sb}, gb, p2, 2.0, 0.2, 0.0);
        const auto upper = make_spec("cmp-high", 1, 1, 1.0, {bb}, {sb}, gb, p1, 2.0, 0.2, 0.0);
        const Gate gate = gate_for(upper, false);
        const auto ens =
            paths::generate_ensemble(g, M, 1, 55000 + static_cast<std::uint64_t>(i), false);
        const std::vector<double> x0{x0v};
        const auto hi =
            fbsde::solve_fully_coupled(upper, gate, ens, x0, paths::Policy::constant(0), popt);
        const auto lo =
            fbsde::solve_fully_coupled(lower, gate, ens, x0, paths::Policy::constant(0), popt);

        const auto yh = hi.YZ.y(0, M);
        const auto yl = lo.YZ.y(0, M);
        double mean = 0.0, mean2 = 0.0;
        for (int pidx = 0; pidx < M; ++pidx) {
            const double dd = yh[static_cast<std::size_t>(pidx)] - yl[static_cast<std::size_t>(pidx)];
            mean += dd;
            mean2 += dd * dd;
        }
        mean /= M;
        const double sd = std::sqrt(std::max(0.0, mean2 / M - mean * mean));
        const double margin = mean + 3.0 * sd / std::sqrt(static_cast<double>(M));
        worst = std::min(worst, margin);
        if (margin >= 0.0) ++ok;
    }
    detail = std::to_string(ok) + "/200 instances dominate (one-sided, 3 stderr), worst margin " +
             fmt(worst);
    return ok == 200;
}

// 5. Picard histories contract on admitted problems; bad ones are flagged.
bool c5_picard(std::string& detail) {
    std::ostringstream d;
    bool all_contract = true;
    for (const char* nm : {"heat", "weak_coupling", "drift_control"}) {
        const auto spec = config::builtin_problem(nm);
        const Gate gate = gate_for(spec, false);
        const auto g = grid1d(0.0, spec.T, 20, -3.0, 3.0, 2);
        fbsde::PicardOptions popt;
        popt.tol = 1e-10;
        popt.max_iter = 50;
        popt.skip_decoupled_iteration = false;
        const auto ens = paths::generate_ensemble(g, 2000, spec.d, 808, false);
        const std::vector<double> x0{0.5};
        const auto sol =
            fbsde::solve_fully_coupled(spec, gate, ens, x0, paths::Policy::constant(0), popt);
        const auto& h = sol.gap_history;
        bool contracts = h.size() >= 2;
        for (std::size_t k = 2; k < h.size(); ++k)
            contracts = contracts && (h[k] < h[k - 1] || h[k] <= 1e-13);
        all_contract = all_contract && contracts;
        d << nm << " sweeps " << h.size() << (contracts ? " ok" : " NOT contracting") << ", ";
    }

    bool refused = false;
    try {
        const auto spec = config::builtin_problem("burgers");
        const Gate gate = gate_for(spec, false);
        const auto g = grid1d(0.0, spec.T, 10, -3.0, 3.0, 2);
        const auto ens = paths::generate_ensemble(g, 200, 1, 5, false);
        const std::vector<double> x0{0.0};
        fbsde::solve_fully_coupled(spec, gate, ens, x0, paths::Policy::constant(0), {});
    } catch (const GateRefused&) {
        refused = true;
    }

    bool diverged = false;
    try {
        const auto spec =
            make_spec("strong-coupling", 1, 1, 1.0, {"3*y"}, {"1"}, "0", "x1", 1.0, 3.0, 0.0);
        const Gate gate = gate_for(spec, true);
        const auto g = grid1d(0.0, 1.0, 20, -3.0, 3.0, 2);
        const auto ens = paths::generate_ensemble(g, 1000, 1, 31337, false);
        const std::vector<double> x0{0.5};
        fbsde::PicardOptions popt;
        popt.tol = 1e-12;
        popt.max_iter = 30;
        fbsde::solve_fully_coupled(spec, gate, ens, x0, paths::Policy::constant(0), popt);
    } catch (const PicardDiverged&) {
        diverged = true;
    } catch (const MaxIterations&) {
        diverged = true;
    }

    d << "refusal " << (refused ? "yes" : "no") << ", divergence flagged "
      << (diverged ? "yes" : "no");
    detail = d.str();
    return all_contract && refused && diverged;
}

// 6. One slab over [0, T] matches the two-slab composition.
bool c6_slab_composition(std::string& detail) {
    const auto spec = config::builtin_problem("heat");
    const Gate gate = gate_for(spec, false);
    value::DppOptions o;
    o.M = 20000;
    o.seed = 606;
    o.slab_substeps = 4;
    const auto f1 = value::compute_value_dpp(spec, gate, grid1d(0.0, 1.0, 1, -3.0, 3.0, 25), o);
    o.slab_substeps = 2;
    const auto f2 = value::compute_value_dpp(spec, gate, grid1d(0.0, 1.0, 2, -3.0, 3.0, 25), o);
    const double w1 = f1.at(0, 12);
    const double w2 = f2.at(0, 12);
    const double rel = std::abs(w1 - w2) / std::max(1.0, std::abs(w2));
    detail = "one slab " + fmt(w1) + ", two slabs " + fmt(w2) + ", relative gap " + fmt(rel) +
             " (tol 5e-2)";
    return rel <= 5e-2;
}

// 7. Regularity estimates recover the known slope and time exponent.
bool c7_regularity(std::string& detail) {
    const auto spec = config::builtin_problem("heat");
    const Gate gate = gate_for(spec, false);
    value::DppOptions o;
    o.M = 50000;
    o.seed = 7007;
    const auto f8 = value::compute_value_dpp(spec, gate, grid1d(0.0, 1.0, 8, -2.0, 2.0, 33), o);
    const auto f16 = value::compute_value_dpp(spec, gate, grid1d(0.0, 1.0, 16, -2.0, 2.0, 33), o);
    const auto r8 = estimate_regularity(f8);
    const auto r16 = estimate_regularity(f16);
    const bool lip_ok = std::abs(r8.lip_x - 4.0) <= 0.8;
    const double ratio = r16.holder_t / r8.holder_t;
    const bool holder_ok = ratio >= 0.5 && ratio <= 2.0;
    detail = "lip_x " + fmt(r8.lip_x) + " (want 4 within 20%), holder ratio under dt halving " +
             fmt(ratio) + " (want [0.5, 2])";
    return lip_ok && holder_ok;
}

// 8. Slab refinement does not hurt the selection pipeline; impostors fail it.
bool c8_selection(std::string& detail) {
    const auto spec = config::builtin_problem("drift_control");
    const Gate gate = gate_for(spec, false);
    // The candidate must be accurate enough that rho measures policy
    // suboptimality rather than candidate bias: clamped linear interpolation
    // overestimates convex fields at every slab composition, so a coarse
    // lattice inflates the candidate and masks the refinement trend.
    const auto g = grid1d(0.0, 1.0, 16, -2.0, 2.0, 129);
    value::DppOptions o;
    o.M = 50000;
    o.seed = 1111;
    const auto W = value::compute_value_dpp(spec, gate, g, o);
    const std::vector<double> x{0.5};

    const int ms[3] = {2, 4, 8};
    double rho[3], se[3];
    for (int j = 0; j < 3; ++j) {
        verify::PrUmOptions po;
        po.m = ms[j];
        po.substeps = 32 / ms[j]; // same 32-step simulation for every m
        po.M = 20000;
        po.selection_M = 4000;
        po.seed = 2222;
        const auto rep = verify::pr_um_pipeline(spec, gate, W, 0.0, x, po);
        rho[j] = rep.rho;
        se[j] = rep.rho_stderr;
    }
    const bool mono = rho[1] <= rho[0] + 2.0 * (se[0] + se[1]) + 1e-6 &&
                      rho[2] <= rho[1] + 2.0 * (se[1] + se[2]) + 1e-6;

    ValueField impostor = W;
    for (auto& v : impostor.raw_values()) v += 1.0;
    verify::PrUmOptions po;
    po.m = 4;
    po.substeps = 8;
    po.M = 8000;
    po.selection_M = 4000;
    po.seed = 2323;
    const auto rep = verify::pr_um_pipeline(spec, gate, impostor, 0.0, x, po);
    const double gap = std::abs(rep.y_start - rep.w_start);

    detail = "rho(m=2,4,8) = " + fmt(rho[0]) + ", " + fmt(rho[1]) + ", " + fmt(rho[2]) +
             " (nonincreasing up to noise), shifted-candidate gap " + fmt(gap) + " (want >= 0.9)";
    return mono && gap >= 0.9;
}

// 9. Uniqueness cross-checks accept the solver's own field, reject shifts.
bool c9_uniqueness(std::string& detail) {
    const auto heat = config::builtin_problem("heat");
    const Gate hg = gate_for(heat, false);
    const auto g = grid1d(0.0, 1.0, 8, -2.0, 2.0, 17);
    value::DppOptions oc;
    oc.M = 10000;
    oc.seed = 99;
    const auto cand = value::compute_value_dpp(heat, hg, g, oc);

    verify::UniquenessOptions uo;
    uo.tol = 5e-2;
    uo.lip_bound = 8.0; // true field slope on this box is 4
    uo.dpp.M = 10000;
    uo.dpp.seed = 1;
    const auto own = verify::uniqueness_check_frozen_sigma(heat, hg, cand, uo);

    ValueField shifted = cand;
    for (auto& v : shifted.raw_values()) v += 0.5;
    const auto imp = verify::uniqueness_check_frozen_sigma(heat, hg, shifted, uo);
    const double imp_gap = std::max(std::abs(imp.gap_min), std::abs(imp.gap_max));

    const auto sz = config::builtin_problem("sigma_z");
    const Gate zg = gate_for(sz, true); // outside the smallness regime by design
    const auto fine = hjb::solve_hjb(sz, zg, grid1d(0.0, 0.5, 440, -1.2, 1.2, 49));
    const auto gc = grid1d(0.0, 0.5, 10, -1.2, 1.2, 25);
    ValueField coarse(gc, "hjb", fine.problem_hash());
    std::vector<double> xs(1);
    for (int ti = 0; ti <= gc.steps; ++ti)
        for (std::size_t nd = 0; nd < gc.space_size(); ++nd) {
            xs[0] = gc.x_at(0, static_cast<int>(nd));
            coarse.at(ti, nd) = fine.interp(gc.t_at(ti), xs, true);
        }
    verify::FullUniquenessOptions fo;
    fo.epsilon = 0.4;
    fo.tol = 5e-2;
    fo.dpp.M = 5000;
    fo.dpp.seed = 5;
    fo.z_paths = 500;
    fo.z_steps = 20;
    const auto full = verify::uniqueness_check_full(sz, zg, coarse, fo);

    detail = "own field: " + own.verdict + " (gap [" + fmt(own.gap_min) + ", " +
             fmt(own.gap_max) + "]), shifted: " + imp.verdict + " (|gap| " + fmt(imp_gap) +
             "), full check on z-coupled problem: " + full.verdict + " (gap_min " +
             fmt(full.gap_min) + ", grad " + fmt(full.grad_inf) + ")";
    return own.verdict == "equal" && imp.verdict == "inconsistent" && imp_gap >= 0.4 &&
           full.verdict == "consistent";
}

// 10. Mollification error of a Lipschitz field is bounded by L * epsilon.
bool c10_mollifier(std::string& detail) {
    const auto g = grid1d(0.0, 0.08, 8, -2.0, 2.0, 321); // dt 0.01, dx 0.0125
    ValueField f(g, "external", "");
    for (int ti = 0; ti <= g.steps; ++ti)
        for (std::size_t nd = 0; nd < g.space_size(); ++nd)
            f.at(ti, nd) = std::abs(g.x_at(0, static_cast<int>(nd)));

    const double eps[3] = {0.2, 0.1, 0.05};
    double sup[3] = {0.0, 0.0, 0.0};
    bool bounded = true;
    for (int j = 0; j < 3; ++j) {
        const auto mf = verify::mollify(f, eps[j]);
        for (int ti = 0; ti <= g.steps; ++ti)
            for (std::size_t nd = 0; nd < g.space_size(); ++nd)
                sup[j] = std::max(sup[j], std::abs(mf.value.at(ti, nd) - f.at(ti, nd)));
        bounded = bounded && sup[j] <= eps[j];
    }
    const double r1 = sup[1] / sup[0];
    const double r2 = sup[2] / sup[1];
    const bool halves = r1 >= 0.4 && r1 <= 0.6 && r2 >= 0.4 && r2 <= 0.6;
    detail = "sup error " + fmt(sup[0]) + " / " + fmt(sup[1]) + " / " + fmt(sup[2]) +
             " at eps 0.2 / 0.1 / 0.05 (bound L*eps), halving ratios " + fmt(r1) + ", " + fmt(r2);
    return bounded && halves;
}

// 11. Parser golden suite round-trips; random input never crashes.
bool c11_parser(std::string& detail) {
    const expr::Dims dims{2, 2, 2};
    const std::vector<double> xv{0.7, -0.4}, zv{0.2, -0.1}, uv{0.6, -0.25};
    const expr::Point pt{0.3, xv, 0.5, zv, uv};

    struct Case {
        const char* src;
        double want;
    };
    const Case cases[] = {
        {"1 + 2*3", 7.0},
        {"(1 + 2)*3", 9.0},
        {"2^3^2", 512.0},
        {"-2^2", -4.0},
        {"2*-3", -6.0},
        {"10 - 4 - 3", 3.0},
        {"20/4/5", 1.0},
        {"1/4", 0.25},
        {"2e-3", 2e-3},
        {"1.5E2", 150.0},
        {".5", 0.5},
        {"t", 0.3},
        {"x1", 0.7},
        {"x2", -0.4},
        {"y", 0.5},
        {"z1", 0.2},
        {"z2", -0.1},
        {"u1", 0.6},
        {"u2", -0.25},
        {"x1 + x2*y", 0.7 + (-0.4) * 0.5},
        {"sin(t)", std::sin(0.3)},
        {"cos(x2)", std::cos(-0.4)},
        {"exp(z1)", std::exp(0.2)},
        {"log(exp(1))", std::log(std::exp(1.0))},
        {"tanh(x1)", std::tanh(0.7)},
        {"abs(x2)", 0.4},
        {"sqrt(4)", 2.0},
        {"min(x1, x2)", -0.4},
        {"max(x1, u2)", 0.7},
        {"x1^2", std::pow(0.7, 2.0)},
        {"  x1  +  y ", 1.2},
        {"tanh(x1 + 2*y) - 0.25*u1", std::tanh(0.7 + 2.0 * 0.5) - 0.25 * 0.6},
        {"min(1, max(-1, x2))", -0.4},
        {"sqrt(x1*x1 + x2*x2)", std::sqrt(0.7 * 0.7 + 0.4 * 0.4)},
        {"(t + x1)*(y - z1)", (0.3 + 0.7) * (0.5 - 0.2)},
        {"abs(-(x1))", 0.7},
    };
    int golden = 0;
    bool ok = true;
    for (const auto& c : cases) {
        const auto e = expr::parse(c.src, dims);
        const double got = e.evaluate(pt);
        const auto e2 = expr::parse(e.print(), dims);
        ok = ok && std::abs(got - c.want) <= 1e-14 * std::max(1.0, std::abs(c.want));
        ok = ok && e2.evaluate(pt) == got && e2 == e;
        ++golden;
    }

    const char* bad[] = {"",          "1 +",   "(1",     "x3",  "z9",     "u0",  "foo(1)",
                         "1 ** 2",    "..",    "x1 x2",  "sin", "sin()",  "1e",  "x0",
                         "min(1)",    "a",     "1 2",    ")",   "x1 + +", "~x1", "max(1,2,3)"};
    for (const char* b : bad) {
        try {
            expr::parse(b, dims);
            ok = false;
        } catch (const Error&) {
        }
    }

    rng::Stream st(0xfeedfaceULL, 9);
    const std::string charset = "0123456789.+-*/^() xyzutabcdefghinlmopqrs_,eE";
    int accepted = 0;
    const int fuzz_total = 100000;
    for (int i = 0; i < fuzz_total; ++i) {
        const int len = static_cast<int>(st.next_uniform() * 257.0);
        std::string s;
        s.reserve(static_cast<std::size_t>(len));
        for (int j = 0; j < len; ++j) {
            if (st.next_uniform() < 0.02)
                s.push_back(static_cast<char>(1 + static_cast<int>(st.next_uniform() * 255.0)));
            else
                s.push_back(charset[static_cast<std::size_t>(st.next_uniform() *
                                                             static_cast<double>(charset.size()))]);
        }
        try {
            const auto e = expr::parse(s, dims);
            (void)e.evaluate(pt);
            ++accepted;
        } catch (const Error&) {
        }
    }

    detail = std::to_string(golden) + " golden cases round-tripped, fuzz parsed " +
             std::to_string(accepted) + "/" + std::to_string(fuzz_total) + " without a crash";
    return ok && golden >= 30;
}

// 12. Identical runs produce byte-identical artifacts, at 1 and 8 workers.
void mini_pipeline(const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto heat = config::builtin_problem("heat");
    const Gate hg = gate_for(heat, false);

    value::DppOptions o;
    o.M = 2000;
    o.seed = 12;
    const auto fd = value::compute_value_dpp(heat, hg, grid1d(0.0, 1.0, 4, -2.0, 2.0, 9), o);
    fd.save(dir + "/value");

    const auto fh = hjb::solve_hjb(heat, hg, grid1d(0.0, 1.0, 30, -2.0, 2.0, 21));
    fh.save(dir + "/hjb");
    const auto rr = hjb::residual(heat, fh);
    rr.field.save(dir + "/residual", "residual");

    const auto wc = config::builtin_problem("weak_coupling");
    const Gate wg = gate_for(wc, false);
    const auto gs = grid1d(0.0, 1.0, 10, -3.0, 3.0, 2);
    const auto ens = paths::generate_ensemble(gs, 500, 1, 99, false);
    const std::vector<double> x0{0.25};
    const auto sol =
        fbsde::solve_fully_coupled(wc, wg, ens, x0, paths::Policy::constant(0), {});
    paths::export_trajectories(dir + "/paths.csv", gs, sol.X, &sol.YZ, wc.d);
}

bool c12_determinism(std::string& detail, const std::string& out_dir, int restore_threads) {
    const std::string base = out_dir + "/determinism";
    set_thread_count(1);
    mini_pipeline(base + "/a");
    set_thread_count(1);
    mini_pipeline(base + "/b");
    set_thread_count(8);
    mini_pipeline(base + "/c");
    set_thread_count(restore_threads);

    const char* names[] = {"value.csv",    "value.json",    "hjb.csv",  "hjb.json",
                           "residual.csv", "residual.json", "paths.csv"};
    std::ostringstream d;
    bool ok = true;
    for (const char* nm : names) {
        const auto a = slurp(base + "/a/" + nm);
        const auto b = slurp(base + "/b/" + nm);
        const auto c = slurp(base + "/c/" + nm);
        const bool same = !a.empty() && a == b && a == c;
        ok = ok && same;
        if (!same) d << nm << " differs, ";
    }
    if (ok) d << "7 artifacts byte-identical across a repeat run and threads 1 vs 8";
    detail = d.str();
    return ok;
}

CriterionResult run_one(int id, const char* name, const std::function<bool(std::string&)>& body) {
    CriterionResult r;
    r.id = id;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        std::string detail;
        r.pass = body(detail);
        r.detail = detail;
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = seconds_since(t0);
    return r;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

BenchResult run_acceptance(const std::string& out_dir, int threads) {
    std::filesystem::create_directories(out_dir);
    BenchResult res;
    res.criteria.push_back(run_one(1, "heat value, both solver families", c1_heat_value));
    res.criteria.push_back(run_one(2, "burgers cross-solver agreement", c2_burgers_agreement));
    res.criteria.push_back(run_one(3, "algebra closed form and contraction guard",
                                   c3_algebra_closed_form));
    res.criteria.push_back(run_one(4, "terminal comparison principle", c4_comparison));
    res.criteria.push_back(run_one(5, "picard contraction and failure modes", c5_picard));
    res.criteria.push_back(run_one(6, "slab composition consistency", c6_slab_composition));
    res.criteria.push_back(run_one(7, "regularity estimates", c7_regularity));
    res.criteria.push_back(run_one(8, "control selection pipeline", c8_selection));
    res.criteria.push_back(run_one(9, "uniqueness cross-checks", c9_uniqueness));
    res.criteria.push_back(run_one(10, "mollifier error bound", c10_mollifier));
    res.criteria.push_back(run_one(11, "parser golden suite and fuzzing", c11_parser));
    res.criteria.push_back(run_one(12, "deterministic artifacts", [&](std::string& d) {
        return c12_determinism(d, out_dir, threads);
    }));
    return res;
}

void write_report(const BenchResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    std::ofstream csv(out_dir + "/criteria.csv", std::ios::binary);
    csv << "id,name,pass,detail\n";
    for (const auto& c : result.criteria)
        csv << c.id << ',' << csv_quote(c.name) << ',' << (c.pass ? 1 : 0) << ','
            << csv_quote(c.detail) << '\n';

    nlohmann::json j;
    j["schema"] = 1;
    j["all_pass"] = result.all_pass();
    auto arr = nlohmann::json::array();
    for (const auto& c : result.criteria) {
        nlohmann::json e;
        e["id"] = c.id;
        e["name"] = c.name;
        e["pass"] = c.pass;
        e["seconds"] = c.seconds;
        e["detail"] = c.detail;
        arr.push_back(e);
    }
    j["criteria"] = arr;
    std::ofstream js(out_dir + "/bench_report.json", std::ios::binary);
    js << j.dump(2) << '\n';
}

} // namespace fblab::bench
