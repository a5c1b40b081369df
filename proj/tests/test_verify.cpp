#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/config.hpp"
#include "fblab/verify.hpp"

#include <cmath>
#include <vector>

using namespace fblab;

namespace {

Gate open_gate(const ProblemSpec& spec, bool override_gate = false) {
    return Gate{check_standing_assumptions(spec, AssumptionConstants{}), override_gate};
}

SpaceTimeGrid box_grid(int steps, int nodes, double lo, double hi, double T) {
    SpaceTimeGrid g;
    g.t0 = 0.0;
    g.T = T;
    g.steps = steps;
    g.x_min = {lo};
    g.x_max = {hi};
    g.x_nodes = {nodes};
    return g;
}

ValueField sampled(const SpaceTimeGrid& g, double (*f)(double, double)) {
    ValueField field(g, "external", "");
    for (int ti = 0; ti <= g.steps; ++ti) {
        const double t = g.t_at(ti);
        for (std::size_t node = 0; node < g.space_size(); ++node)
            field.at(ti, node) = f(t, g.x_at(0, static_cast<int>(node)));
    }
    return field;
}

// Analytic heat bundle W = x^2 + (T - t) with exact derivatives, plus an
// optional time bump a (T - t)^2 whose generator residual is -2a (T - t).
verify::SmoothField heat_bundle(const SpaceTimeGrid& g, double bump) {
    verify::SmoothField s;
    s.value = ValueField(g, "external", "");
    s.time_derivative = ValueField(g, "external", "");
    s.gradient = {ValueField(g, "external", "")};
    s.hessian = {ValueField(g, "external", "")};
    for (int ti = 0; ti <= g.steps; ++ti) {
        const double tau = g.T - g.t_at(ti);
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            const double x = g.x_at(0, static_cast<int>(node));
            s.value.at(ti, node) = x * x + tau + bump * tau * tau;
            s.time_derivative.at(ti, node) = -1.0 - 2.0 * bump * tau;
            s.gradient[0].at(ti, node) = 2.0 * x;
            s.hessian[0].at(ti, node) = 2.0;
        }
    }
    return s;
}

} // namespace

TEST_CASE("mollification reproduces constants and linear ramps exactly") {
    const auto g = box_grid(10, 81, -2.0, 2.0, 0.5);

    auto constant = sampled(g, [](double, double) { return 3.0; });
    const auto mc = verify::mollify(constant, 0.2);
    CHECK(mc.epsilon == 0.2);
    for (int ti = 0; ti <= g.steps; ++ti)
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            CHECK(mc.value.at(ti, node) == doctest::Approx(3.0).epsilon(1e-13));
            CHECK(std::abs(mc.time_derivative.at(ti, node)) <= 1e-12);
            CHECK(std::abs(mc.gradient[0].at(ti, node)) <= 1e-12);
            CHECK(std::abs(mc.hessian[0].at(ti, node)) <= 1e-10);
        }

    // Exactness holds where the bump support stays inside the grid; the
    // clamped extension legitimately flattens a ramp near the edges.
    auto ramp = sampled(g, [](double t, double x) { return 2.0 * x + 0.5 * t; });
    const auto mr = verify::mollify(ramp, 0.2);
    for (int ti = 0; ti <= g.steps; ++ti) {
        const double t = g.t_at(ti);
        if (t < 0.2 - 1e-12 || t > g.T - 0.2 + 1e-12) continue;
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            const double x = g.x_at(0, static_cast<int>(node));
            if (std::abs(x) > 1.5) continue;
            CHECK(mr.value.at(ti, node) ==
                  doctest::Approx(2.0 * x + 0.5 * t).epsilon(1e-12));
            CHECK(mr.gradient[0].at(ti, node) == doctest::Approx(2.0).epsilon(1e-10));
            CHECK(mr.time_derivative.at(ti, node) == doctest::Approx(0.5).epsilon(1e-10));
        }
    }
}

TEST_CASE("mollifying a kink keeps the Lipschitz error bound and the gradient cap") {
    const auto g = box_grid(8, 81, -2.0, 2.0, 0.08);
    const auto f = sampled(g, [](double, double x) { return std::abs(x); });

    const auto m = verify::mollify(f, 0.2);
    double sup = 0.0;
    for (int ti = 0; ti <= g.steps; ++ti)
        for (std::size_t node = 0; node < g.space_size(); ++node)
            sup = std::max(sup, std::abs(m.value.at(ti, node) -
                                         std::abs(g.x_at(0, static_cast<int>(node)))));
    CHECK(sup <= 0.2);       // L eps with L = 1
    CHECK(sup >= 1e-3);      // and the kink really was smoothed
    CHECK(m.gradient_norm_inf() <= 1.0 + 1e-9);
}

TEST_CASE("a grid coarser than the bump support is refused") {
    const auto g = box_grid(8, 81, -2.0, 2.0, 0.08); // dx = 0.05
    const auto f = sampled(g, [](double, double x) { return x; });
    CHECK_THROWS_AS(verify::mollify(f, 0.1), ResolutionError); // eps/4 = 0.025 < dx
    CHECK_NOTHROW(verify::mollify(f, 0.2));                    // eps/4 = dx exactly
}

TEST_CASE("the pathwise generator residual vanishes on the exact bundle") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = box_grid(20, 41, -2.0, 2.0, 1.0);

    verify::ItoOptions opt;
    opt.M = 300;
    opt.steps = 16;
    opt.seed = 4;

    const std::vector<double> x{0.5};
    const auto exact = heat_bundle(g, 0.0);
    const auto rep = verify::ito_residual(heat, gate, exact, 0.0, x, paths::Policy::constant(0), opt);
    CHECK(rep.samples > 0);
    CHECK(rep.max_abs_residual <= 1e-10);
    CHECK(rep.terminal_gap <= 0.01); // node interpolation of x^2 at path endpoints
}

TEST_CASE("the pathwise generator residual flags a perturbed bundle") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = box_grid(20, 41, -2.0, 2.0, 1.0);

    verify::ItoOptions opt;
    opt.M = 300;
    opt.steps = 16;
    opt.seed = 4;

    const std::vector<double> x{0.5};
    const auto bent = heat_bundle(g, 0.3);
    const auto rep = verify::ito_residual(heat, gate, bent, 0.0, x, paths::Policy::constant(0), opt);
    // Residual is -0.6 (T - t) <= 0 along the paths.
    CHECK(rep.max_abs_residual >= 0.3);
    CHECK(rep.min_residual <= -0.3);
    CHECK(rep.mean_residual <= -0.1);
}

TEST_CASE("the frozen-coefficient comparison accepts the solver's own field") {
    const auto spec = config::builtin_problem("weak_coupling");
    const Gate gate = open_gate(spec);
    const auto g = box_grid(5, 13, -3.0, 3.0, 1.0);

    value::DppOptions dpp;
    dpp.M = 8000;
    dpp.seed = 31;
    const auto cand = value::compute_value_dpp(spec, gate, g, dpp);

    verify::UniquenessOptions opt;
    opt.tol = 5e-2;
    opt.lip_bound = 8.0;
    opt.dpp = dpp; // same seed: common random numbers against the re-solve

    const auto own = verify::uniqueness_check_frozen_sigma(spec, gate, cand, opt);
    CHECK(own.check == "frozen_sigma");
    CHECK(own.verdict == "equal");
    CHECK(own.gap_min >= -opt.tol);
    CHECK(own.gap_max <= opt.tol);

    ValueField shifted = cand;
    for (double& v : shifted.raw_values()) v += 0.5;
    const auto imp = verify::uniqueness_check_frozen_sigma(spec, gate, shifted, opt);
    CHECK(imp.verdict == "inconsistent");
    CHECK(imp.gap_max >= 0.4);
}

TEST_CASE("controlled problems are checked one-sidedly") {
    const auto spec = config::builtin_problem("drift_control");
    const Gate gate = open_gate(spec);
    const auto g = box_grid(5, 17, -2.0, 2.0, 1.0);

    value::DppOptions dpp;
    dpp.M = 6000;
    dpp.seed = 13;
    const auto cand = value::compute_value_dpp(spec, gate, g, dpp);

    verify::UniquenessOptions opt;
    opt.tol = 5e-2;
    opt.lip_bound = 8.0;
    opt.dpp = dpp;
    const auto rep = verify::uniqueness_check_frozen_sigma(spec, gate, cand, opt);
    CHECK(rep.verdict == "consistent");
    CHECK(rep.gap_min >= -opt.tol);
}

TEST_CASE("a candidate breaking the declared Lipschitz bound is rejected up front") {
    const auto spec = config::builtin_problem("weak_coupling");
    const Gate gate = open_gate(spec);
    const auto g = box_grid(5, 13, -3.0, 3.0, 1.0);
    const auto steep = sampled(g, [](double, double x) { return 20.0 * std::abs(x); });

    verify::UniquenessOptions opt;
    opt.lip_bound = 8.0;
    CHECK_THROWS_AS(verify::uniqueness_check_frozen_sigma(spec, gate, steep, opt),
                    NotLipschitz);
}

TEST_CASE("the fully coupled check runs the mollified algebra pipeline") {
    const auto spec = config::builtin_problem("sigma_z");
    const Gate gate = open_gate(spec, true); // outside the smallness regime by design
    const auto g = box_grid(6, 25, -1.2, 1.2, 0.5);

    value::DppOptions dpp;
    dpp.M = 2000;
    dpp.seed = 5;
    const auto cand = value::compute_value_dpp(spec, gate, g, dpp);

    verify::FullUniquenessOptions opt;
    opt.epsilon = 0.4;
    opt.tol = 0.1;
    opt.dpp = dpp;
    opt.z_paths = 200;
    opt.z_steps = 10;
    const auto rep = verify::uniqueness_check_full(spec, gate, cand, opt);
    CHECK(rep.check == "full");
    CHECK((rep.verdict == "consistent" || rep.verdict == "inconsistent"));
    CHECK(rep.grad_inf > 0.0);
    CHECK(rep.grad_inf * spec.L3 < 1.0);
    CHECK(rep.z_gap >= 0.0);

    // A field too steep for the contraction condition |DW| L3 < 1 is refused.
    const auto steep = sampled(g, [](double, double x) { return 3.0 * x; });
    CHECK_THROWS_AS(verify::uniqueness_check_full(spec, gate, steep, opt), GradientTooLarge);
}

TEST_CASE("the selection pipeline scores the candidate it is given") {
    const auto spec = config::builtin_problem("drift_control");
    const Gate gate = open_gate(spec);
    const auto g = box_grid(4, 17, -2.0, 2.0, 1.0);

    value::DppOptions dpp;
    dpp.M = 4000;
    dpp.seed = 11;
    const auto cand = value::compute_value_dpp(spec, gate, g, dpp);

    verify::PrUmOptions opt;
    opt.m = 2;
    opt.substeps = 4;
    opt.M = 2000;
    opt.selection_M = 500;
    opt.seed = 21;

    const std::vector<double> x{0.5};
    const auto rep = verify::pr_um_pipeline(spec, gate, cand, 0.0, x, opt);
    CHECK(rep.rho >= 0.0);
    CHECK(rep.rho_stderr > 0.0);
    CHECK(rep.slab_gaps.size() == 3);
    CHECK(std::isfinite(rep.y_start));
    CHECK(rep.w_start == doctest::Approx(cand.interp(0.0, x)).epsilon(1e-12));

    ValueField impostor = cand;
    for (double& v : impostor.raw_values()) v += 1.0;
    const auto bad = verify::pr_um_pipeline(spec, gate, impostor, 0.0, x, opt);
    CHECK(bad.rho > rep.rho + 0.5);
}
