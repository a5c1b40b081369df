#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/config.hpp"
#include "fblab/hjb.hpp"

#include <cmath>
#include <vector>

using namespace fblab;

namespace {

Gate open_gate(const ProblemSpec& spec, bool override_gate = false) {
    return Gate{check_standing_assumptions(spec, AssumptionConstants{}), override_gate};
}

SpaceTimeGrid box_grid(int steps, int nodes, double lo = -2.0, double hi = 2.0,
                       double T = 1.0) {
    SpaceTimeGrid g;
    g.t0 = 0.0;
    g.T = T;
    g.steps = steps;
    g.x_min = {lo};
    g.x_max = {hi};
    g.x_nodes = {nodes};
    return g;
}

} // namespace

TEST_CASE("the Hamiltonian assembles drift, trace and the solved volatility row") {
    // sigma = 1 + 0.5 z1 and p = 0.4 give the fixed point V = 0.4 (1 + 0.5 V),
    // so V = 0.5, the effective volatility is 1.25, and with b = y, v = 2,
    // A = 1: H = 0.5 * 1.25^2 * 1 + 0.4 * 2 + 0 = 1.58125.
    ProblemSpec spec;
    const expr::Dims dims{1, 1, 1};
    spec.name = "hand";
    spec.T = 1.0;
    spec.b = {Coefficient(expr::parse("y", dims))};
    spec.sigma = {Coefficient(expr::parse("1 + 0.5*z1", dims))};
    spec.g = Coefficient(expr::parse("0", dims));
    spec.phi = Coefficient(expr::parse("x1", dims));
    spec.L1 = 1.0;
    spec.L2 = 1.0;
    spec.L3 = 0.5;
    spec.controls = ControlSet::single({0.0});
    spec.validate();
    spec.hash = problem_hash(spec);

    const std::vector<double> x{0.3};
    const std::vector<double> p{0.4};
    const std::vector<double> A{1.0};
    const auto parts = hjb::assemble_hamiltonian(spec, 0.2, x, 2.0, p, A, 0);

    CHECK(parts.V[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(parts.trace_term == doctest::Approx(0.78125).epsilon(1e-12));
    CHECK(parts.drift_term == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(parts.running_term == 0.0);
    CHECK(parts.H == doctest::Approx(1.58125).epsilon(1e-12));
}

TEST_CASE("a quadratic terminal makes the scheme exact on the heat problem") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = box_grid(120, 41); // dt = 1/120 < dx^2 = 0.01

    const auto W = hjb::solve_hjb(heat, gate, g);
    double worst = 0.0;
    for (int ti = 0; ti <= g.steps; ++ti) {
        const double t = g.t_at(ti);
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            const double x = g.x_at(0, static_cast<int>(node));
            worst = std::max(worst, std::abs(W.at(ti, node) - (x * x + (1.0 - t))));
        }
    }
    CHECK(worst <= 1e-12);
    CHECK(W.provenance() == "hjb");
}

TEST_CASE("the discrete residual separates the solution from a perturbation") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = box_grid(120, 41);
    auto W = hjb::solve_hjb(heat, gate, g);

    const auto clean = hjb::residual(heat, W);
    CHECK(clean.max_abs <= 1e-10);
    CHECK(clean.evaluated > 0);

    // Adding 0.1 sin(x) feeds 0.5 d^2/dx^2 of it into the generator:
    // the residual picks up about 0.05 sin(x).
    for (int ti = 0; ti <= g.steps; ++ti)
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            const double x = g.x_at(0, static_cast<int>(node));
            W.at(ti, node) += 0.1 * std::sin(x);
        }
    const auto dirty = hjb::residual(heat, W);
    CHECK(dirty.max_abs >= 0.04);
    CHECK(dirty.l2 >= 0.01);
}

TEST_CASE("the parabolic stability bound is enforced unless disabled") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);

    const auto bad = box_grid(50, 41); // dt = 0.02 > dx^2 = 0.01
    CHECK_THROWS_AS(hjb::solve_hjb(heat, gate, bad), CflViolation);

    // Two unstable steps stay finite; the check is the caller's to waive.
    hjb::HjbOptions opt;
    opt.check_cfl = false;
    const auto tiny = box_grid(2, 41, -2.0, 2.0, 0.04);
    const auto W = hjb::solve_hjb(heat, gate, tiny, opt);
    for (double v : W.raw_values()) CHECK(std::isfinite(v));
}

TEST_CASE("control scans record the pointwise minimizer") {
    const auto spec = config::builtin_problem("drift_control");
    const Gate gate = open_gate(spec);
    const auto g = box_grid(8, 9); // dx = 0.5, dt = 0.125 < 0.25

    const auto W = hjb::solve_hjb(spec, gate, g);
    REQUIRE(W.has_argmin());
    // At x = 1.5 the value slopes upward, so the minimizing drift is -1;
    // mirrored at x = -1.5.
    CHECK(W.argmin_at(0, 7)[0] == doctest::Approx(-1.0));
    CHECK(W.argmin_at(0, 1)[0] == doctest::Approx(1.0));

    // The controlled value can never exceed the uncontrolled (u = 0) one.
    const auto heat = config::builtin_problem("heat");
    const auto Wh = hjb::solve_hjb(heat, open_gate(heat), g);
    for (std::size_t node = 0; node < g.space_size(); ++node)
        CHECK(W.at(0, node) <= Wh.at(0, node) + 1e-12);
}

TEST_CASE("a z-coupled diffusion solves through the embedded fixed point") {
    const auto spec = config::builtin_problem("sigma_z");
    const Gate gate = open_gate(spec, true); // outside the smallness regime by design
    const auto g = box_grid(440, 49, -1.2, 1.2, 0.5);

    const auto W = hjb::solve_hjb(spec, gate, g);
    for (double v : W.raw_values()) CHECK(std::isfinite(v));

    // The terminal 0.25 x^2 has gradient at most 0.6 on the box, and the
    // effective volatility 1 + 0.5 V stays near one, so values stay modest.
    const auto est = estimate_regularity(W);
    CHECK(est.lip_x <= 1.5);

    const auto res = hjb::residual(spec, W);
    CHECK(res.max_abs <= 0.5);
}
