#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/config.hpp"
#include "fblab/fbsde.hpp"

#include <cmath>
#include <vector>

using namespace fblab;

namespace {

Gate open_gate(const ProblemSpec& spec, bool override_gate = false) {
    return Gate{check_standing_assumptions(spec, AssumptionConstants{}), override_gate};
}

SpaceTimeGrid time_axis(int steps, double T = 1.0) {
    SpaceTimeGrid g;
    g.t0 = 0.0;
    g.T = T;
    g.steps = steps;
    g.x_min = {-3.0};
    g.x_max = {3.0};
    g.x_nodes = {2};
    return g;
}

} // namespace

TEST_CASE("decoupled problems converge in one sweep, and the literal recheck is exact") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = time_axis(10);
    const auto e = paths::generate_ensemble(g, 20000, 1, 21, true);
    const std::vector<double> x0{0.5};

    auto sol = fbsde::solve_fully_coupled(heat, gate, e, x0, paths::Policy::constant(0));
    CHECK(sol.y0 == doctest::Approx(0.5 * 0.5 + 1.0).epsilon(0.02));
    CHECK(sol.picard_iters <= 2);

    // Forcing the second sweep must reproduce the first bit for bit: the
    // forward coefficients never read the feeds, so the gap is exactly zero.
    fbsde::PicardOptions opt;
    opt.skip_decoupled_iteration = false;
    auto literal = fbsde::solve_with_terminal(
        heat, gate, e, x0, paths::Policy::constant(0),
        [&](const paths::StateTrajectories& X, std::span<double> out) {
            const auto xT = X.x(g.steps, 0);
            for (std::size_t p = 0; p < out.size(); ++p) out[p] = xT[p] * xT[p];
        },
        opt);
    REQUIRE(literal.gap_history.size() >= 2);
    CHECK(literal.gap_history[1] == 0.0);
    CHECK(literal.y0 == doctest::Approx(sol.y0).epsilon(1e-12));
}

TEST_CASE("a coupled drift iterates to a fixed point with shrinking gaps") {
    const auto spec = config::builtin_problem("weak_coupling");
    const Gate gate = open_gate(spec);
    const auto g = time_axis(12);
    const auto e = paths::generate_ensemble(g, 8000, 1, 3, true);
    const std::vector<double> x0{0.5};

    fbsde::PicardOptions opt;
    opt.tol = 1e-9;
    const auto sol = fbsde::solve_fully_coupled(spec, gate, e, x0, paths::Policy::constant(0), opt);

    CHECK(sol.picard_iters >= 2);
    REQUIRE(sol.gap_history.size() >= 2);
    for (std::size_t i = 2; i < sol.gap_history.size(); ++i) {
        INFO("sweep " << i);
        CHECK((sol.gap_history[i] < sol.gap_history[i - 1] || sol.gap_history[i] <= 1e-13));
    }
    CHECK(std::isfinite(sol.y0));
    // The y-feedback is weak (L2 = 0.1), so y0 stays near the uncoupled value.
    CHECK(sol.y0 == doctest::Approx(1.25).epsilon(0.15));
}

TEST_CASE("the slab semigroup reproduces the heat value") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const double delta = 0.25;
    const auto slab = time_axis(4, delta);
    const auto e = paths::generate_ensemble(slab, 50000, 1, 17, true);
    const std::vector<double> x0{0.5};

    // psi(x) = x^2 + (T - delta) turns the slab value into W(0, x0) = x0^2 + T.
    const double offset = 1.0 - delta;
    const double got = fbsde::backward_semigroup(
        heat, gate, e, x0, paths::Policy::constant(0),
        [&](std::span<const double> x) { return x[0] * x[0] + offset; });
    CHECK(got == doctest::Approx(0.5 * 0.5 + 1.0).epsilon(0.01));
}

TEST_CASE("an arbitrary terminal functional propagates through the backward pass") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = time_axis(8);
    const auto e = paths::generate_ensemble(g, 20000, 1, 29, true);
    const std::vector<double> x0{0.5};

    // Indicator terminal: y0 estimates P(X_T > 0) = Phi(0.5).
    const auto sol = fbsde::solve_with_terminal(
        heat, gate, e, x0, paths::Policy::constant(0),
        [&](const paths::StateTrajectories& X, std::span<double> out) {
            const auto xT = X.x(g.steps, 0);
            for (std::size_t p = 0; p < out.size(); ++p) out[p] = xT[p] > 0.0 ? 1.0 : 0.0;
        });
    CHECK(sol.y0 == doctest::Approx(0.6914624612740131).epsilon(0.02));
}

TEST_CASE("failing standing assumptions refuse service unless overridden") {
    const auto burgers = config::builtin_problem("burgers");
    const Gate gate = open_gate(burgers); // Lambda = 10 on this problem
    const auto g = time_axis(4, 0.5);
    const auto e = paths::generate_ensemble(g, 200, 1, 1, false);
    const std::vector<double> x0{0.0};
    CHECK_THROWS_AS(fbsde::solve_fully_coupled(burgers, gate, e, x0, paths::Policy::constant(0)),
                    GateRefused);

    const Gate forced = open_gate(burgers, true);
    CHECK_NOTHROW(fbsde::solve_fully_coupled(burgers, forced, e, x0, paths::Policy::constant(0)));
}

TEST_CASE("a strongly coupled drift is flagged instead of silently looping") {
    ProblemSpec spec;
    const expr::Dims dims{1, 1, 1};
    spec.name = "runaway";
    spec.T = 1.0;
    spec.b = {Coefficient(expr::parse("3*y", dims))};
    spec.sigma = {Coefficient(expr::parse("1", dims))};
    spec.g = Coefficient(expr::parse("0", dims));
    spec.phi = Coefficient(expr::parse("x1^2", dims));
    spec.L1 = 1.0;
    spec.L2 = 3.0;
    spec.controls = ControlSet::single({0.0});
    spec.validate();
    spec.hash = problem_hash(spec);

    const Gate forced = open_gate(spec, true);
    const auto g = time_axis(8);
    const auto e = paths::generate_ensemble(g, 500, 1, 31337, false);
    const std::vector<double> x0{0.5};

    fbsde::PicardOptions opt;
    opt.tol = 1e-12;
    opt.max_iter = 30;
    try {
        (void)fbsde::solve_fully_coupled(spec, forced, e, x0, paths::Policy::constant(0), opt);
        FAIL("expected divergence or iteration exhaustion");
    } catch (const Error& err) {
        CHECK(err.module_name() == "fbsde");
    }
}
