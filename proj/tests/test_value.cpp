#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/config.hpp"
#include "fblab/value.hpp"

#include <cmath>
#include <filesystem>
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

TEST_CASE("backward induction reproduces the heat value on a coarse grid") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = box_grid(4, 9);

    value::DppOptions opt;
    opt.M = 20000;
    opt.seed = 3;
    const auto W = value::compute_value_dpp(heat, gate, g, opt);

    // Terminal slice is phi sampled exactly at the nodes.
    for (std::size_t node = 0; node < g.space_size(); ++node) {
        const double x = g.x_at(0, static_cast<int>(node));
        CHECK(W.at(4, node) == x * x);
    }

    // Center node at t = 0: W(0, 0) = 0^2 + 1.
    CHECK(W.at(0, 4) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(W.provenance() == "dpp");
    CHECK(W.problem_hash() == heat.hash);
}

TEST_CASE("adding a constant to the terminal shifts the whole field by it") {
    const auto heat = config::builtin_problem("heat");
    auto shifted_spec = heat;
    const expr::Dims dims{1, 1, 1};
    shifted_spec.phi = Coefficient(expr::parse("x1^2 + 3", dims));
    shifted_spec.hash = problem_hash(shifted_spec);

    const auto g = box_grid(4, 9);
    value::DppOptions opt;
    opt.M = 4000;
    opt.seed = 77;

    const auto W = value::compute_value_dpp(heat, open_gate(heat), g, opt);
    const auto Ws = value::compute_value_dpp(shifted_spec, open_gate(shifted_spec), g, opt);

    double worst = 0.0;
    for (int ti = 0; ti <= g.steps; ++ti)
        for (std::size_t node = 0; node < g.space_size(); ++node)
            worst = std::max(worst, std::abs(Ws.at(ti, node) - W.at(ti, node) - 3.0));
    CHECK(worst <= 1e-8);
}

TEST_CASE("the recorded minimizers push the state toward the origin") {
    const auto spec = config::builtin_problem("drift_control");
    const Gate gate = open_gate(spec);
    const auto g = box_grid(4, 9);

    value::DppOptions opt;
    opt.M = 5000;
    opt.seed = 9;
    opt.record_argmin = true;
    const auto W = value::compute_value_dpp(spec, gate, g, opt);

    REQUIRE(W.has_argmin());
    REQUIRE(W.control_dim() == 1);
    // Node 1 sits at x = -1.5, node 7 at x = +1.5.
    CHECK(W.argmin_at(0, 1)[0] == doctest::Approx(1.0));
    CHECK(W.argmin_at(0, 7)[0] == doctest::Approx(-1.0));
}

TEST_CASE("slab substeps restore the parabolic bound on coarse time grids") {
    const auto heat = config::builtin_problem("heat"); // L1 = 1
    const Gate gate = open_gate(heat);
    const auto g = box_grid(1, 9); // one slab of length 1: dt * L1 = 1

    value::DppOptions opt;
    opt.M = 500;
    opt.seed = 1;
    CHECK_THROWS_AS(value::compute_value_dpp(heat, gate, g, opt), CflViolation);

    opt.slab_substeps = 4; // simulation dt = 0.25 inside the slab
    CHECK_NOTHROW(value::compute_value_dpp(heat, gate, g, opt));
}

TEST_CASE("fields interpolate multilinearly and respect the clamp flag") {
    const auto heat = config::builtin_problem("heat");
    const auto g = box_grid(2, 5); // nodes at -2, -1, 0, 1, 2
    ValueField f(g, "external", heat.hash);
    for (int ti = 0; ti <= 2; ++ti)
        for (std::size_t node = 0; node < 5; ++node) {
            const double x = g.x_at(0, static_cast<int>(node));
            f.at(ti, node) = 10.0 * ti + x;
        }

    const std::vector<double> mid{0.5};
    CHECK(f.interp_space(1, mid) == doctest::Approx(10.5).epsilon(1e-12));
    CHECK(f.interp(0.25, mid) == doctest::Approx(5.5).epsilon(1e-12)); // t halfway to slice 1

    const std::vector<double> outside{2.75};
    CHECK(f.interp_space(0, outside, true) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS_AS(f.interp_space(0, outside, false), InterpolationOutOfBounds);
}

TEST_CASE("fields round-trip through the CSV and JSON artifacts") {
    const auto heat = config::builtin_problem("heat");
    const Gate gate = open_gate(heat);
    const auto g = box_grid(3, 7);
    value::DppOptions opt;
    opt.M = 1000;
    opt.seed = 5;
    const auto W = value::compute_value_dpp(heat, gate, g, opt);

    const auto dir = std::filesystem::temp_directory_path() / "fblab_test_value";
    std::filesystem::create_directories(dir);
    const std::string base = (dir / "field").string();
    W.save(base);

    const auto back = ValueField::load(base);
    CHECK(back.provenance() == W.provenance());
    CHECK(back.problem_hash() == W.problem_hash());
    CHECK(back.grid().steps == g.steps);
    CHECK(back.grid().x_nodes == g.x_nodes);
    REQUIRE(back.raw_values().size() == W.raw_values().size());
    CHECK(back.raw_values() == W.raw_values());
    std::filesystem::remove_all(dir);
}

TEST_CASE("regularity estimates read the difference quotients off the lattice") {
    const auto g = box_grid(2, 9);
    ValueField f(g, "external", "");
    for (int ti = 0; ti <= 2; ++ti)
        for (std::size_t node = 0; node < 9; ++node) {
            const double x = g.x_at(0, static_cast<int>(node));
            f.at(ti, node) = x * x;
        }
    const auto est = estimate_regularity(f);
    // max |x_a^2 - x_b^2| / dx over adjacent nodes = |2 - 1.5| pair -> 3.5.
    CHECK(est.lip_x == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(est.holder_t == 0.0);

    const auto inner = estimate_regularity(f, 1.0);
    CHECK(inner.lip_x == doctest::Approx(1.5).epsilon(1e-12));
}
