#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/core.hpp"

#include <cmath>
#include <memory>
#include <vector>

using namespace fblab;

namespace {

ProblemSpec scalar_spec(const std::string& b, const std::string& sigma, const std::string& g,
                        const std::string& phi, double L1, double L2, double L3,
                        double T = 1.0) {
    ProblemSpec spec;
    spec.name = "inline";
    spec.n = 1;
    spec.d = 1;
    spec.k = 1;
    spec.T = T;
    const expr::Dims dims{1, 1, 1};
    spec.b = {Coefficient(expr::parse(b, dims))};
    spec.sigma = {Coefficient(expr::parse(sigma, dims))};
    spec.g = Coefficient(expr::parse(g, dims));
    spec.phi = Coefficient(expr::parse(phi, dims));
    spec.L1 = L1;
    spec.L2 = L2;
    spec.L3 = L3;
    spec.controls = ControlSet::single({0.0});
    spec.validate();
    spec.hash = problem_hash(spec);
    return spec;
}

} // namespace

TEST_CASE("standing assumptions on a worked instance") {
    // c1 = max(L2, L3) = 0.2, Lambda = 8 * 1 * (1 + 1) * 0.04 = 0.64,
    // L_bar = max(1, 1 / (1 - 0.8)) = 5, Lambda_bar = 0.64 again under the
    // nominal constants, L_W = 5, and both L3 conditions hold.
    const auto spec = scalar_spec("0", "1", "0.2*y", "x1", 1.0, 0.2, 0.1);
    const auto rep = check_standing_assumptions(spec, AssumptionConstants{});

    CHECK(rep.c1 == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(rep.Lambda == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(rep.L_bar == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(rep.Lambda_bar == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(rep.L_W == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(rep.smallness_ok);
    CHECK(rep.l3_ok);
    CHECK(rep.constants_source == "nominal");
}

TEST_CASE("smallness fails when the coupling constant crosses the threshold") {
    // c1 = 0.5 gives Lambda = 8 * 2 * 0.25 = 4 >= 1.
    const auto spec = scalar_spec("0", "1", "0.5*y", "x1", 1.0, 0.5, 0.0);
    const auto rep = check_standing_assumptions(spec, AssumptionConstants{});
    CHECK_FALSE(rep.smallness_ok);
    CHECK(rep.Lambda == doctest::Approx(4.0).epsilon(1e-12));

    const Gate closed{rep, false};
    CHECK_THROWS_AS(closed.require("unit"), GateRefused);

    const Gate open{rep, true};
    CHECK_NOTHROW(open.require("unit"));
}

TEST_CASE("explicit L_W override feeds the L3 conditions") {
    const auto spec = scalar_spec("0", "1", "0", "x1", 1.0, 0.0, 0.3);
    AssumptionConstants constants;
    constants.L_W = 2.0;
    const auto rep = check_standing_assumptions(spec, constants);
    CHECK(rep.L_W == doctest::Approx(2.0));
    CHECK(rep.l3_ok); // 0.3 * 2 < 1 and 8 * 0.3^4 < 1

    constants.L_W = 4.0;
    const auto rep2 = check_standing_assumptions(spec, constants);
    CHECK_FALSE(rep2.l3_ok); // 0.3 * 4 >= 1
}

TEST_CASE("degenerate well-posedness constants are rejected") {
    const auto spec = scalar_spec("0", "1", "0.2*y", "x1", 1.0, 0.2, 0.0);

    AssumptionConstants nonpositive;
    nonpositive.C2 = [](double) { return 0.0; };
    CHECK_THROWS_AS(check_standing_assumptions(spec, nonpositive), InvalidConstants);

    AssumptionConstants decreasing;
    decreasing.C2 = [](double v) { return v <= 1.0 ? 1.0 : 0.5; };
    CHECK_THROWS_AS(check_standing_assumptions(spec, decreasing), InvalidConstants);
}

TEST_CASE("control lattices") {
    const auto single = ControlSet::single({0.25, -1.0});
    CHECK(single.size() == 1);
    CHECK(single.k == 2);
    CHECK(single.at(0)[1] == -1.0);

    const auto line = ControlSet::uniform({-1.0}, {1.0}, {3});
    REQUIRE(line.size() == 3);
    CHECK(line.at(0)[0] == doctest::Approx(-1.0));
    CHECK(line.at(1)[0] == doctest::Approx(0.0));
    CHECK(line.at(2)[0] == doctest::Approx(1.0));

    const auto plane = ControlSet::uniform({0.0, 0.0}, {1.0, 2.0}, {2, 3});
    CHECK(plane.size() == 6);
    CHECK(plane.k == 2);

    ControlSet bad;
    bad.k = 1;
    bad.points = {{0.0}, {1.0, 2.0}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("monotonicity probe separates monotone and non-monotone data") {
    MonotonicityConfig cfg;
    cfg.G = {1.0};

    // phi = x is monotone along G and the zero drift/driver add nothing.
    const auto good = scalar_spec("0", "1", "0", "x1", 1.0, 0.0, 0.0);
    const auto rg = check_monotonicity_sampled(good, cfg, 4000);
    CHECK(rg.ok);
    CHECK(rg.violations == 0);
    CHECK(rg.probes == 4000);

    // phi = -x runs against the certificate direction.
    const auto anti = scalar_spec("0", "1", "0", "-x1", 1.0, 0.0, 0.0);
    const auto ra = check_monotonicity_sampled(anti, cfg, 4000);
    CHECK_FALSE(ra.ok);
    CHECK(ra.violations > 0);
    CHECK(ra.worst_violation > 0.0);

    // A y-coupled driver breaks the first condition whatever the weights.
    const auto coupled = scalar_spec("0", "1", "y", "x1", 1.0, 1.0, 0.0);
    const auto rc = check_monotonicity_sampled(coupled, cfg, 4000);
    CHECK_FALSE(rc.ok);
}

TEST_CASE("certificate shape and admissibility") {
    MonotonicityConfig cfg;
    cfg.G = {1.0};
    CHECK_NOTHROW(cfg.validate(1));
    CHECK_FALSE(cfg.admissible(1)); // all weights zero

    cfg.beta1 = 1.0;
    cfg.mu1 = 0.5;
    CHECK(cfg.admissible(1));
    CHECK_FALSE(cfg.admissible(2)); // n > 1 needs beta2 > 0

    cfg.beta2 = 0.1;
    CHECK(cfg.admissible(2));

    MonotonicityConfig bad = cfg;
    bad.beta1 = -1.0;
    CHECK_THROWS_AS(bad.validate(1), ConfigError);

    MonotonicityConfig zero;
    zero.G = {0.0};
    CHECK_THROWS_AS(zero.validate(1), ConfigError);

    MonotonicityConfig wrong;
    wrong.G = {1.0, 2.0};
    CHECK_THROWS_AS(wrong.validate(1), ConfigError);
}

TEST_CASE("lipschitz probing reports the worst difference quotients") {
    // phi = x1^2 on the unit probe box has difference quotients up to
    // |x + x'| = 2; the probe should get close and stay deterministic.
    const auto spec = scalar_spec("0", "1", "0", "x1^2", 1.0, 0.0, 0.0);
    const auto rep = probe_lipschitz(spec, 20000);
    CHECK(rep.phi_x >= 1.5);
    CHECK(rep.phi_x <= 2.0 + 1e-9);
    CHECK(rep.b_x == 0.0);
    CHECK(rep.sigma_x == 0.0);

    const auto again = probe_lipschitz(spec, 20000);
    CHECK(again.phi_x == rep.phi_x);
    CHECK(again.warnings.size() == rep.warnings.size());
}

TEST_CASE("content hash tracks the problem statement") {
    const auto a = scalar_spec("0", "1", "0", "x1^2", 1.0, 0.0, 0.0);
    const auto b = scalar_spec("0", "1", "0", "x1^2", 1.0, 0.0, 0.0);
    CHECK(problem_hash(a) == problem_hash(b));

    auto c = a;
    c.L1 = 2.0;
    CHECK(problem_hash(c) != problem_hash(a));

    const auto d = scalar_spec("0", "1", "0", "x1^2 + 0", 1.0, 0.0, 0.0);
    CHECK(problem_hash(d) != problem_hash(a));
}

TEST_CASE("frozen bindings substitute the y slot and change the declared dependence") {
    SpaceTimeGrid g;
    g.t0 = 0.0;
    g.T = 1.0;
    g.steps = 2;
    g.x_min = {-1.0};
    g.x_max = {1.0};
    g.x_nodes = {5};

    auto field = std::make_shared<ValueField>(g, "external", "");
    for (double& v : field->raw_values()) v = 2.0;

    auto frozen = std::make_shared<FrozenBindings>();
    frozen->y_field = field;

    const expr::Dims dims{1, 1, 1};
    const Coefficient raw(expr::parse("3*y", dims));
    CHECK(raw.uses_y());

    const Coefficient bound(expr::parse("3*y", dims), frozen);
    CHECK_FALSE(bound.uses_y());
    CHECK(bound.uses_x()); // the substituted field reads (t, x)

    const std::vector<double> x{0.25};
    const std::vector<double> z{0.0};
    const std::vector<double> u{0.0};
    // y argument 99 must be ignored in favor of the field value 2.
    CHECK(bound.eval(0.5, x, 99.0, z, u) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(raw.eval(0.5, x, 99.0, z, u) == doctest::Approx(297.0).epsilon(1e-12));
}

TEST_CASE("spec validation catches shape mistakes") {
    auto spec = scalar_spec("0", "1", "0", "x1", 1.0, 0.0, 0.0);
    spec.sigma.clear();
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    auto neg = scalar_spec("0", "1", "0", "x1", 1.0, 0.0, 0.0);
    neg.T = -1.0;
    CHECK_THROWS_AS(neg.validate(), ConfigError);

    auto l = scalar_spec("0", "1", "0", "x1", 1.0, 0.0, 0.0);
    l.L1 = -0.5;
    CHECK_THROWS_AS(l.validate(), ConfigError);
}
