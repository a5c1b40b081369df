#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fblab/paths.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace fblab;

namespace {

ProblemSpec scalar_spec(const std::string& b, const std::string& sigma, double L1 = 1.0,
                        double L2 = 0.0) {
    ProblemSpec spec;
    spec.name = "inline";
    spec.T = 1.0;
    const expr::Dims dims{1, 1, 1};
    spec.b = {Coefficient(expr::parse(b, dims))};
    spec.sigma = {Coefficient(expr::parse(sigma, dims))};
    spec.g = Coefficient(expr::parse("0", dims));
    spec.phi = Coefficient(expr::parse("x1^2", dims));
    spec.L1 = L1;
    spec.L2 = L2;
    spec.controls = ControlSet::single({0.0});
    spec.validate();
    spec.hash = problem_hash(spec);
    return spec;
}

SpaceTimeGrid time_axis(int steps, double T = 1.0) {
    SpaceTimeGrid g;
    g.t0 = 0.0;
    g.T = T;
    g.steps = steps;
    g.x_min = {-1.0};
    g.x_max = {1.0};
    g.x_nodes = {2};
    return g;
}

} // namespace

TEST_CASE("increments depend only on (seed, path), never on generation order") {
    const auto g = time_axis(4);
    const auto e1 = paths::generate_ensemble(g, 500, 2, 42, false);
    const auto e2 = paths::generate_ensemble(g, 500, 2, 42, false);
    REQUIRE(e1.dW.size() == e2.dW.size());
    CHECK(e1.dW == e2.dW);

    const auto e3 = paths::generate_ensemble(g, 500, 2, 43, false);
    CHECK(e1.dW != e3.dW);

    // A larger ensemble with the same seed reproduces the first M paths.
    const auto big = paths::generate_ensemble(g, 800, 2, 42, false);
    bool prefix = true;
    for (int step = 0; step < 4 && prefix; ++step)
        for (int comp = 0; comp < 2 && prefix; ++comp) {
            const auto small_span = e1.dw(step, comp);
            const auto big_span = big.dw(step, comp);
            for (int p = 0; p < 500; ++p)
                if (small_span[p] != big_span[p]) {
                    prefix = false;
                    break;
                }
        }
    CHECK(prefix);
}

TEST_CASE("increment moments look Gaussian and the self-check accepts them") {
    const auto g = time_axis(4);
    const int M = 50000;
    const auto e = paths::generate_ensemble(g, M, 1, 7, true); // self-check on
    const double dt = g.dt();

    for (int step = 0; step < 4; ++step) {
        const auto dw = e.dw(step, 0);
        double mean = 0.0, var = 0.0;
        for (double v : dw) mean += v;
        mean /= M;
        for (double v : dw) var += (v - mean) * (v - mean);
        var /= M - 1;
        CHECK(std::abs(mean) <= 4.0 * std::sqrt(dt / M));
        CHECK(std::abs(var - dt) <= 4.0 * dt * std::sqrt(2.0 / M));
    }
}

TEST_CASE("drift-only forward steps are exact") {
    const auto spec = scalar_spec("1", "0");
    const auto g = time_axis(2);
    const auto e = paths::generate_ensemble(g, 50, 1, 1, false);
    const std::vector<double> x0{0.25};
    const auto X = paths::forward_euler(spec, e, x0, paths::Policy::constant(0));

    for (double v : X.x(0, 0)) CHECK(v == 0.25);
    for (double v : X.x(1, 0)) CHECK(v == 0.75);
    for (double v : X.x(2, 0)) CHECK(v == 1.25);
}

TEST_CASE("additive noise keeps the second moment at x0^2 + t") {
    const auto spec = scalar_spec("0", "1");
    const auto g = time_axis(8);
    const int M = 100000;
    const auto e = paths::generate_ensemble(g, M, 1, 11, true);
    const std::vector<double> x0{0.5};
    const auto X = paths::forward_euler(spec, e, x0, paths::Policy::constant(0));

    double m2 = 0.0;
    for (double v : X.x(8, 0)) m2 += v * v;
    m2 /= M;
    // var(X_T^2) = 2 T^2 + 4 x0^2 T = 3, so four standard errors is ~0.022.
    CHECK(m2 == doctest::Approx(0.5 * 0.5 + 1.0).epsilon(0.03));
}

TEST_CASE("a coupled drift without a feed is refused, with a feed it is exact") {
    const auto spec = scalar_spec("y", "0", 1.0, 1.0);
    const auto g = time_axis(2);
    const auto e = paths::generate_ensemble(g, 10, 1, 1, false);
    const std::vector<double> x0{0.0};

    CHECK_THROWS_AS(paths::forward_euler(spec, e, x0, paths::Policy::constant(0)),
                    MissingFeed);

    // Constant feed y = 2: X gains 2 dt per step.
    const std::vector<double> y((2 + 1) * 10, 2.0);
    paths::Feeds feeds;
    feeds.y = y;
    const auto X = paths::forward_euler(spec, e, x0, paths::Policy::constant(0), feeds);
    for (double v : X.x(2, 0)) CHECK(v == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("policies hand the right control to the right step") {
    const auto c = paths::Policy::constant(3);
    CHECK_FALSE(c.is_feedback());
    CHECK(c.uniform_index(0) == 3);
    CHECK(c.uniform_index(9) == 3);

    const auto per = paths::Policy::per_step({0, 2, 1});
    CHECK(per.uniform_index(0) == 0);
    CHECK(per.uniform_index(1) == 2);
    CHECK(per.uniform_index(2) == 1);

    int calls = 0;
    const auto fb = paths::Policy::feedback([&](int step, std::span<const double> x) {
        ++calls;
        return static_cast<std::size_t>(step == 0 && x[0] > 0.0 ? 1 : 0);
    });
    CHECK(fb.is_feedback());
    const std::vector<double> pos{0.5};
    CHECK(fb.index_at(0, pos) == 1);
    CHECK(fb.index_at(1, pos) == 0);
    CHECK(calls == 2);
}

TEST_CASE("regression recovers a martingale and its volatility") {
    // With b = 0, sigma = 1 and terminal phi = x, the backward process is
    // Y = X and Z = 1 identically.
    ProblemSpec spec = scalar_spec("0", "1");
    const expr::Dims dims{1, 1, 1};
    spec.phi = Coefficient(expr::parse("x1", dims));
    spec.hash = problem_hash(spec);

    const auto g = time_axis(8);
    const int M = 20000;
    const auto e = paths::generate_ensemble(g, M, 1, 5, true);
    const std::vector<double> x0{0.5};
    const auto X = paths::forward_euler(spec, e, x0, paths::Policy::constant(0));

    std::vector<double> terminal(M);
    for (int p = 0; p < M; ++p) terminal[static_cast<std::size_t>(p)] = X.x(8, 0)[p];

    const auto sol =
        paths::backward_regression(spec, e, X, paths::Policy::constant(0), terminal);

    double y0 = 0.0;
    for (double v : sol.y(0, M)) y0 += v;
    y0 /= M;
    CHECK(y0 == doctest::Approx(0.5).epsilon(1e-2));

    double zbar = 0.0;
    long zcount = 0;
    for (int step = 0; step < 8; ++step)
        for (double v : sol.z(step, 0, 1, M)) {
            zbar += v;
            ++zcount;
        }
    zbar /= static_cast<double>(zcount);
    CHECK(zbar == doctest::Approx(1.0).epsilon(0.05));

    CHECK(sol.condition.size() == 8);
    for (double c : sol.condition) CHECK(c < 1e12);
}

TEST_CASE("the parabolic step bound refuses dt * L1 >= 1") {
    const auto spec = scalar_spec("0", "1", 2.0); // declared L1 = 2
    const auto g = time_axis(2);                  // dt = 0.5, dt * L1 = 1
    const auto e = paths::generate_ensemble(g, 100, 1, 1, false);
    const std::vector<double> x0{0.0};
    const auto X = paths::forward_euler(spec, e, x0, paths::Policy::constant(0));
    std::vector<double> terminal(100, 0.0);
    CHECK_THROWS_AS(
        paths::backward_regression(spec, e, X, paths::Policy::constant(0), terminal),
        CflViolation);
}

TEST_CASE("trajectory export writes one row per path and step") {
    const auto spec = scalar_spec("0", "1");
    const auto g = time_axis(3);
    const int M = 7;
    const auto e = paths::generate_ensemble(g, M, 1, 2, false);
    const std::vector<double> x0{0.0};
    const auto X = paths::forward_euler(spec, e, x0, paths::Policy::constant(0));

    const auto dir = std::filesystem::temp_directory_path() / "fblab_test_paths";
    std::filesystem::create_directories(dir);
    const std::string file = (dir / "paths.csv").string();
    paths::export_trajectories(file, g, X, nullptr, 1);

    std::ifstream in(file);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("t,path_id", 0) == 0);
    long rows = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++rows;
    CHECK(rows == (3 + 1) * M);
    std::filesystem::remove_all(dir);
}
