#include "fblab/verify.hpp"

#include "fblab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

namespace fblab::verify {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t s = seed;
    rng::splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ull * (salt + 1);
    rng::splitmix64(s);
    return s;
}

// ---- mollification kernel ----

double bump(double s) {
    const double r = 1.0 - s * s;
    return r <= 0.0 ? 0.0 : r * r * r * r;
}
double bump_d1(double s) {
    const double r = 1.0 - s * s;
    return r <= 0.0 ? 0.0 : -8.0 * s * r * r * r;
}
double bump_d2(double s) {
    const double r = 1.0 - s * s;
    return r <= 0.0 ? 0.0 : -8.0 * r * r * r + 48.0 * s * s * r * r;
}

/// Sampled kernel rows along one axis, renormalized so that the discrete
/// convolution reproduces constants exactly (value row), gives linear ramps
/// an exact first derivative (d1 row) and quadratics an exact second
/// derivative (d2 row).
struct AxisWeights {
    int radius = 0;
    std::vector<double> value, d1, d2; // indexed by j + radius
};

AxisWeights make_axis_weights(double h, double epsilon) {
    AxisWeights w;
    const int R = static_cast<int>(std::floor(epsilon / h));
    w.radius = R;
    const std::size_t width = static_cast<std::size_t>(2 * R + 1);
    w.value.resize(width);
    w.d1.resize(width);
    w.d2.resize(width);
    for (int j = -R; j <= R; ++j) {
        const double s = (j * h) / epsilon;
        const std::size_t idx = static_cast<std::size_t>(j + R);
        w.value[idx] = bump(s);
        w.d1[idx] = bump_d1(s);
        w.d2[idx] = bump_d2(s);
    }

    double mass = 0.0;
    for (double v : w.value) mass += v;
    for (auto& v : w.value) v /= mass;

    // The convolution samples F(q - j h); moments below use that convention.
    double sum1 = 0.0;
    for (double v : w.d1) sum1 += v;
    const double mean1 = sum1 / static_cast<double>(width);
    for (auto& v : w.d1) v -= mean1;
    double m1 = 0.0;
    for (int j = -R; j <= R; ++j) m1 += w.d1[static_cast<std::size_t>(j + R)] * (-j * h);
    if (!(std::abs(m1) > 0.0)) throw SolverError("verify", "degenerate mollifier d1 weights");
    for (auto& v : w.d1) v /= m1;

    double sum2 = 0.0;
    for (double v : w.d2) sum2 += v;
    const double mean2 = sum2 / static_cast<double>(width);
    for (auto& v : w.d2) v -= mean2;
    double m2 = 0.0;
    for (int j = -R; j <= R; ++j)
        m2 += w.d2[static_cast<std::size_t>(j + R)] * (j * h) * (j * h);
    if (!(std::abs(m2) > 0.0)) throw SolverError("verify", "degenerate mollifier d2 weights");
    for (auto& v : w.d2) v *= 2.0 / m2;

    return w;
}

/// In-place convolution along one axis of the (time, space) lattice.
/// axis 0 is time; axis a >= 1 is spatial dimension a - 1. Out-of-range
/// samples clamp to the boundary (the paper-style [(t - t') v 0] ^ T
/// truncation, applied to every axis).
void convolve_axis(const SpaceTimeGrid& g, std::vector<double>& data, int axis,
                   std::span<const double> row, int radius) {
    const std::size_t space = g.space_size();
    int extent;
    std::size_t stride;
    if (axis == 0) {
        extent = g.steps + 1;
        stride = space;
    } else {
        extent = g.x_nodes[static_cast<std::size_t>(axis - 1)];
        stride = 1;
        for (int a = g.dim() - 1; a > axis - 1; --a)
            stride *= static_cast<std::size_t>(g.x_nodes[static_cast<std::size_t>(a)]);
    }

    std::vector<double> out(data.size());
    for (std::size_t flat = 0; flat < data.size(); ++flat) {
        const int ia = static_cast<int>((flat / stride) % static_cast<std::size_t>(extent));
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) {
            const int is = std::clamp(ia - j, 0, extent - 1);
            acc += row[static_cast<std::size_t>(j + radius)] *
                   data[flat + static_cast<std::size_t>(
                                   static_cast<std::ptrdiff_t>(is - ia) *
                                   static_cast<std::ptrdiff_t>(stride))];
        }
        out[flat] = acc;
    }
    data.swap(out);
}

/// Nearest-node lookup on a grid's spatial lattice.
std::size_t nearest_node(const SpaceTimeGrid& g, std::span<const double> xs) {
    std::size_t flat = 0;
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t ua = static_cast<std::size_t>(a);
        const int N = g.x_nodes[ua];
        const double pos = (xs[ua] - g.x_min[ua]) / g.dx(a);
        long j = std::lround(pos);
        j = std::clamp(j, 0L, static_cast<long>(N - 1));
        flat = flat * static_cast<std::size_t>(N) + static_cast<std::size_t>(j);
    }
    return flat;
}

/// Lattice index whose control point is closest to the given values.
std::size_t nearest_control(const ProblemSpec& spec, std::span<const double> u) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.controls.size(); ++i) {
        const auto pt = spec.controls.at(i);
        double d2 = 0.0;
        for (std::size_t c = 0; c < pt.size(); ++c) {
            const double dd = pt[c] - u[c];
            d2 += dd * dd;
        }
        if (d2 < best_d) {
            best_d = d2;
            best = i;
        }
    }
    return best;
}

SpaceTimeGrid simulation_grid(const SpaceTimeGrid& box, double t0, double T, int steps) {
    SpaceTimeGrid sim;
    sim.t0 = t0;
    sim.T = T;
    sim.steps = steps;
    sim.x_min = box.x_min;
    sim.x_max = box.x_max;
    sim.x_nodes.assign(box.x_min.size(), 2);
    return sim;
}

} // namespace

// ---- SmoothField ----

double SmoothField::value_at(double t, std::span<const double> x) const {
    return value.interp(t, x, true);
}

double SmoothField::dt_at(double t, std::span<const double> x) const {
    return time_derivative.interp(t, x, true);
}

void SmoothField::gradient_at(double t, std::span<const double> x, std::span<double> out) const {
    for (std::size_t a = 0; a < gradient.size(); ++a) out[a] = gradient[a].interp(t, x, true);
}

void SmoothField::hessian_at(double t, std::span<const double> x, std::span<double> out) const {
    for (std::size_t a = 0; a < hessian.size(); ++a) out[a] = hessian[a].interp(t, x, true);
}

double SmoothField::gradient_norm_inf() const {
    const auto& g = value.grid();
    double best = 0.0;
    for (int ti = 0; ti <= g.steps; ++ti) {
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            double s = 0.0;
            for (const auto& comp : gradient) {
                const double v = comp.at(ti, node);
                s += v * v;
            }
            best = std::max(best, std::sqrt(s));
        }
    }
    return best;
}

// ---- mollify ----

MollifiedField mollify(const ValueField& source, double epsilon) {
    const auto& g = source.grid();
    g.validate();
    if (!(epsilon > 0.0)) throw ConfigError("mollify: epsilon must be positive");

    const int n = g.dim();
    if (g.dt() > epsilon / 4.0) {
        char msg[160];
        std::snprintf(msg, sizeof msg,
                      "time spacing %.6g exceeds epsilon/4 = %.6g", g.dt(), epsilon / 4.0);
        throw ResolutionError(msg);
    }
    for (int a = 0; a < n; ++a) {
        if (g.dx(a) > epsilon / 4.0) {
            char msg[160];
            std::snprintf(msg, sizeof msg, "x%d spacing %.6g exceeds epsilon/4 = %.6g", a + 1,
                          g.dx(a), epsilon / 4.0);
            throw ResolutionError(msg);
        }
    }

    const AxisWeights tw = make_axis_weights(g.dt(), epsilon);
    std::vector<AxisWeights> xw;
    xw.reserve(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) xw.push_back(make_axis_weights(g.dx(a), epsilon));

    // Convolve the source with the chosen kernel row per axis: d1 on up to two
    // axes (cross second derivative), d2 on one, value row elsewhere.
    auto build = [&](int d1a, int d1b, int d2a) {
        ValueField f(g, "external", source.problem_hash());
        f.raw_values() = source.raw_values();
        for (int axis = 0; axis <= n; ++axis) {
            const AxisWeights& w = axis == 0 ? tw : xw[static_cast<std::size_t>(axis - 1)];
            std::span<const double> row = w.value;
            if (axis == d2a) row = w.d2;
            else if (axis == d1a || axis == d1b) row = w.d1;
            convolve_axis(g, f.raw_values(), axis, row, w.radius);
        }
        return f;
    };

    MollifiedField out;
    out.epsilon = epsilon;
    out.value = build(-1, -1, -1);
    out.time_derivative = build(0, -1, -1);
    out.gradient.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) out.gradient[static_cast<std::size_t>(a)] = build(a + 1, -1, -1);
    out.hessian.resize(static_cast<std::size_t>(n * n));
    for (int a = 0; a < n; ++a) {
        out.hessian[static_cast<std::size_t>(a * n + a)] = build(-1, -1, a + 1);
        for (int c = a + 1; c < n; ++c) {
            ValueField cross = build(a + 1, c + 1, -1);
            out.hessian[static_cast<std::size_t>(c * n + a)] = cross;
            out.hessian[static_cast<std::size_t>(a * n + c)] = std::move(cross);
        }
    }
    return out;
}

// ---- pr_um pipeline ----

PrUmReport pr_um_pipeline(const ProblemSpec& spec, const Gate& gate, const ValueField& candidate,
                          double t, std::span<const double> x, const PrUmOptions& opt) {
    spec.validate();
    const auto& g = candidate.grid();
    g.validate();
    if (g.dim() != spec.n)
        throw ConfigError("verify: candidate grid dimension does not match the problem");
    if (!(t >= g.t0 && t < g.T))
        throw ConfigError("verify: start time must lie in [t0, T)");
    if (opt.m < 1 || opt.substeps < 1 || opt.M < 2 || opt.selection_M < 2)
        throw ConfigError("verify: degenerate sampling parameters");
    gate.require("verify.pr_um_pipeline");

    const int n = spec.n;
    const std::size_t nodes = g.space_size();
    const std::size_t nu = spec.controls.size();
    const bool scan = !spec.control_free();

    // per-slab, per-node minimizing control (lattice-exhaustive Step 1)
    std::vector<std::vector<std::size_t>> table(static_cast<std::size_t>(opt.m));
    std::vector<double> xn(static_cast<std::size_t>(n));
    for (int i = 0; i < opt.m; ++i) {
        auto& slab = table[static_cast<std::size_t>(i)];
        slab.assign(nodes, 0);
        if (!scan) continue;
        const double s0 = t + (g.T - t) * i / opt.m;
        const double s1 = i + 1 == opt.m ? g.T : t + (g.T - t) * (i + 1) / opt.m;
        const SpaceTimeGrid sg = simulation_grid(g, s0, s1, opt.substeps);
        const auto ens = paths::generate_ensemble(sg, opt.selection_M, spec.d,
                                                  derive_seed(opt.seed, 100 + static_cast<std::uint64_t>(i)),
                                                  false);
        auto psi = [&](std::span<const double> xe) { return candidate.interp(s1, xe, true); };
        for (std::size_t node = 0; node < nodes; ++node) {
            g.coords(node, xn);
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_u = 0;
            for (std::size_t ui = 0; ui < nu; ++ui) {
                const double y = fbsde::backward_semigroup(spec, gate, ens, xn,
                                                           paths::Policy::constant(ui), psi,
                                                           opt.picard);
                if (y < best) {
                    best = y;
                    best_u = ui;
                }
            }
            slab[node] = best_u;
        }
    }

    const SpaceTimeGrid sim = simulation_grid(g, t, g.T, opt.m * opt.substeps);
    paths::Policy policy = paths::Policy::constant(0);
    if (scan) {
        const int substeps = opt.substeps;
        const int m = opt.m;
        const SpaceTimeGrid box = g;
        policy = paths::Policy::feedback(
            [table, substeps, m, box](int step, std::span<const double> xs) {
                const int slab = std::min(step / substeps, m - 1);
                return table[static_cast<std::size_t>(slab)][nearest_node(box, xs)];
            });
    }

    const auto ens = paths::generate_ensemble(sim, opt.M, spec.d, opt.seed, opt.M >= 64);
    const auto sol = fbsde::solve_fully_coupled(spec, gate, ens, x, policy, opt.picard);

    PrUmReport rep;
    rep.w_start = candidate.interp(t, x, true);
    rep.y_start = sol.y0;
    rep.slab_gaps.assign(static_cast<std::size_t>(opt.m) + 1, 0.0);

    const double dt = sim.dt();
    std::vector<double> xs(static_cast<std::size_t>(n));
    double mean_sq = 0.0;
    double mean_sq2 = 0.0;
    for (int p = 0; p < opt.M; ++p) {
        double acc = 0.0;
        for (int s = 0; s <= sim.steps; ++s) {
            for (int a = 0; a < n; ++a)
                xs[static_cast<std::size_t>(a)] = sol.X.x(s, a)[static_cast<std::size_t>(p)];
            const double w = candidate.interp(sim.t_at(s), xs, true);
            const double dy = sol.YZ.y(s, opt.M)[static_cast<std::size_t>(p)] - w;
            if (s < sim.steps) acc += dy * dy * dt;
            if (s % opt.substeps == 0)
                rep.slab_gaps[static_cast<std::size_t>(s / opt.substeps)] += std::abs(dy);
        }
        mean_sq += acc;
        mean_sq2 += acc * acc;
    }
    for (auto& sg : rep.slab_gaps) sg /= opt.M;
    const double mean_acc = mean_sq / opt.M;
    const double var_acc = std::max(0.0, mean_sq2 / opt.M - mean_acc * mean_acc);
    rep.rho_stderr = std::sqrt(var_acc / opt.M);
    rep.rho = mean_acc + std::abs(rep.y_start - rep.w_start);
    return rep;
}

// ---- uniqueness checks ----

namespace {

struct GapSummary {
    double gap_min = std::numeric_limits<double>::infinity();
    double gap_max = -std::numeric_limits<double>::infinity();
};

GapSummary signed_gaps(const ValueField& candidate, const ValueField& solver_value) {
    GapSummary s;
    const auto& g = candidate.grid();
    for (int ti = 0; ti <= g.steps; ++ti) {
        for (std::size_t node = 0; node < g.space_size(); ++node) {
            const double d = candidate.at(ti, node) - solver_value.at(ti, node);
            s.gap_min = std::min(s.gap_min, d);
            s.gap_max = std::max(s.gap_max, d);
        }
    }
    return s;
}

double max_abs_gap(const ValueField& a, const ValueField& b) {
    double m = 0.0;
    const auto& g = a.grid();
    for (int ti = 0; ti <= g.steps; ++ti)
        for (std::size_t node = 0; node < g.space_size(); ++node)
            m = std::max(m, std::abs(a.at(ti, node) - b.at(ti, node)));
    return m;
}

std::string one_sided_verdict(bool control_free, const GapSummary& s, double tol) {
    if (control_free)
        return (s.gap_min >= -tol && s.gap_max <= tol) ? "equal" : "inconsistent";
    return s.gap_min >= -tol ? "consistent" : "inconsistent";
}

} // namespace

UniquenessReport uniqueness_check_frozen_sigma(const ProblemSpec& spec, const Gate& gate,
                                               const ValueField& candidate,
                                               const UniquenessOptions& opt) {
    spec.validate();
    const auto& g = candidate.grid();
    g.validate();
    if (g.dim() != spec.n)
        throw ConfigError("verify: candidate grid dimension does not match the problem");
    if (spec.sigma_uses_z())
        throw ConfigError(
            "verify: the frozen-sigma check needs a diffusion free of z; use the full check");

    const double lip_bound = opt.lip_bound > 0.0 ? opt.lip_bound : gate.report.L_W;
    const auto reg = estimate_regularity(candidate);
    if (std::isfinite(lip_bound) && reg.lip_x > lip_bound + 1e-9 * (1.0 + lip_bound)) {
        char msg[200];
        std::snprintf(msg, sizeof msg,
                      "candidate difference quotient %.6g exceeds the Lipschitz bound %.6g",
                      reg.lip_x, lip_bound);
        throw NotLipschitz(msg);
    }

    UniquenessReport rep;
    rep.check = "frozen_sigma";
    rep.tol = opt.tol;
    rep.seed = opt.dpp.seed;

    // independently computed value of the original problem
    const auto W = value::compute_value_dpp(spec, gate, g, opt.dpp);

    // auxiliary problem: sigma's y slot frozen along the candidate
    ProblemSpec aux = spec;
    if (spec.sigma_uses_y()) {
        auto frozen = std::make_shared<FrozenBindings>();
        frozen->y_field = std::make_shared<ValueField>(candidate);
        for (auto& s : aux.sigma)
            if (s.expression().uses('y')) s = Coefficient(s.expression(), frozen);
    }
    aux.name += "+frozen-sigma";
    aux.hash.clear();
    const auto Waux = value::compute_value_dpp(aux, gate, g, opt.dpp);

    const GapSummary s = signed_gaps(candidate, W);
    rep.gap_min = s.gap_min;
    rep.gap_max = s.gap_max;
    rep.aux_gap = max_abs_gap(Waux, candidate);
    rep.verdict = one_sided_verdict(spec.control_free(), s, opt.tol);
    return rep;
}

UniquenessReport uniqueness_check_full(const ProblemSpec& spec, const Gate& gate,
                                       const ValueField& candidate,
                                       const FullUniquenessOptions& opt) {
    spec.validate();
    const auto& g = candidate.grid();
    g.validate();
    if (g.dim() != spec.n)
        throw ConfigError("verify: candidate grid dimension does not match the problem");

    UniquenessReport rep;
    rep.check = "full";
    rep.tol = opt.tol;
    rep.seed = opt.dpp.seed;

    const auto moll = mollify(candidate, opt.epsilon);
    rep.grad_inf = moll.gradient_norm_inf();
    if (spec.L3 > 0.0 && rep.grad_inf * spec.L3 >= 1.0)
        throw GradientTooLarge(rep.grad_inf, spec.L3);

    const int n = spec.n;
    const int d = spec.d;
    const std::size_t nodes = g.space_size();
    const std::size_t nu = spec.controls.size();

    // implied volatility argument V~(t, x, u) at the mollified derivatives
    std::vector<std::vector<ValueField>> ztab(nu);
    for (auto& per_u : ztab)
        per_u.assign(static_cast<std::size_t>(d),
                     ValueField(g, "external", candidate.problem_hash()));
    {
        std::vector<double> xn(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
        std::vector<double> z0(static_cast<std::size_t>(d), 0.0);
        for (int ti = 0; ti <= g.steps; ++ti) {
            const double tt = g.t_at(ti);
            for (std::size_t node = 0; node < nodes; ++node) {
                g.coords(node, xn);
                const double v = moll.value.at(ti, node);
                for (int a = 0; a < n; ++a)
                    p[static_cast<std::size_t>(a)] =
                        moll.gradient[static_cast<std::size_t>(a)].at(ti, node);
                for (std::size_t ui = 0; ui < nu; ++ui) {
                    const auto solA =
                        algebra::solve_algebra(spec, tt, xn, v, p, spec.controls.at(ui), ui, z0,
                                               opt.algebra_tol, opt.algebra_max_iter);
                    for (int j = 0; j < d; ++j)
                        ztab[ui][static_cast<std::size_t>(j)].at(ti, node) =
                            solA.V[static_cast<std::size_t>(j)];
                }
            }
        }
    }

    // auxiliary problem: b and sigma frozen at (W~, V~); driver and terminal kept
    ProblemSpec aux = spec;
    {
        auto frozen = std::make_shared<FrozenBindings>();
        frozen->y_field = std::make_shared<ValueField>(moll.value);
        frozen->z_fields = ztab;
        auto freeze = [&](Coefficient& c) {
            if (c.expression().uses('y') || c.expression().uses('z'))
                c = Coefficient(c.expression(), frozen);
        };
        for (auto& c : aux.b) freeze(c);
        for (auto& c : aux.sigma) freeze(c);
    }
    aux.name += "+frozen-b-sigma";
    aux.hash.clear();

    const auto W = value::compute_value_dpp(spec, gate, g, opt.dpp);
    const auto Waux = value::compute_value_dpp(aux, gate, g, opt.dpp);

    const GapSummary s = signed_gaps(candidate, W);
    rep.gap_min = s.gap_min;
    rep.gap_max = s.gap_max;
    rep.aux_gap = max_abs_gap(Waux, candidate);
    rep.verdict = s.gap_min >= -opt.tol ? "consistent" : "inconsistent";

    // Z-consistency diagnostic: simulate the frozen system closed-loop and
    // compare its regressed Z against the implied volatility argument.
    {
        const SpaceTimeGrid sim = simulation_grid(g, g.t0, g.T, opt.z_steps);
        const auto ens = paths::generate_ensemble(sim, opt.z_paths, d, opt.z_seed, false);
        std::vector<double> x0(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a)
            x0[static_cast<std::size_t>(a)] =
                0.5 * (g.x_min[static_cast<std::size_t>(a)] + g.x_max[static_cast<std::size_t>(a)]);

        paths::Policy policy = paths::Policy::constant(0);
        if (!spec.control_free() && Waux.has_argmin()) {
            // per-slice nearest-lattice index of the recorded argmin controls
            std::vector<std::vector<std::size_t>> am(static_cast<std::size_t>(g.steps) + 1);
            for (int ti = 0; ti <= g.steps; ++ti) {
                auto& row = am[static_cast<std::size_t>(ti)];
                row.resize(nodes);
                for (std::size_t node = 0; node < nodes; ++node)
                    row[node] = nearest_control(spec, Waux.argmin_at(ti, node));
            }
            const SpaceTimeGrid box = g;
            const double dt_grid = g.dt();
            policy = paths::Policy::feedback(
                [am, box, sim, dt_grid](int step, std::span<const double> xs) {
                    const double ts = sim.t_at(step);
                    int ti = static_cast<int>(std::floor((ts - box.t0) / dt_grid));
                    ti = std::clamp(ti, 0, box.steps);
                    return am[static_cast<std::size_t>(ti)][nearest_node(box, xs)];
                });
        }

        const auto solF = fbsde::solve_fully_coupled(aux, gate, ens, x0, policy,
                                                     opt.dpp.picard);
        double zacc = 0.0;
        std::vector<double> xs(static_cast<std::size_t>(n));
        const double dts = sim.dt();
        for (int st = 0; st < sim.steps; ++st) {
            const double ts = sim.t_at(st);
            for (int p = 0; p < opt.z_paths; ++p) {
                for (int a = 0; a < n; ++a)
                    xs[static_cast<std::size_t>(a)] = solF.X.x(st, a)[static_cast<std::size_t>(p)];
                const std::size_t ui = policy.index_at(st, xs);
                for (int j = 0; j < d; ++j) {
                    const double vt = ztab[ui][static_cast<std::size_t>(j)].interp(ts, xs, true);
                    const double zb =
                        solF.YZ.z(st, j, d, opt.z_paths)[static_cast<std::size_t>(p)];
                    zacc += (zb - vt) * (zb - vt) * dts;
                }
            }
        }
        rep.z_gap = zacc / opt.z_paths;
    }

    return rep;
}

// ---- pathwise generator residual ----

ItoReport ito_residual(const ProblemSpec& spec, const Gate& gate, const SmoothField& candidate,
                       double t, std::span<const double> x, const paths::Policy& policy,
                       const ItoOptions& opt) {
    spec.validate();
    const auto& g = candidate.value.grid();
    g.validate();
    if (g.dim() != spec.n)
        throw ConfigError("verify: candidate grid dimension does not match the problem");
    if (!(t >= g.t0 && t < g.T))
        throw ConfigError("verify: start time must lie in [t0, T)");
    if (opt.M < 2 || opt.steps < 1) throw ConfigError("verify: degenerate sampling parameters");

    const SpaceTimeGrid sim = simulation_grid(g, t, g.T, opt.steps);
    const auto ens = paths::generate_ensemble(sim, opt.M, spec.d, opt.seed, opt.M >= 64);
    const auto sol = fbsde::solve_fully_coupled(spec, gate, ens, x, policy, opt.picard);

    const int n = spec.n;
    ItoReport rep;
    rep.min_residual = std::numeric_limits<double>::infinity();
    double sum = 0.0;

    // Points outside the candidate's box would be evaluated on the clamped
    // extension, where the derivative fields mean nothing; skip and count.
    const auto inside = [&](const std::vector<double>& pnt) {
        for (int a = 0; a < n; ++a)
            if (pnt[static_cast<std::size_t>(a)] < g.x_min[static_cast<std::size_t>(a)] ||
                pnt[static_cast<std::size_t>(a)] > g.x_max[static_cast<std::size_t>(a)])
                return false;
        return true;
    };

    std::vector<double> xs(static_cast<std::size_t>(n)), grad(static_cast<std::size_t>(n));
    std::vector<double> hess(static_cast<std::size_t>(n * n));
    for (int s = 0; s < sim.steps; ++s) {
        const double ts = sim.t_at(s);
        for (int p = 0; p < opt.M; ++p) {
            for (int a = 0; a < n; ++a)
                xs[static_cast<std::size_t>(a)] = sol.X.x(s, a)[static_cast<std::size_t>(p)];
            if (!inside(xs)) {
                ++rep.outside;
                continue;
            }
            const double v = candidate.value_at(ts, xs);
            candidate.gradient_at(ts, xs, grad);
            candidate.hessian_at(ts, xs, hess);
            const std::size_t ui = policy.index_at(s, xs);
            const auto parts = hjb::assemble_hamiltonian(spec, ts, xs, v, grad, hess, ui,
                                                         opt.algebra_tol, opt.algebra_max_iter);
            const double pi1 = candidate.dt_at(ts, xs) + parts.H;
            rep.min_residual = std::min(rep.min_residual, pi1);
            rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(pi1));
            sum += pi1;
            ++rep.samples;
        }
    }
    rep.mean_residual = rep.samples ? sum / static_cast<double>(rep.samples) : 0.0;
    if (rep.samples == 0) rep.min_residual = 0.0;

    for (int p = 0; p < opt.M; ++p) {
        for (int a = 0; a < n; ++a)
            xs[static_cast<std::size_t>(a)] = sol.X.x(sim.steps, a)[static_cast<std::size_t>(p)];
        if (!inside(xs)) {
            ++rep.outside;
            continue;
        }
        const double wv = candidate.value_at(g.T, xs);
        const double pv = spec.phi.eval(g.T, xs, 0.0, {}, spec.controls.at(0), 0);
        rep.terminal_gap = std::max(rep.terminal_gap, std::abs(wv - pv));
    }
    return rep;
}

} // namespace fblab::verify
