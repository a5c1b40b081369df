#include "fblab/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace fblab::hjb {

namespace {

/// A short finite-difference stencil along one grid axis: node offsets
/// (in axis index units) and weights.
struct Taps {
    int count = 0;
    int off[3] = {0, 0, 0};
    double w[3] = {0.0, 0.0, 0.0};
};

Taps d1_central(int j, int N, double h) {
    Taps t;
    t.count = 2;
    if (j > 0 && j + 1 < N) {
        t.off[0] = 1;
        t.w[0] = 0.5 / h;
        t.off[1] = -1;
        t.w[1] = -0.5 / h;
    } else if (j == 0) {
        t.off[0] = 1;
        t.w[0] = 1.0 / h;
        t.off[1] = 0;
        t.w[1] = -1.0 / h;
    } else {
        t.off[0] = 0;
        t.w[0] = 1.0 / h;
        t.off[1] = -1;
        t.w[1] = -1.0 / h;
    }
    return t;
}

/// Forward difference for nonnegative drift, backward otherwise; falls back
/// to the available side at the box edge.
Taps d1_upwind(int j, int N, double h, bool forward) {
    Taps t;
    t.count = 2;
    const bool can_forward = j + 1 < N;
    const bool use_forward = forward ? can_forward : (j == 0);
    if (use_forward) {
        t.off[0] = 1;
        t.w[0] = 1.0 / h;
        t.off[1] = 0;
        t.w[1] = -1.0 / h;
    } else {
        t.off[0] = 0;
        t.w[0] = 1.0 / h;
        t.off[1] = -1;
        t.w[1] = -1.0 / h;
    }
    return t;
}

/// Three-point second difference; at the box edge the stencil is shifted one
/// node inward. Axes with only two nodes carry no curvature information.
Taps d2_axis(int j, int N, double h) {
    Taps t;
    if (N < 3) return t;
    t.count = 3;
    int c = j;
    if (c == 0) c = 1;
    if (c == N - 1) c = N - 2;
    const double w2 = 1.0 / (h * h);
    t.off[0] = c - 1 - j;
    t.w[0] = w2;
    t.off[1] = c - j;
    t.w[1] = -2.0 * w2;
    t.off[2] = c + 1 - j;
    t.w[2] = w2;
    return t;
}

double apply1(std::span<const double> slice, std::size_t node, const Taps& t,
              std::ptrdiff_t stride) {
    double acc = 0.0;
    for (int i = 0; i < t.count; ++i)
        acc += t.w[i] * slice[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(node) +
                                                       t.off[i] * stride)];
    return acc;
}

double apply2(std::span<const double> slice, std::size_t node, const Taps& ta,
              std::ptrdiff_t sa, const Taps& tb, std::ptrdiff_t sb) {
    double acc = 0.0;
    for (int i = 0; i < ta.count; ++i)
        for (int j = 0; j < tb.count; ++j)
            acc += ta.w[i] * tb.w[j] *
                   slice[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(node) +
                                                  ta.off[i] * sa + tb.off[j] * sb)];
    return acc;
}

std::vector<std::ptrdiff_t> make_strides(const SpaceTimeGrid& grid) {
    const int n = grid.dim();
    std::vector<std::ptrdiff_t> stride(static_cast<std::size_t>(n));
    std::ptrdiff_t s = 1;
    for (int a = n - 1; a >= 0; --a) {
        stride[static_cast<std::size_t>(a)] = s;
        s *= grid.x_nodes[static_cast<std::size_t>(a)];
    }
    return stride;
}

/// Central gradient and (symmetric) Hessian of one slice at one node.
void central_derivatives(std::span<const double> slice, const SpaceTimeGrid& grid,
                         std::size_t node, const std::vector<int>& idx,
                         const std::vector<std::ptrdiff_t>& stride, std::span<double> p,
                         std::span<double> A) {
    const int n = grid.dim();
    for (int a = 0; a < n; ++a) {
        const std::size_t ua = static_cast<std::size_t>(a);
        const Taps ta = d1_central(idx[ua], grid.x_nodes[ua], grid.dx(a));
        p[ua] = apply1(slice, node, ta, stride[ua]);
    }
    for (int a = 0; a < n; ++a) {
        const std::size_t ua = static_cast<std::size_t>(a);
        const Taps t2 = d2_axis(idx[ua], grid.x_nodes[ua], grid.dx(a));
        A[ua * static_cast<std::size_t>(n) + ua] =
            t2.count ? apply1(slice, node, t2, stride[ua]) : 0.0;
        for (int c = a + 1; c < n; ++c) {
            const std::size_t uc = static_cast<std::size_t>(c);
            const Taps ta = d1_central(idx[ua], grid.x_nodes[ua], grid.dx(a));
            const Taps tc = d1_central(idx[uc], grid.x_nodes[uc], grid.dx(c));
            const double cross = apply2(slice, node, ta, stride[ua], tc, stride[uc]);
            A[ua * static_cast<std::size_t>(n) + uc] = cross;
            A[uc * static_cast<std::size_t>(n) + ua] = cross;
        }
    }
}

void fill_terminal(const ProblemSpec& spec, ValueField& W, bool keep_argmin) {
    const auto& grid = W.grid();
    const std::size_t nodes = grid.space_size();
    std::vector<double> x(static_cast<std::size_t>(spec.n));
    for (std::size_t node = 0; node < nodes; ++node) {
        grid.coords(node, x);
        W.at(grid.steps, node) = spec.phi.eval(grid.T, x, 0.0, {}, spec.controls.at(0), 0);
        if (keep_argmin) {
            auto am = W.argmin_at(grid.steps, node);
            auto u0 = spec.controls.at(0);
            std::copy(u0.begin(), u0.end(), am.begin());
        }
    }
}

} // namespace

HamiltonianParts assemble_hamiltonian(const ProblemSpec& spec, double t,
                                      std::span<const double> x, double v,
                                      std::span<const double> p, std::span<const double> A,
                                      std::size_t u_index, double algebra_tol,
                                      int algebra_max_iter) {
    const auto u = spec.controls.at(u_index);
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);

    std::vector<double> z0(d, 0.0);
    auto sol = algebra::solve_algebra(spec, t, x, v, p, u, u_index, z0, algebra_tol,
                                      algebra_max_iter);

    HamiltonianParts parts;
    parts.V = std::move(sol.V);

    std::vector<double> sig(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            sig[i * d + j] =
                spec.sigma_at(static_cast<int>(i), static_cast<int>(j))
                    .eval(t, x, v, parts.V, u, u_index);

    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double a_ij = A[i * n + j];
            if (a_ij == 0.0) continue;
            double dot = 0.0;
            for (std::size_t l = 0; l < d; ++l) dot += sig[i * d + l] * sig[j * d + l];
            tr += a_ij * dot;
        }
    }
    parts.trace_term = 0.5 * tr;

    double drift = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        drift += p[i] * spec.b[i].eval(t, x, v, parts.V, u, u_index);
    parts.drift_term = drift;

    parts.running_term = spec.g.eval(t, x, v, parts.V, u, u_index);
    parts.H = parts.trace_term + parts.drift_term + parts.running_term;
    return parts;
}

ValueField solve_hjb(const ProblemSpec& spec, const Gate& gate, const SpaceTimeGrid& grid,
                     const HjbOptions& opt) {
    spec.validate();
    grid.validate();
    if (grid.dim() != spec.n)
        throw ConfigError("hjb: grid dimension does not match the problem state dimension");
    gate.require("hjb.solve_hjb");

    const int n = spec.n;
    const std::size_t un = static_cast<std::size_t>(n);
    const std::size_t nodes = grid.space_size();
    const std::size_t nu = spec.controls.size();
    const double dt = grid.dt();

    ValueField W(grid, "hjb", spec.hash.empty() ? problem_hash(spec) : spec.hash);
    const bool keep_argmin = opt.record_argmin && spec.k > 0;
    if (keep_argmin) W.set_argmin_dim(spec.k);
    fill_terminal(spec, W, keep_argmin);

    const auto stride = make_strides(grid);
    std::vector<double> x(un), p_c(un), p_up(un), A(un * un), bpred(un);
    std::vector<double> z0(static_cast<std::size_t>(spec.d), 0.0);

    if (opt.check_cfl) {
        // conservative parabolic bound from the terminal slice:
        // spectral norm of sigma sigma^T <= its trace = |sigma|_F^2
        double bound = 0.0;
        auto term = W.slice(grid.steps);
        for (std::size_t node = 0; node < nodes; ++node) {
            grid.coords(node, x);
            const auto idx = grid.unflatten(node);
            central_derivatives(term, grid, node, idx, stride, p_c, A);
            const double v = term[node];
            for (std::size_t ui = 0; ui < nu; ++ui) {
                const auto u = spec.controls.at(ui);
                auto sol = algebra::solve_algebra(spec, grid.T, x, v, p_c, u, ui, z0,
                                                  opt.algebra_tol, opt.algebra_max_iter);
                double frob2 = 0.0;
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < spec.d; ++j) {
                        const double s =
                            spec.sigma_at(i, j).eval(grid.T, x, v, sol.V, u, ui);
                        frob2 += s * s;
                    }
                bound = std::max(bound, frob2);
            }
        }
        double dx2 = std::numeric_limits<double>::infinity();
        for (int a = 0; a < n; ++a) dx2 = std::min(dx2, grid.dx(a) * grid.dx(a));
        if (bound > 0.0 && dt > dx2 / (bound * n)) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                          "dt=%.6g exceeds the parabolic limit dx_min^2/(n |sigma|^2)=%.6g",
                          dt, dx2 / (bound * n));
            throw CflViolation("hjb", msg);
        }
    }

    for (int ti = grid.steps; ti-- > 0;) {
        const double t_data = grid.t_at(ti + 1);
        auto Snext = W.slice(ti + 1);
        for (std::size_t node = 0; node < nodes; ++node) {
            grid.coords(node, x);
            const auto idx = grid.unflatten(node);
            const double v = Snext[node];
            central_derivatives(Snext, grid, node, idx, stride, p_c, A);

            double best = std::numeric_limits<double>::infinity();
            std::size_t best_u = 0;
            for (std::size_t ui = 0; ui < nu; ++ui) {
                const auto u = spec.controls.at(ui);
                // fix the upwind directions with the drift at the central gradient
                auto pre = algebra::solve_algebra(spec, t_data, x, v, p_c, u, ui, z0,
                                                  opt.algebra_tol, opt.algebra_max_iter);
                for (int a = 0; a < n; ++a)
                    bpred[static_cast<std::size_t>(a)] =
                        spec.b[static_cast<std::size_t>(a)].eval(t_data, x, v, pre.V, u, ui);
                for (int a = 0; a < n; ++a) {
                    const std::size_t ua = static_cast<std::size_t>(a);
                    const Taps tu = d1_upwind(idx[ua], grid.x_nodes[ua], grid.dx(a),
                                              bpred[ua] >= 0.0);
                    p_up[ua] = apply1(Snext, node, tu, stride[ua]);
                }
                const auto parts = assemble_hamiltonian(spec, t_data, x, v, p_up, A, ui,
                                                        opt.algebra_tol, opt.algebra_max_iter);
                if (parts.H < best) {
                    best = parts.H;
                    best_u = ui;
                }
            }

            const double updated = v + dt * best;
            if (!std::isfinite(updated)) {
                char msg[200];
                std::snprintf(msg, sizeof msg,
                              "non-finite update at t=%.6g, node=%zu, x1=%.6g", grid.t_at(ti),
                              node, x.empty() ? 0.0 : x[0]);
                throw SolverError("hjb", msg);
            }
            W.at(ti, node) = updated;
            if (keep_argmin) {
                auto am = W.argmin_at(ti, node);
                auto ub = spec.controls.at(best_u);
                std::copy(ub.begin(), ub.end(), am.begin());
            }
        }
    }
    return W;
}

ResidualReport residual(const ProblemSpec& spec, const ValueField& field,
                        const HjbOptions& opt) {
    spec.validate();
    const auto& grid = field.grid();
    grid.validate();
    if (grid.dim() != spec.n)
        throw ConfigError("hjb: field dimension does not match the problem state dimension");

    const int n = spec.n;
    const std::size_t un = static_cast<std::size_t>(n);
    const std::size_t nodes = grid.space_size();
    const std::size_t nu = spec.controls.size();
    const double dt = grid.dt();
    const auto stride = make_strides(grid);

    ResidualReport rep;
    rep.field = ValueField(grid, "external", field.problem_hash());

    std::vector<double> x(un), p_c(un), A(un * un);
    double sumsq = 0.0;

    for (int ti = 0; ti < grid.steps; ++ti) {
        const double t = grid.t_at(ti);
        auto S = field.slice(ti);
        for (std::size_t node = 0; node < nodes; ++node) {
            const auto idx = grid.unflatten(node);
            bool interior = true;
            for (int a = 0; a < n && interior; ++a) {
                const std::size_t ua = static_cast<std::size_t>(a);
                interior = idx[ua] > 0 && idx[ua] + 1 < grid.x_nodes[ua];
            }
            if (!interior) continue;

            grid.coords(node, x);
            const double v = S[node];
            central_derivatives(S, grid, node, idx, stride, p_c, A);

            double minH = std::numeric_limits<double>::infinity();
            for (std::size_t ui = 0; ui < nu; ++ui) {
                const auto parts = assemble_hamiltonian(spec, t, x, v, p_c, A, ui,
                                                        opt.algebra_tol, opt.algebra_max_iter);
                minH = std::min(minH, parts.H);
            }

            const double res = (field.at(ti + 1, node) - v) / dt + minH;
            rep.field.at(ti, node) = res;
            rep.max_abs = std::max(rep.max_abs, std::abs(res));
            sumsq += res * res;
            ++rep.evaluated;
        }
    }
    rep.l2 = rep.evaluated ? std::sqrt(sumsq / static_cast<double>(rep.evaluated)) : 0.0;
    return rep;
}

} // namespace fblab::hjb
