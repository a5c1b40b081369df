#include "fblab/paths.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include "fblab/kernels.hpp"
#include "fblab/parallel.hpp"
#include "fblab/rng.hpp"

namespace fblab::paths {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

} // namespace

PathEnsemble generate_ensemble(const SpaceTimeGrid& grid, int M, int d, std::uint64_t seed,
                               bool check_stats) {
    if (M < 1) throw ConfigError("ensemble: M must be >= 1");
    if (d < 1) throw ConfigError("ensemble: d must be >= 1");
    PathEnsemble e;
    e.grid = grid;
    e.M = M;
    e.d = d;
    e.seed = seed;
    const int steps = grid.steps;
    e.dW.resize(static_cast<std::size_t>(steps) * d * M);
    const double scale = std::sqrt(grid.dt());

    parallel_for(static_cast<std::size_t>(M), [&](std::size_t begin, std::size_t end) {
        for (std::size_t path = begin; path < end; ++path) {
            rng::Stream stream(seed, path);
            for (int i = 0; i < steps; ++i)
                for (int j = 0; j < d; ++j)
                    e.dW[(static_cast<std::size_t>(i) * d + j) * M + path] =
                        scale * stream.next_normal();
        }
    });

    if (check_stats && M >= 8) {
        const double dt = grid.dt();
        const double mean_bound = 5.0 * std::sqrt(dt / M);
        const double var_bound = 5.0 * dt * std::sqrt(2.0 / (M - 1));
        for (int i = 0; i < steps; ++i) {
            for (int j = 0; j < d; ++j) {
                const auto w = e.dw(i, j);
                const double mean = kernels::pairwise_sum(w) / M;
                if (std::fabs(mean) > mean_bound)
                    throw SolverError("paths",
                                      "increment mean " + std::to_string(mean) + " at step " +
                                          std::to_string(i) + " fails the 5-sigma sanity bound");
                const double sq = kernels::pairwise_dot(w, w);
                const double var = (sq - M * mean * mean) / (M - 1);
                if (std::fabs(var - dt) > var_bound)
                    throw SolverError("paths",
                                      "increment variance " + std::to_string(var) + " at step " +
                                          std::to_string(i) + " fails the 5-sigma sanity bound");
            }
        }
    }
    return e;
}

// --- Policy ---

Policy Policy::constant(std::size_t u_index) {
    Policy p;
    p.per_step_ = {u_index};
    return p;
}

Policy Policy::per_step(std::vector<std::size_t> u_index) {
    if (u_index.empty()) throw ConfigError("policy: per-step index list is empty");
    Policy p;
    p.per_step_ = std::move(u_index);
    return p;
}

Policy Policy::feedback(std::function<std::size_t(int, std::span<const double>)> select) {
    Policy p;
    p.select_ = std::move(select);
    return p;
}

std::size_t Policy::uniform_index(int step) const {
    if (per_step_.size() == 1) return per_step_[0];
    return per_step_[static_cast<std::size_t>(step) % per_step_.size()];
}

std::size_t Policy::index_at(int step, std::span<const double> x) const {
    if (select_) return select_(step, x);
    return uniform_index(step);
}

// --- shared step machinery ---

namespace {

/// Per-step control bindings for batch evaluation. Uniform policies broadcast
/// the lattice point; feedback policies materialize per-path control values
/// and indices from the current states.
struct StepControls {
    std::vector<expr::Binding> u;
    std::vector<std::size_t> index_store;
    std::span<const std::size_t> u_index;
    std::vector<std::vector<double>> value_store;

    void build(const ProblemSpec& spec, const Policy& policy, int step,
               const StateTrajectories* X, int M) {
        const std::size_t k = static_cast<std::size_t>(spec.k);
        u.assign(k, expr::Binding::scalar(0.0));
        if (!policy.is_feedback()) {
            const std::size_t ui = policy.uniform_index(step);
            if (ui >= spec.controls.size())
                throw ConfigError("policy: control index out of lattice range");
            const auto pt = spec.controls.at(ui);
            for (std::size_t c = 0; c < k; ++c) u[c] = expr::Binding::scalar(pt[c]);
            index_store.assign(1, ui);
            u_index = {index_store.data(), 1};
            return;
        }
        if (!X) throw SolverError("paths", "feedback policy needs path states");
        const std::size_t m = static_cast<std::size_t>(M);
        index_store.resize(m);
        value_store.assign(k, std::vector<double>(m));
        std::vector<double> xbuf(static_cast<std::size_t>(spec.n));
        for (std::size_t path = 0; path < m; ++path) {
            for (int dim = 0; dim < spec.n; ++dim)
                xbuf[static_cast<std::size_t>(dim)] = X->x(step, dim)[path];
            const std::size_t ui = policy.index_at(step, xbuf);
            if (ui >= spec.controls.size())
                throw ConfigError("policy: control index out of lattice range");
            index_store[path] = ui;
            const auto pt = spec.controls.at(ui);
            for (std::size_t c = 0; c < k; ++c) value_store[c][path] = pt[c];
        }
        for (std::size_t c = 0; c < k; ++c) u[c] = expr::Binding::array(value_store[c].data());
        u_index = index_store;
    }
};

expr::BatchPoint make_batch_point(const ProblemSpec& spec, int M, double t,
                                  const StateTrajectories& X, int step, const Feeds& feeds,
                                  int ensemble_d, const StepControls& controls) {
    expr::BatchPoint p;
    p.m = static_cast<std::size_t>(M);
    p.t = expr::Binding::scalar(t);
    p.x.resize(static_cast<std::size_t>(spec.n));
    for (int dim = 0; dim < spec.n; ++dim)
        p.x[static_cast<std::size_t>(dim)] = expr::Binding::array(X.x(step, dim));
    p.y = feeds.has_y()
              ? expr::Binding::array(feeds.y.data() + static_cast<std::size_t>(step) * M)
              : expr::Binding::scalar(0.0);
    p.z.assign(static_cast<std::size_t>(spec.d), expr::Binding::scalar(0.0));
    if (feeds.has_z())
        for (int j = 0; j < spec.d; ++j)
            p.z[static_cast<std::size_t>(j)] = expr::Binding::array(
                feeds.z.data() + (static_cast<std::size_t>(step) * ensemble_d + j) * M);
    p.u = controls.u;
    return p;
}

} // namespace

StateTrajectories forward_euler(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                std::span<const double> x0, const Policy& policy,
                                const Feeds& feeds) {
    if (static_cast<int>(x0.size()) != spec.n)
        throw ConfigError("forward_euler: x0 has wrong dimension");
    if (ensemble.d != spec.d)
        throw ConfigError("forward_euler: ensemble noise dimension != problem d");

    bool needs_y = false, needs_z = false;
    for (const auto& c : spec.b) {
        needs_y |= c.uses_y();
        needs_z |= c.uses_z();
    }
    needs_y |= spec.sigma_uses_y();
    needs_z |= spec.sigma_uses_z();
    if (needs_y && !feeds.has_y())
        throw MissingFeed("b or sigma reads y but no y feed was supplied");
    if (needs_z && !feeds.has_z())
        throw MissingFeed("b or sigma reads z but no z feed was supplied");

    const int M = ensemble.M;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();

    StateTrajectories traj;
    traj.n = spec.n;
    traj.steps = steps;
    traj.M = M;
    traj.X.resize(static_cast<std::size_t>(steps + 1) * spec.n * M);
    for (int dim = 0; dim < spec.n; ++dim)
        kernels::fill(traj.x(0, dim), x0[static_cast<std::size_t>(dim)]);

    expr::Workspace ws;
    std::vector<double> coef(static_cast<std::size_t>(M));
    StepControls controls;

    for (int i = 0; i < steps; ++i) {
        controls.build(spec, policy, i, &traj, M);
        const expr::BatchPoint p =
            make_batch_point(spec, M, ensemble.grid.t_at(i), traj, i, feeds, ensemble.d, controls);
        for (int dim = 0; dim < spec.n; ++dim) {
            auto next = traj.x(i + 1, dim);
            kernels::copy(traj.x(i, dim), next);
            spec.b[static_cast<std::size_t>(dim)].eval_batch(p, controls.u_index, coef, ws);
            kernels::acc_scaled(next, coef, dt);
            for (int j = 0; j < spec.d; ++j) {
                spec.sigma_at(dim, j).eval_batch(p, controls.u_index, coef, ws);
                kernels::acc_prod(next, coef, ensemble.dw(i, j));
            }
        }
    }
    return traj;
}

// --- regression ---

namespace {

struct Features {
    std::vector<std::vector<double>> cols; // materialized columns, col 0 = 1
    std::vector<int> kept;                 // indices of non-degenerate columns

    void build(const StateTrajectories& X, int step, int degree) {
        const int M = X.M;
        const int n = X.n;
        int count = 1 + (degree >= 1 ? n : 0) + (degree >= 2 ? n + n * (n - 1) / 2 : 0);
        cols.resize(static_cast<std::size_t>(count));
        for (auto& c : cols) c.resize(static_cast<std::size_t>(M));
        kernels::fill(cols[0], 1.0);
        int at = 1;
        if (degree >= 1)
            for (int a = 0; a < n; ++a) kernels::copy(X.x(step, a), cols[static_cast<std::size_t>(at++)]);
        if (degree >= 2) {
            for (int a = 0; a < n; ++a)
                kernels::mul(X.x(step, a), X.x(step, a), cols[static_cast<std::size_t>(at++)]);
            for (int a = 0; a < n; ++a)
                for (int bdim = a + 1; bdim < n; ++bdim)
                    kernels::mul(X.x(step, a), X.x(step, bdim),
                                 cols[static_cast<std::size_t>(at++)]);
        }
        // Keep the intercept always; drop columns with no spread (all paths at
        // one point), which otherwise make the Gram exactly singular.
        kept.clear();
        kept.push_back(0);
        for (std::size_t c = 1; c < cols.size(); ++c) {
            double lo = cols[c][0], hi = cols[c][0];
            for (double v : cols[c]) {
                lo = v < lo ? v : lo;
                hi = v > hi ? v : hi;
            }
            const double scale = std::fmax(1.0, std::fmax(std::fabs(lo), std::fabs(hi)));
            if (hi - lo > 1e-12 * scale) kept.push_back(static_cast<int>(c));
        }
    }
};

/// LDL^T factorization of a symmetric matrix stored row-major; returns false
/// when a pivot collapses. D doubles as the condition estimate source.
bool ldlt_factor(std::vector<double>& A, int P, std::vector<double>& D) {
    D.assign(static_cast<std::size_t>(P), 0.0);
    for (int j = 0; j < P; ++j) {
        double dj = A[static_cast<std::size_t>(j * P + j)];
        for (int k = 0; k < j; ++k) {
            const double l = A[static_cast<std::size_t>(j * P + k)];
            dj -= l * l * D[static_cast<std::size_t>(k)];
        }
        if (!(dj > 0.0)) return false;
        D[static_cast<std::size_t>(j)] = dj;
        for (int i = j + 1; i < P; ++i) {
            double v = A[static_cast<std::size_t>(i * P + j)];
            for (int k = 0; k < j; ++k)
                v -= A[static_cast<std::size_t>(i * P + k)] *
                     A[static_cast<std::size_t>(j * P + k)] * D[static_cast<std::size_t>(k)];
            A[static_cast<std::size_t>(i * P + j)] = v / dj;
        }
    }
    return true;
}

void ldlt_solve(const std::vector<double>& A, const std::vector<double>& D, int P,
                std::span<double> rhs) {
    for (int i = 0; i < P; ++i)
        for (int k = 0; k < i; ++k)
            rhs[static_cast<std::size_t>(i)] -=
                A[static_cast<std::size_t>(i * P + k)] * rhs[static_cast<std::size_t>(k)];
    for (int i = 0; i < P; ++i) rhs[static_cast<std::size_t>(i)] /= D[static_cast<std::size_t>(i)];
    for (int i = P - 1; i >= 0; --i)
        for (int k = i + 1; k < P; ++k)
            rhs[static_cast<std::size_t>(i)] -=
                A[static_cast<std::size_t>(k * P + i)] * rhs[static_cast<std::size_t>(k)];
}

/// Ridge-regularized normal equations with deterministic pairwise reductions.
class StepRegression {
public:
    StepRegression(const Features& f, int M, const RegressionOptions& opt, int step)
        : f_(f), M_(M) {
        const int P = static_cast<int>(f.kept.size());
        gram_.assign(static_cast<std::size_t>(P) * P, 0.0);
        for (int a = 0; a < P; ++a)
            for (int b = 0; b <= a; ++b) {
                const double v =
                    kernels::pairwise_dot(f.cols[static_cast<std::size_t>(f.kept[a])],
                                          f.cols[static_cast<std::size_t>(f.kept[b])]) /
                    M;
                gram_[static_cast<std::size_t>(a * P + b)] = v;
                gram_[static_cast<std::size_t>(b * P + a)] = v;
            }
        double trace = 0.0;
        for (int a = 0; a < P; ++a) trace += gram_[static_cast<std::size_t>(a * P + a)];
        const double ridge = opt.ridge * std::fmax(trace / P, 1e-300);
        for (int a = 0; a < P; ++a) gram_[static_cast<std::size_t>(a * P + a)] += ridge;

        if (!ldlt_factor(gram_, P, diag_))
            throw SingularRegression(step, std::numeric_limits<double>::infinity());
        double dmin = diag_[0], dmax = diag_[0];
        for (double v : diag_) {
            dmin = v < dmin ? v : dmin;
            dmax = v > dmax ? v : dmax;
        }
        cond_ = dmax / dmin;
        if (!(cond_ < opt.cond_limit)) throw SingularRegression(step, cond_);
    }

    double condition() const { return cond_; }

    /// Writes the fitted values of `target` at the sample points into `out`.
    void predict(std::span<const double> target, std::span<double> out) {
        const int P = static_cast<int>(f_.kept.size());
        std::vector<double> beta(static_cast<std::size_t>(P));
        for (int a = 0; a < P; ++a)
            beta[static_cast<std::size_t>(a)] =
                kernels::pairwise_dot(f_.cols[static_cast<std::size_t>(f_.kept[a])], target) / M_;
        ldlt_solve(gram_, diag_, P, beta);
        kernels::fill(out, 0.0);
        for (int a = 0; a < P; ++a)
            kernels::acc_scaled(out, f_.cols[static_cast<std::size_t>(f_.kept[a])],
                                beta[static_cast<std::size_t>(a)]);
    }

private:
    const Features& f_;
    int M_;
    std::vector<double> gram_;
    std::vector<double> diag_;
    double cond_ = 0.0;
};

} // namespace

BackwardSolution backward_regression(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                     const StateTrajectories& X, const Policy& policy,
                                     std::span<const double> terminal,
                                     const RegressionOptions& options) {
    const int M = ensemble.M;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();
    if (static_cast<int>(terminal.size()) != M)
        throw ConfigError("backward_regression: terminal values must have one entry per path");
    if (dt * spec.L1 >= 1.0)
        throw CflViolation("paths", "dt * L1 = " + std::to_string(dt * spec.L1) +
                                        " >= 1; refine the time grid");

    BackwardSolution sol;
    sol.Y.resize(static_cast<std::size_t>(steps + 1) * M);
    sol.Z.resize(static_cast<std::size_t>(steps) * spec.d * M);
    sol.condition.assign(static_cast<std::size_t>(steps), 0.0);
    kernels::copy(terminal, {sol.Y.data() + static_cast<std::size_t>(steps) * M,
                             static_cast<std::size_t>(M)});

    expr::Workspace ws;
    Features features;
    StepControls controls;
    std::vector<double> target(static_cast<std::size_t>(M));
    std::vector<double> gbuf(static_cast<std::size_t>(M));

    for (int i = steps - 1; i >= 0; --i) {
        features.build(X, i, options.basis_degree);
        StepRegression reg(features, M, options, i);
        sol.condition[static_cast<std::size_t>(i)] = reg.condition();

        const std::span<const double> y_next{sol.Y.data() + static_cast<std::size_t>(i + 1) * M,
                                             static_cast<std::size_t>(M)};
        // Z first: project Y_{i+1} dW_i / dt on the basis.
        for (int j = 0; j < spec.d; ++j) {
            kernels::mul(y_next, ensemble.dw(i, j), target);
            kernels::affine(target, 1.0 / dt, 0.0, target);
            std::span<double> zij{sol.Z.data() + (static_cast<std::size_t>(i) * spec.d + j) * M,
                                  static_cast<std::size_t>(M)};
            reg.predict(target, zij);
        }
        // Predictor for Y, then one implicit sweep through g.
        std::span<double> yi{sol.Y.data() + static_cast<std::size_t>(i) * M,
                             static_cast<std::size_t>(M)};
        reg.predict(y_next, yi);

        controls.build(spec, policy, i, &X, M);
        expr::BatchPoint p;
        p.m = static_cast<std::size_t>(M);
        p.t = expr::Binding::scalar(ensemble.grid.t_at(i));
        p.x.resize(static_cast<std::size_t>(spec.n));
        for (int dim = 0; dim < spec.n; ++dim)
            p.x[static_cast<std::size_t>(dim)] = expr::Binding::array(X.x(i, dim));
        p.y = expr::Binding::array(yi.data());
        p.z.resize(static_cast<std::size_t>(spec.d));
        for (int j = 0; j < spec.d; ++j)
            p.z[static_cast<std::size_t>(j)] = expr::Binding::array(
                sol.Z.data() + (static_cast<std::size_t>(i) * spec.d + j) * M);
        p.u = controls.u;
        spec.g.eval_batch(p, controls.u_index, gbuf, ws);
        kernels::acc_scaled(yi, gbuf, dt);
    }
    return sol;
}

void export_trajectories(const std::string& path, const SpaceTimeGrid& grid,
                         const StateTrajectories& X, const BackwardSolution* yz, int d) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "w"));
    if (!f) throw ConfigError("cannot open '" + path + "'");
    std::fputs("t,path_id", f.get());
    for (int dim = 1; dim <= X.n; ++dim) std::fprintf(f.get(), ",x%d", dim);
    if (yz) {
        std::fputs(",y", f.get());
        for (int j = 1; j <= d; ++j) std::fprintf(f.get(), ",z%d", j);
    }
    std::fputc('\n', f.get());
    for (int i = 0; i <= X.steps; ++i) {
        const double t = grid.t_at(i);
        for (int path = 0; path < X.M; ++path) {
            std::fprintf(f.get(), "%.17g,%d", t, path);
            for (int dim = 0; dim < X.n; ++dim)
                std::fprintf(f.get(), ",%.17g", X.x(i, dim)[static_cast<std::size_t>(path)]);
            if (yz) {
                std::fprintf(f.get(), ",%.17g",
                             yz->Y[static_cast<std::size_t>(i) * X.M + path]);
                for (int j = 0; j < d; ++j) {
                    if (i < X.steps)
                        std::fprintf(f.get(), ",%.17g",
                                     yz->Z[(static_cast<std::size_t>(i) * d + j) * X.M + path]);
                    else
                        std::fputc(',', f.get());
                }
            }
            std::fputc('\n', f.get());
        }
    }
}

} // namespace fblab::paths
