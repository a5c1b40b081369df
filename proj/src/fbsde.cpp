#include "fblab/fbsde.hpp"

#include <cmath>

#include "fblab/kernels.hpp"

namespace fblab::fbsde {

namespace {

double feed_gap(const paths::BackwardSolution& next, const std::vector<double>& y_feed,
                const std::vector<double>& z_feed, int steps, int d, int M, double dt) {
    double dy_max = 0.0;
    for (std::size_t i = 0; i < next.Y.size(); ++i) {
        const double delta = std::fabs(next.Y[i] - y_feed[i]);
        if (delta > dy_max) dy_max = delta;
    }
    // Path-averaged sum_i |dZ_i|^2 dt, reduced with the fixed pairwise tree.
    thread_local std::vector<double> scratch;
    double dz_acc = 0.0;
    const std::size_t m = static_cast<std::size_t>(M);
    for (int i = 0; i < steps; ++i) {
        for (int j = 0; j < d; ++j) {
            const std::size_t off = (static_cast<std::size_t>(i) * d + j) * m;
            scratch.resize(m);
            kernels::sub({next.Z.data() + off, m}, {z_feed.data() + off, m}, scratch);
            kernels::mul(scratch, scratch, scratch);
            dz_acc += kernels::pairwise_fold(scratch) * dt;
        }
    }
    return dy_max + dz_acc / M;
}

} // namespace

Solution solve_with_terminal(const ProblemSpec& spec, const Gate& gate,
                             const paths::PathEnsemble& ensemble, std::span<const double> x0,
                             const paths::Policy& policy, const TerminalFiller& terminal,
                             const PicardOptions& opt) {
    gate.require("fbsde.solve_fully_coupled");

    const int M = ensemble.M;
    const int steps = ensemble.grid.steps;
    const double dt = ensemble.grid.dt();
    const bool coupled = spec.forward_coupled();

    Solution sol;
    std::vector<double> y_feed(static_cast<std::size_t>(steps + 1) * M, 0.0);
    std::vector<double> z_feed(static_cast<std::size_t>(steps) * spec.d * M, 0.0);
    std::vector<double> term(static_cast<std::size_t>(M));

    int rising = 0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        paths::Feeds feeds;
        if (coupled) feeds = {y_feed, z_feed};
        sol.X = paths::forward_euler(spec, ensemble, x0, policy, feeds);
        terminal(sol.X, term);
        sol.YZ = paths::backward_regression(spec, ensemble, sol.X, policy, term, opt.regression);
        sol.picard_iters = it;

        const double gap = feed_gap(sol.YZ, y_feed, z_feed, steps, spec.d, M, dt);
        if (!sol.gap_history.empty() && gap > sol.gap_history.back()) {
            if (++rising >= 3) {
                sol.gap_history.push_back(gap);
                throw PicardDiverged(sol.gap_history);
            }
        } else {
            rising = 0;
        }
        sol.gap_history.push_back(gap);

        y_feed = sol.YZ.Y;
        z_feed = sol.YZ.Z;

        if (!coupled && opt.skip_decoupled_iteration) {
            // b and sigma never read the feeds, so the next sweep would be
            // bit-identical; record the exact zero gap instead of rerunning.
            sol.gap_history.push_back(0.0);
            sol.picard_iters = it + 1;
            break;
        }
        if (gap <= opt.tol) break;
        if (it == opt.max_iter) throw MaxIterations("fbsde", opt.max_iter);
    }

    sol.y0 = kernels::pairwise_sum({sol.YZ.Y.data(), static_cast<std::size_t>(M)}) / M;
    return sol;
}

Solution solve_fully_coupled(const ProblemSpec& spec, const Gate& gate,
                             const paths::PathEnsemble& ensemble, std::span<const double> x0,
                             const paths::Policy& policy, const PicardOptions& opt) {
    expr::Workspace ws;
    TerminalFiller phi_terminal = [&spec, &ws](const paths::StateTrajectories& X,
                                               std::span<double> out) {
        expr::BatchPoint p;
        p.m = out.size();
        p.t = expr::Binding::scalar(0.0);
        p.x.resize(static_cast<std::size_t>(X.n));
        for (int dim = 0; dim < X.n; ++dim)
            p.x[static_cast<std::size_t>(dim)] = expr::Binding::array(X.x(X.steps, dim));
        p.y = expr::Binding::scalar(0.0);
        p.z.assign(static_cast<std::size_t>(spec.d), expr::Binding::scalar(0.0));
        p.u.assign(static_cast<std::size_t>(spec.k), expr::Binding::scalar(0.0));
        spec.phi.eval_batch(p, {}, out, ws);
    };
    return solve_with_terminal(spec, gate, ensemble, x0, policy, phi_terminal, opt);
}

double backward_semigroup(const ProblemSpec& spec, const Gate& gate,
                          const paths::PathEnsemble& slab_ensemble, std::span<const double> x0,
                          const paths::Policy& policy,
                          const std::function<double(std::span<const double>)>& psi,
                          const PicardOptions& opt) {
    TerminalFiller terminal = [&spec, &psi](const paths::StateTrajectories& X,
                                            std::span<double> out) {
        std::vector<double> xbuf(static_cast<std::size_t>(spec.n));
        for (std::size_t path = 0; path < out.size(); ++path) {
            for (int dim = 0; dim < spec.n; ++dim)
                xbuf[static_cast<std::size_t>(dim)] = X.x(X.steps, dim)[path];
            out[path] = psi(xbuf);
        }
    };
    return solve_with_terminal(spec, gate, slab_ensemble, x0, policy, terminal, opt).y0;
}

} // namespace fblab::fbsde
