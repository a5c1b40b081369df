#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fblab/core.hpp"
#include "fblab/grid.hpp"

// Monte Carlo path machinery. Storage is structure-of-arrays: for each time
// step and component, the M per-path values are contiguous, so the forward
// sweep and the regression assembly run through the elementwise kernels.
// Every random draw is tied to (seed, path index), never to scheduling.

namespace fblab::paths {

struct PathEnsemble {
    SpaceTimeGrid grid; // time axis of the simulation
    int M = 0;
    int d = 1;
    std::uint64_t seed = 0;
    std::vector<double> dW; // [(step * d + comp) * M + path]

    std::span<const double> dw(int step, int comp) const {
        return {dW.data() + (static_cast<std::size_t>(step) * d + comp) * M,
                static_cast<std::size_t>(M)};
    }
};

/// Draws all Brownian increments. Each path gets a substream derived from
/// (seed, path index); a basic statistical sanity check (per-step mean within
/// 5 sqrt(dt/M), variance within 5 standard errors of dt) guards against a
/// broken generator and can be disabled for tiny ensembles.
PathEnsemble generate_ensemble(const SpaceTimeGrid& grid, int M, int d, std::uint64_t seed,
                               bool check_stats = true);

struct StateTrajectories {
    int n = 1;
    int steps = 0;
    int M = 0;
    std::vector<double> X; // [(step * n + dim) * M + path], step in [0, steps]

    std::span<const double> x(int step, int dim) const {
        return {X.data() + (static_cast<std::size_t>(step) * n + dim) * M,
                static_cast<std::size_t>(M)};
    }
    std::span<double> x(int step, int dim) {
        return {X.data() + (static_cast<std::size_t>(step) * n + dim) * M,
                static_cast<std::size_t>(M)};
    }
};

/// Control selection along paths: a single lattice index, one index per step,
/// or state feedback (queried per path at each step).
class Policy {
public:
    static Policy constant(std::size_t u_index);
    static Policy per_step(std::vector<std::size_t> u_index);
    static Policy feedback(std::function<std::size_t(int, std::span<const double>)> select);

    bool is_feedback() const { return static_cast<bool>(select_); }
    /// Lattice index for non-feedback policies.
    std::size_t uniform_index(int step) const;
    std::size_t index_at(int step, std::span<const double> x) const;

private:
    std::vector<std::size_t> per_step_;
    std::function<std::size_t(int, std::span<const double>)> select_;
};

/// Backward-process values fed into the forward coefficients (Picard input).
/// y has (steps+1) * M entries, z has steps * d * M; either may be absent for
/// a decoupled forward equation.
struct Feeds {
    std::span<const double> y;
    std::span<const double> z;

    bool has_y() const { return !y.empty(); }
    bool has_z() const { return !z.empty(); }
};

/// Euler scheme X_{i+1} = X_i + b dt + sigma dW_i from the common start x0.
/// Throws MissingFeed when b or sigma reads y or z and no feed is supplied.
StateTrajectories forward_euler(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                std::span<const double> x0, const Policy& policy,
                                const Feeds& feeds = {});

struct RegressionOptions {
    int basis_degree = 2;      // 0: intercept, 1: +linear, 2: +squares and pairs
    double ridge = 1e-10;      // scaled by the mean feature magnitude
    double cond_limit = 1e12;  // SingularRegression beyond this
};

struct BackwardSolution {
    std::vector<double> Y; // [(step) * M + path], step in [0, steps]
    std::vector<double> Z; // [(step * d + comp) * M + path], step in [0, steps)
    std::vector<double> condition; // per-step Gram condition estimate

    std::span<const double> y(int step, int M) const {
        return {Y.data() + static_cast<std::size_t>(step) * M, static_cast<std::size_t>(M)};
    }
    std::span<const double> z(int step, int comp, int d, int M) const {
        return {Z.data() + (static_cast<std::size_t>(step) * d + comp) * M,
                static_cast<std::size_t>(M)};
    }
};

/// Least-squares backward sweep: at each step, Z_i regresses
/// Y_{i+1} dW_i / dt on the basis of X_i, then Y_i is the regression
/// prediction of Y_{i+1} plus g dt with the implicit y resolved by one
/// fixed-point sweep. Throws CflViolation when dt L1 >= 1.
BackwardSolution backward_regression(const ProblemSpec& spec, const PathEnsemble& ensemble,
                                     const StateTrajectories& X, const Policy& policy,
                                     std::span<const double> terminal,
                                     const RegressionOptions& options = {});

/// CSV export (t, path_id, x..., y, z...); y and z may be empty.
void export_trajectories(const std::string& path, const SpaceTimeGrid& grid,
                         const StateTrajectories& X, const BackwardSolution* yz, int d);

} // namespace fblab::paths
