#pragma once

#include <functional>
#include <span>

#include "fblab/paths.hpp"

// Fully coupled forward-backward solver: Picard iteration over the (y, z)
// feeds, each sweep being one decoupled forward Euler pass plus one backward
// regression pass on common random numbers.

namespace fblab::fbsde {

inline constexpr double kDefaultPicardTol = 1e-6;
inline constexpr int kDefaultPicardMax = 50;

struct PicardOptions {
    double tol = kDefaultPicardTol;
    int max_iter = kDefaultPicardMax;
    paths::RegressionOptions regression;
    /// When b and sigma never read (y, z), a second sweep would reproduce the
    /// first bit for bit; skip it and record a zero gap. Disable to force the
    /// literal recomputation (used by tests).
    bool skip_decoupled_iteration = true;
};

struct Solution {
    paths::StateTrajectories X;
    paths::BackwardSolution YZ;
    std::vector<double> gap_history;
    int picard_iters = 0;
    double y0 = 0.0; // path-averaged Y at the initial time
};

/// Fills `out` (one entry per path) with the terminal condition given the
/// final states.
using TerminalFiller =
    std::function<void(const paths::StateTrajectories&, std::span<double> out)>;

/// Picard iteration with terminal Y = phi(X_T). Feeds start at y = z = 0;
/// the gap is max |dY| plus the path-averaged step-summed |dZ|^2 dt. Throws
/// PicardDiverged after three consecutive gap increases, MaxIterations
/// ("fbsde") on exhaustion, and GateRefused via the gate.
Solution solve_fully_coupled(const ProblemSpec& spec, const Gate& gate,
                             const paths::PathEnsemble& ensemble, std::span<const double> x0,
                             const paths::Policy& policy, const PicardOptions& opt = {});

/// Same solver with an arbitrary terminal functional (slab solves against an
/// interpolated field use this).
Solution solve_with_terminal(const ProblemSpec& spec, const Gate& gate,
                             const paths::PathEnsemble& ensemble, std::span<const double> x0,
                             const paths::Policy& policy, const TerminalFiller& terminal,
                             const PicardOptions& opt = {});

/// Backward semigroup over one slab: solves the coupled system on the
/// ensemble's time grid with terminal psi(X_end) and returns the slab-start
/// value of the backward process.
double backward_semigroup(const ProblemSpec& spec, const Gate& gate,
                          const paths::PathEnsemble& slab_ensemble, std::span<const double> x0,
                          const paths::Policy& policy,
                          const std::function<double(std::span<const double>)>& psi,
                          const PicardOptions& opt = {});

} // namespace fblab::fbsde
