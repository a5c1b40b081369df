#pragma once

#include "fblab/hjb.hpp"
#include "fblab/value.hpp"

// Candidate-field verification: mollification with derivative fields,
// piecewise-constant control selection against a candidate, uniqueness
// cross-checks through auxiliary frozen-coefficient problems, and the
// pathwise generator residual.

namespace fblab::verify {

/// A field bundled with first and second derivatives on the same grid.
/// Either produced by mollify() or filled directly from analytic formulas.
struct SmoothField {
    ValueField value;
    ValueField time_derivative;
    std::vector<ValueField> gradient; // n entries
    std::vector<ValueField> hessian;  // n*n entries, row-major, symmetric

    double value_at(double t, std::span<const double> x) const;
    double dt_at(double t, std::span<const double> x) const;
    void gradient_at(double t, std::span<const double> x, std::span<double> out) const;
    void hessian_at(double t, std::span<const double> x, std::span<double> out) const;

    /// max over grid nodes of the euclidean gradient norm.
    double gradient_norm_inf() const;
};

struct MollifiedField : SmoothField {
    double epsilon = 0.0;
};

/// Discrete convolution with the compact bump (1 - s^2)^4, tensor product over
/// time and space. Weights are renormalized so constants reproduce exactly and
/// linear ramps get exact first derivatives; near the boundary the source is
/// extended by clamping. Throws ResolutionError when any grid spacing exceeds
/// epsilon / 4.
MollifiedField mollify(const ValueField& source, double epsilon);

struct PrUmOptions {
    int m = 4;              // time slabs
    int substeps = 4;       // Euler steps per slab
    int M = 4000;           // paths for the closed-loop simulation
    int selection_M = 1000; // paths per slab when scanning controls
    std::uint64_t seed = 1;
    fbsde::PicardOptions picard;
};

struct PrUmReport {
    double rho = 0.0;     // mean integral of (Y - W)^2 dt plus |Y_t - W(t, x)|
    double rho_stderr = 0.0; // MC standard error of the rho estimate
    double y_start = 0.0; // simulated initial backward value
    double w_start = 0.0; // candidate at (t, x)
    std::vector<double> slab_gaps; // mean |Y - W| at each slab boundary (m + 1 entries)
};

/// Piecewise-constant control selection against a candidate field: per slab
/// and per grid node pick the lattice control minimizing the slab backward
/// value with the candidate as slab terminal; then run the coupled system
/// under that (nearest-node) feedback policy and measure how far Y strays
/// from the candidate along the paths.
PrUmReport pr_um_pipeline(const ProblemSpec& spec, const Gate& gate,
                          const ValueField& candidate, double t, std::span<const double> x,
                          const PrUmOptions& opt = {});

struct UniquenessOptions {
    double tol = 5e-2;      // verdict tolerance on node gaps
    double lip_bound = 0.0; // candidate Lipschitz precondition; 0 = use the gate's L_W
    value::DppOptions dpp;
};

struct UniquenessReport {
    std::string check;   // "frozen_sigma" or "full"
    std::string verdict; // "equal", "consistent" or "inconsistent"
    double gap_min = 0.0; // min over nodes of candidate - solver value (signed)
    double gap_max = 0.0; // max over nodes of candidate - solver value (signed)
    double aux_gap = 0.0; // max |auxiliary-problem value - candidate|
    double grad_inf = 0.0; // full check only: mollified gradient sup norm
    double z_gap = 0.0;    // full check only: mean integral |Zbar - Vtilde|^2
    double tol = 0.0;
    std::uint64_t seed = 0;
};

/// Dominance test for a z-free diffusion: freeze sigma's y slot along the
/// candidate, solve both the original and the frozen problem by dynamic
/// programming, and compare. Control-free problems must match two-sided
/// ("equal"); controlled problems must dominate ("consistent" when the solver
/// value never exceeds the candidate beyond tolerance). Throws NotLipschitz
/// when the candidate's difference quotients exceed the Lipschitz bound.
UniquenessReport uniqueness_check_frozen_sigma(const ProblemSpec& spec, const Gate& gate,
                                               const ValueField& candidate,
                                               const UniquenessOptions& opt = {});

struct FullUniquenessOptions {
    double epsilon = 0.1; // mollification radius
    double tol = 5e-2;
    value::DppOptions dpp;
    int z_paths = 2000; // closed-loop sample for the z-consistency diagnostic
    int z_steps = 32;
    std::uint64_t z_seed = 7;
    double algebra_tol = algebra::kDefaultTol;
    int algebra_max_iter = algebra::kDefaultMaxIter;
};

/// Fully coupled variant: mollify the candidate, solve the embedded algebra
/// equation at its derivatives to get the implied volatility argument, freeze
/// b and sigma at those fields, and compare the candidate against both the
/// original and the frozen problem. Throws GradientTooLarge when the mollified
/// gradient breaks the contraction condition |DW| L3 < 1.
UniquenessReport uniqueness_check_full(const ProblemSpec& spec, const Gate& gate,
                                       const ValueField& candidate,
                                       const FullUniquenessOptions& opt = {});

struct ItoOptions {
    int M = 1000;
    int steps = 64;
    std::uint64_t seed = 1;
    fbsde::PicardOptions picard;
    double algebra_tol = algebra::kDefaultTol;
    int algebra_max_iter = algebra::kDefaultMaxIter;
};

struct ItoReport {
    double min_residual = 0.0;     // min over paths and steps of dW/dt + H
    double mean_residual = 0.0;
    double max_abs_residual = 0.0;
    double terminal_gap = 0.0;     // max over paths of |W(T, X_T) - phi(X_T)|
    long samples = 0;              // in-box evaluations
    long outside = 0;              // skipped points beyond the candidate's box
};

/// Generator residual along simulated closed-loop paths: dW/dt + H evaluated
/// at the candidate's derivatives. For the exact solution this vanishes
/// identically; for a strict supersolution it stays nonnegative.
ItoReport ito_residual(const ProblemSpec& spec, const Gate& gate, const SmoothField& candidate,
                       double t, std::span<const double> x, const paths::Policy& policy,
                       const ItoOptions& opt = {});

} // namespace fblab::verify
