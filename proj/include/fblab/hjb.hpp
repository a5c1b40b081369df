#pragma once

#include "fblab/algebra.hpp"
#include "fblab/field.hpp"

// Finite-difference solver for the backward nonlinear parabolic equation
//   dW/dt + min_u H(t, x, W, DW, D^2 W, u) = 0,  W(T, .) = phi,
// where the diffusion argument inside H is the solved implicit-volatility row
// from the algebra module. Explicit Euler in time, upwind first derivatives
// chosen by the sign of the drift at a central-difference predictor, one-sided
// stencils at the spatial boundary.

namespace fblab::hjb {

struct HamiltonianParts {
    double H = 0.0;
    std::vector<double> V;    // solved volatility row sigma~ (z-argument fixed point), length d
    double trace_term = 0.0;  // 0.5 * tr[sigma sigma^T A]
    double drift_term = 0.0;  // p . b
    double running_term = 0.0; // g
};

/// Evaluate H at one point for one control. `A` is the n x n Hessian argument,
/// row-major, assumed symmetric. The z-argument is the algebra solution seeded
/// at z0 = 0 (ties the diffusion to the gradient p).
HamiltonianParts assemble_hamiltonian(const ProblemSpec& spec, double t,
                                      std::span<const double> x, double v,
                                      std::span<const double> p,
                                      std::span<const double> A,
                                      std::size_t u_index,
                                      double algebra_tol = algebra::kDefaultTol,
                                      int algebra_max_iter = algebra::kDefaultMaxIter);

struct HjbOptions {
    double algebra_tol = algebra::kDefaultTol;
    int algebra_max_iter = algebra::kDefaultMaxIter;
    bool check_cfl = true;   // refuse grids whose time step is parabolically unstable
    bool record_argmin = true;
};

/// Backward explicit sweep on the grid. Throws CflViolation when
/// dt > dx_min^2 / (n * max |sigma sigma^T|) (estimated at the terminal slice),
/// and SolverError naming the first node where the update turns non-finite.
ValueField solve_hjb(const ProblemSpec& spec, const Gate& gate,
                     const SpaceTimeGrid& grid, const HjbOptions& opt = {});

struct ResidualReport {
    ValueField field;     // pointwise residual; boundary and terminal entries are 0
    double max_abs = 0.0; // over evaluated (interior, non-terminal) nodes
    double l2 = 0.0;      // root-mean-square over the same set
    std::size_t evaluated = 0;
};

/// Discrete residual dW/dt (forward difference) + min_u H with central
/// derivatives, evaluated at interior nodes of any value field on this
/// problem's state space.
ResidualReport residual(const ProblemSpec& spec, const ValueField& field,
                        const HjbOptions& opt = {});

} // namespace fblab::hjb
