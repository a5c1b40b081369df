#pragma once

#include <span>
#include <vector>

#include "fblab/core.hpp"

// Solves the embedded algebra equation V = z0 + p^T sigma(t, x, v, V, u) by
// fixed-point iteration. The map is a contraction with modulus q = L3 |p|;
// callers are guarded by q < 1 (NonContractive otherwise). When sigma does
// not read z the loop collapses to a single evaluation.

namespace fblab::algebra {

inline constexpr double kDefaultTol = 1e-12;
inline constexpr int kDefaultMaxIter = 200;

struct Solution {
    std::vector<double> V; // 1 x d row
    int iterations = 0;
    double residual = 0.0;    // | V - z0 - p^T sigma(..., V, ...) |
    double contraction = 0.0; // last observed gap ratio (0 when < 2 gaps)
};

Solution solve_algebra(const ProblemSpec& spec, double t, std::span<const double> x, double v,
                       std::span<const double> p, std::span<const double> u,
                       std::size_t u_index, std::span<const double> z0,
                       double tol = kDefaultTol, int max_iter = kDefaultMaxIter);

struct RegularityProbe {
    double growth = 0.0;       // max |V| / (1 + |x| + |v| + |z0|)
    double lipschitz_z0 = 0.0; // max |V(z0) - V(z0')| / |z0 - z0'|
    long skipped = 0;          // probes with q >= 1 or domain errors
};

RegularityProbe probe_algebra_regularity(const ProblemSpec& spec, long samples = 2000,
                                         double box_radius = 1.0, std::uint64_t seed = 1,
                                         double p_radius = 0.5);

} // namespace fblab::algebra
