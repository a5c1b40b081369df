#pragma once

#include <span>
#include <string>
#include <vector>

#include "fblab/grid.hpp"

namespace fblab {

/// A scalar field sampled on a SpaceTimeGrid: multilinear interpolation in
/// space, piecewise linear in time. Carries enough metadata to round-trip
/// through CSV + JSON and to tell which solver produced it.
class ValueField {
public:
    ValueField() = default;
    ValueField(SpaceTimeGrid grid, std::string provenance, std::string problem_hash);

    const SpaceTimeGrid& grid() const { return grid_; }
    const std::string& provenance() const { return provenance_; }
    const std::string& problem_hash() const { return problem_hash_; }

    double at(int ti, std::size_t node) const { return values_[index(ti, node)]; }
    double& at(int ti, std::size_t node) { return values_[index(ti, node)]; }
    std::span<const double> slice(int ti) const {
        return {values_.data() + index(ti, 0), grid_.space_size()};
    }
    std::span<double> slice(int ti) {
        return {values_.data() + index(ti, 0), grid_.space_size()};
    }

    /// Multilinear interpolation on one time slice. With clamp = false, a
    /// point beyond the box (past a relative tolerance) throws
    /// InterpolationOutOfBounds; with clamp = true it is projected onto the
    /// boundary first.
    double interp_space(int ti, std::span<const double> x, bool clamp = true) const;

    /// Space-time interpolation (linear between time slices, t clamped to [t0, T]).
    double interp(double t, std::span<const double> x, bool clamp = true) const;

    /// Optional recorded minimizing control per (time, node); empty when the
    /// producer ran without a control scan.
    bool has_argmin() const { return !argmin_u_.empty(); }
    int control_dim() const { return k_; }
    void set_argmin_dim(int k);
    std::span<double> argmin_at(int ti, std::size_t node);
    std::span<const double> argmin_at(int ti, std::size_t node) const;

    /// Writes <base>.csv (t, x..., W[, argmin_u...]) and <base>.json (grid,
    /// hash, provenance). Full-precision decimal floats; byte-stable. The
    /// value column is named "W" unless overridden (residual exports).
    void save(const std::string& base_path, const std::string& value_column = "W") const;
    static ValueField load(const std::string& base_path);

    std::vector<double>& raw_values() { return values_; }
    const std::vector<double>& raw_values() const { return values_; }

private:
    std::size_t index(int ti, std::size_t node) const {
        return static_cast<std::size_t>(ti) * grid_.space_size() + node;
    }

    SpaceTimeGrid grid_;
    std::vector<double> values_;
    std::vector<double> argmin_u_;
    int k_ = 0;
    std::string provenance_ = "external";
    std::string problem_hash_;
};

/// max |dW| / dx over spatially adjacent node pairs, and
/// max |dW| / ((1 + |x|) sqrt(dt)) over temporally adjacent pairs.
struct RegularityEstimate {
    double lip_x = 0.0;
    double holder_t = 0.0;
};

/// Restricting to |x_i| <= sub_box (per coordinate) when sub_box > 0.
RegularityEstimate estimate_regularity(const ValueField& field, double sub_box = 0.0);

} // namespace fblab
