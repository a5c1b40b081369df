#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fblab/errors.hpp"

namespace fblab {

/// Uniform tensor grid on [t0, T] x Π_i [x_min_i, x_max_i].
/// dt is exactly (T - t0)/steps; the last time node is exactly T.
struct SpaceTimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int steps = 1;
    std::vector<double> x_min;
    std::vector<double> x_max;
    std::vector<int> x_nodes; // per-dimension node counts, each >= 2

    int dim() const { return static_cast<int>(x_nodes.size()); }
    double dt() const { return (T - t0) / steps; }

    double t_at(int i) const { return i >= steps ? T : t0 + dt() * i; }

    double dx(int d) const {
        return (x_max[static_cast<std::size_t>(d)] - x_min[static_cast<std::size_t>(d)]) /
               (x_nodes[static_cast<std::size_t>(d)] - 1);
    }

    double x_at(int d, int j) const {
        const std::size_t dd = static_cast<std::size_t>(d);
        return j + 1 >= x_nodes[dd] ? x_max[dd] : x_min[dd] + dx(d) * j;
    }

    std::size_t space_size() const {
        std::size_t s = 1;
        for (int c : x_nodes) s *= static_cast<std::size_t>(c);
        return s;
    }

    /// Row-major flattening, dimension 0 slowest.
    void coords(std::size_t flat, std::span<double> out) const {
        for (int d = dim() - 1; d >= 0; --d) {
            const std::size_t c = static_cast<std::size_t>(x_nodes[static_cast<std::size_t>(d)]);
            out[static_cast<std::size_t>(d)] = x_at(d, static_cast<int>(flat % c));
            flat /= c;
        }
    }

    std::vector<int> unflatten(std::size_t flat) const {
        std::vector<int> idx(static_cast<std::size_t>(dim()));
        for (int d = dim() - 1; d >= 0; --d) {
            const std::size_t c = static_cast<std::size_t>(x_nodes[static_cast<std::size_t>(d)]);
            idx[static_cast<std::size_t>(d)] = static_cast<int>(flat % c);
            flat /= c;
        }
        return idx;
    }

    std::size_t flatten(std::span<const int> idx) const {
        std::size_t flat = 0;
        for (int d = 0; d < dim(); ++d)
            flat = flat * static_cast<std::size_t>(x_nodes[static_cast<std::size_t>(d)]) +
                   static_cast<std::size_t>(idx[static_cast<std::size_t>(d)]);
        return flat;
    }

    void validate() const {
        if (!(T > t0)) throw ConfigError("grid: T must exceed t0");
        if (steps < 1) throw ConfigError("grid: steps must be >= 1");
        if (x_min.size() != x_max.size() || x_min.size() != x_nodes.size())
            throw ConfigError("grid: inconsistent spatial dimension");
        if (x_nodes.empty()) throw ConfigError("grid: needs at least one spatial dimension");
        for (std::size_t d = 0; d < x_nodes.size(); ++d) {
            if (x_nodes[d] < 2) throw ConfigError("grid: each dimension needs >= 2 nodes");
            if (!(x_max[d] > x_min[d])) throw ConfigError("grid: x_max must exceed x_min");
        }
    }
};

} // namespace fblab
