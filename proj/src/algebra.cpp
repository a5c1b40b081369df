#include "fblab/algebra.hpp"

#include <cmath>

#include "fblab/rng.hpp"

namespace fblab::algebra {

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// V_out[j] = z0[j] + sum_i p[i] sigma_ij(t, x, v, V_in, u)
void apply_map(const ProblemSpec& spec, double t, std::span<const double> x, double v,
               std::span<const double> p, std::span<const double> u, std::size_t u_index,
               std::span<const double> z0, std::span<const double> V_in,
               std::span<double> V_out) {
    for (int j = 0; j < spec.d; ++j) {
        double acc = z0[static_cast<std::size_t>(j)];
        for (int i = 0; i < spec.n; ++i)
            acc += p[static_cast<std::size_t>(i)] *
                   spec.sigma_at(i, j).eval(t, x, v, V_in, u, u_index);
        V_out[static_cast<std::size_t>(j)] = acc;
    }
}

} // namespace

Solution solve_algebra(const ProblemSpec& spec, double t, std::span<const double> x, double v,
                       std::span<const double> p, std::span<const double> u,
                       std::size_t u_index, std::span<const double> z0, double tol,
                       int max_iter) {
    const double q = spec.L3 * norm2(p);
    if (q >= 1.0)
        throw NonContractive(q, "at t = " + std::to_string(t));

    const std::size_t d = static_cast<std::size_t>(spec.d);
    Solution sol;
    sol.V.assign(z0.begin(), z0.end());

    const bool z_free = !spec.sigma_uses_z();
    std::vector<double> next(d);

    if (z_free) {
        apply_map(spec, t, x, v, p, u, u_index, z0, sol.V, next);
        sol.V = next;
        sol.iterations = 1;
    } else {
        // Stop when the gap guarantees |V - V*| <= tol via the contraction
        // modulus: |V_{j+1} - V*| <= q/(1-q) |V_{j+1} - V_j|.
        const double threshold = q > 0.0 ? tol * (1.0 - q) / q : tol;
        double prev_gap = -1.0;
        bool converged = false;
        for (int it = 1; it <= max_iter; ++it) {
            apply_map(spec, t, x, v, p, u, u_index, z0, sol.V, next);
            double gap = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double delta = next[j] - sol.V[j];
                gap += delta * delta;
            }
            gap = std::sqrt(gap);
            sol.V = next;
            sol.iterations = it;
            if (prev_gap > 0.0) sol.contraction = gap / prev_gap;
            prev_gap = gap;
            if (gap <= threshold) {
                converged = true;
                break;
            }
        }
        if (!converged) throw MaxIterations("algebra", max_iter);
    }

    apply_map(spec, t, x, v, p, u, u_index, z0, sol.V, next);
    double res = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double delta = next[j] - sol.V[j];
        res += delta * delta;
    }
    sol.residual = std::sqrt(res);
    return sol;
}

RegularityProbe probe_algebra_regularity(const ProblemSpec& spec, long samples,
                                         double box_radius, std::uint64_t seed,
                                         double p_radius) {
    RegularityProbe rep;
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    std::vector<double> x(n), p(n), z0a(d), z0b(d);
    const std::uint64_t base = 1 + seed * 0x9E3779B9ULL;

    for (long i = 0; i < samples; ++i) {
        const std::uint64_t w = base + static_cast<std::uint64_t>(i);
        unsigned dim = 0;
        auto coord = [&] { return rng::weyl_coordinate(w, dim++); };

        const double t = spec.T * coord();
        for (std::size_t j = 0; j < n; ++j) x[j] = box_radius * (2.0 * coord() - 1.0);
        const double v = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < n; ++j) p[j] = p_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < d; ++j) z0a[j] = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < d; ++j) z0b[j] = box_radius * (2.0 * coord() - 1.0);
        const std::size_t ui = static_cast<std::size_t>(i) % spec.controls.size();
        const auto u = spec.controls.at(ui);

        if (spec.L3 * norm2(p) >= 1.0) {
            ++rep.skipped;
            continue;
        }
        try {
            const Solution a = solve_algebra(spec, t, x, v, p, u, ui, z0a);
            const Solution b = solve_algebra(spec, t, x, v, p, u, ui, z0b);
            double dz = 0.0, dv = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dz += (z0a[j] - z0b[j]) * (z0a[j] - z0b[j]);
                dv += (a.V[j] - b.V[j]) * (a.V[j] - b.V[j]);
            }
            dz = std::sqrt(dz);
            dv = std::sqrt(dv);
            if (dz > 1e-12) rep.lipschitz_z0 = std::max(rep.lipschitz_z0, dv / dz);
            double vnorm = 0.0;
            for (std::size_t j = 0; j < d; ++j) vnorm += a.V[j] * a.V[j];
            rep.growth = std::max(rep.growth, std::sqrt(vnorm) /
                                                  (1.0 + norm2(x) + std::fabs(v) + norm2(z0a)));
        } catch (const Error&) {
            ++rep.skipped;
        }
    }
    return rep;
}

} // namespace fblab::algebra
