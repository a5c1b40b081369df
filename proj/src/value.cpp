#include "fblab/value.hpp"

#include "fblab/rng.hpp"

#include <algorithm>
#include <limits>

namespace fblab::value {

namespace {

std::uint64_t slab_seed(std::uint64_t seed, std::size_t slab) {
    // decorrelate slab ensembles while keeping them a pure function of (seed, slab)
    std::uint64_t s = seed;
    rng::splitmix64(s);
    s ^= 0x9e3779b97f4a7c15ull * (slab + 1);
    rng::splitmix64(s);
    return s;
}

} // namespace

ValueField compute_value_dpp(const ProblemSpec& spec, const Gate& gate,
                             const SpaceTimeGrid& grid, const DppOptions& opt) {
    spec.validate();
    grid.validate();
    if (grid.dim() != spec.n)
        throw ConfigError("value: grid dimension does not match the problem state dimension");
    gate.require("value.compute_value_dpp");
    if (opt.M < 2) throw ConfigError("value: need at least 2 paths per slab");
    if (opt.slab_substeps < 1) throw ConfigError("value: slab_substeps must be >= 1");

    ValueField field(grid, "dpp", spec.hash.empty() ? problem_hash(spec) : spec.hash);
    const std::size_t nodes = grid.space_size();
    const std::size_t nu = spec.controls.size();
    const bool keep_argmin = opt.record_argmin && spec.k > 0;
    if (keep_argmin) field.set_argmin_dim(spec.k);

    std::vector<double> x(static_cast<std::size_t>(spec.n));

    // terminal slice is exactly phi at the nodes
    for (std::size_t node = 0; node < nodes; ++node) {
        grid.coords(node, x);
        field.at(grid.steps, node) = spec.phi.eval(grid.T, x, 0.0, {}, spec.controls.at(0), 0);
        if (keep_argmin) {
            auto am = field.argmin_at(grid.steps, node);
            auto u0 = spec.controls.at(0);
            std::copy(u0.begin(), u0.end(), am.begin());
        }
    }

    for (int ti = grid.steps; ti-- > 0;) {
        SpaceTimeGrid slab;
        slab.t0 = grid.t_at(ti);
        slab.T = grid.t_at(ti + 1);
        slab.steps = opt.slab_substeps;
        slab.x_min = grid.x_min;
        slab.x_max = grid.x_max;
        slab.x_nodes.assign(static_cast<std::size_t>(spec.n), 2);

        // one ensemble per slab: common random numbers across nodes and controls
        auto ens = paths::generate_ensemble(slab, opt.M, spec.d,
                                            slab_seed(opt.seed, static_cast<std::size_t>(ti)),
                                            opt.check_stats);

        auto psi = [&](std::span<const double> xe) {
            return field.interp_space(ti + 1, xe, /*clamp=*/true);
        };

        for (std::size_t node = 0; node < nodes; ++node) {
            grid.coords(node, x);
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_u = 0;
            for (std::size_t ui = 0; ui < nu; ++ui) {
                const double y = fbsde::backward_semigroup(spec, gate, ens, x,
                                                           paths::Policy::constant(ui), psi,
                                                           opt.picard);
                if (y < best) {
                    best = y;
                    best_u = ui;
                }
            }
            field.at(ti, node) = best;
            if (keep_argmin) {
                auto am = field.argmin_at(ti, node);
                auto ub = spec.controls.at(best_u);
                std::copy(ub.begin(), ub.end(), am.begin());
            }
        }
    }
    return field;
}

} // namespace fblab::value
