#pragma once

#include "fblab/fbsde.hpp"

// Value field by dynamic programming: one backward pass over time slabs, at
// each grid node minimizing the slab-start backward value over the control
// lattice, with the slab terminal condition interpolated from the next slice.

namespace fblab::value {

struct DppOptions {
    int M = 10000;            // paths per slab ensemble
    std::uint64_t seed = 1;
    int slab_substeps = 1;    // Euler steps inside one slab
    fbsde::PicardOptions picard;
    bool record_argmin = true;
    bool check_stats = false; // per-slab ensembles are usually too small for 5-sigma stats
};

/// Backward induction over the grid's time slices; the terminal slice is
/// exactly phi at the nodes. Paths leaving the spatial box evaluate the slab
/// terminal by clamped interpolation.
ValueField compute_value_dpp(const ProblemSpec& spec, const Gate& gate,
                             const SpaceTimeGrid& grid, const DppOptions& opt = {});

} // namespace fblab::value
