#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

// Self-contained counter-based RNG. Each path gets its own substream derived
// from (seed, path index), so draws do not depend on generation order or on
// how work is split across threads. Gaussians come from Box-Muller on
// explicit 53-bit uniforms; nothing here depends on library internals.

namespace fblab::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Substream generator for one path (or one probe sequence).
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t substream) {
        // Run the mixer a few times so nearby (seed, substream) pairs decorrelate.
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s ^= substream * 0xda942042e4dd58b5ULL + 0x2545f4914f6cdd1dULL;
        std::uint64_t b = splitmix64(s);
        state_ = a ^ (b + 0x9e3779b97f4a7c15ULL);
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform on (0, 1]: never returns 0, so log() below is safe.
    double next_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; draws come in cached pairs.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Low-discrepancy point in [0,1)^dim (additive Weyl recurrence).
/// Deterministic in (index, dim); used for quasi-random probe boxes.
inline double weyl_coordinate(std::uint64_t index, unsigned dim) {
    // Fractional parts of index * sqrt(prime_dim).
    static const double roots[] = {
        1.4142135623730951, 1.7320508075688772, 2.23606797749979,
        2.6457513110645907, 3.3166247903554,    3.605551275463989,
        4.123105625617661,  4.358898943540674,  4.795831523312719,
        5.385164807134504,  5.5677643628300215, 6.082762530298219,
    };
    const double alpha = roots[dim % (sizeof(roots) / sizeof(roots[0]))];
    const double v = static_cast<double>(index % (1ULL << 32)) * alpha;
    return v - std::floor(v);
}

} // namespace fblab::rng
