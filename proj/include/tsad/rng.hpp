#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace tsad {

// Seeded pseudorandom generator with a fixed algorithm (splitmix64) so that
// equal seeds produce equal streams on every platform and run. Normal draws
// use Box-Muller on top of the uniform stream.
//
// Parallel code must not share one instance; derive child generators with
// child_seed(seed, k) instead.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed), seed_value_(seed) {}

    std::uint64_t seed() const { return seed_value_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 mantissa bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (lo, hi) symmetric use for weight init.
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Unbiased integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() -
            std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Standard normal via Box-Muller; the sine partner is cached so draws
    // come in deterministic pairs.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        // u1 in (0, 1] so log() stays finite.
        const double u1 =
            (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) {
        return mean + stddev * normal();
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t seed_value_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Seed-splitting for parallel or per-role streams:
// child k of a parent seed gets an independent, reproducible stream.
inline std::uint64_t child_seed(std::uint64_t parent, std::uint64_t k) {
    std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (k + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace tsad
