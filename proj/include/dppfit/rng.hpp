#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace dppfit {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a master seed and a counter path.
/// Each path component is absorbed in order, so (1,2) and (2,1) differ.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master,
                                                  std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(master ^ 0x6A09E667F3BCC909ULL);
    for (std::uint64_t c : path) {
        h = mix64(h ^ mix64(c + 0x3C6EF372FE94F82BULL));
    }
    return h;
}

[[nodiscard]] inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// Uniform double in [0, 1) from the top 53 bits.
[[nodiscard]] inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1].
[[nodiscard]] inline double uniform01_open_low(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal by Box-Muller; the second variate is discarded to keep
/// the generator state a pure function of the number of calls.
[[nodiscard]] inline double standard_normal(Rng& rng) {
    const double u1 = uniform01_open_low(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace dppfit
