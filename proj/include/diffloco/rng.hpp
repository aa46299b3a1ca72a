#pragma once

#include <cstdint>
#include <random>

namespace diffloco {

/// splitmix64 finaliser; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based sub-seed for (seed, iteration, batch index).
constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t iteration, std::uint64_t index) {
    return mix64(mix64(mix64(seed) ^ iteration) ^ (index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

/// Uniform in [0, 1) from the top 53 bits; identical on every standard library.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

} // namespace diffloco
