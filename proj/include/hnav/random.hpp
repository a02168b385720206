#pragma once

#include <cstdint>
#include <random>

namespace hnav {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double normal(Rng& rng, double stddev) {
    if (stddev == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, stddev)(rng);
}

}  // namespace hnav
