#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace rbrom {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform,
// unlike std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
}

} // namespace rbrom
