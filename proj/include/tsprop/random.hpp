#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsprop {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Sub-seed for (master, purpose, index). Distinct purposes or indices give
// statistically independent streams; the mapping is fixed across platforms.
constexpr Seed derive_seed(Seed master, std::string_view purpose,
                           std::uint64_t index = 0) noexcept {
    std::uint64_t h = detail::splitmix64(master);
    h = detail::splitmix64(h ^ detail::fnv1a64(purpose));
    return detail::splitmix64(h ^ detail::splitmix64(index + 1));
}

inline Rng make_rng(Seed seed) { return Rng{seed}; }

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) noexcept {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace tsprop
