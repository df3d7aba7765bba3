#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace kktset {

/// splitmix64 finalizer; used to derive independent stream seeds.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

/// Seed for a sub-stream identified by a path of integers, e.g. {seed, restart, candidate}.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t part : path) h = mix_seed(h ^ mix_seed(part));
    return h;
}

using Rng = std::mt19937_64;

}  // namespace kktset
