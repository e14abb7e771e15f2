#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedrewind {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of
/// coordinates (purpose tag, node id, round, ...). Order-sensitive.
constexpr Seed derive_seed(Seed base, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = mix64(base);
    for (auto c : coords) h = mix64(h ^ mix64(c));
    return h;
}

// Purpose tags, so that streams for different concerns never collide.
namespace stream {
inline constexpr std::uint64_t init = 0x1;
inline constexpr std::uint64_t shuffle = 0x2;
inline constexpr std::uint64_t routing = 0x3;
inline constexpr std::uint64_t peer = 0x4;
inline constexpr std::uint64_t partition = 0x5;
inline constexpr std::uint64_t schedule = 0x6;
inline constexpr std::uint64_t blobs = 0x7;
}  // namespace stream

inline Rng make_rng(Seed base, std::initializer_list<std::uint64_t> coords) {
    return Rng{derive_seed(base, coords)};
}

}  // namespace fedrewind
