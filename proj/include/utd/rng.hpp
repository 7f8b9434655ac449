#pragma once

#include <cstdint>
#include <initializer_list>

namespace utd {

/// SplitMix64 finaliser; a good bijective mixer for 64-bit seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent child seed for a (base, tag...) path, so that each stage of a
/// run draws from its own stream regardless of how much the others consume.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix_seed(base);
    for (std::uint64_t p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
    return s;
}

}  // namespace utd
