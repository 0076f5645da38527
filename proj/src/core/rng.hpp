#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace emseg {

// splitmix64; used to derive independent sub-seeds from (run seed, purpose).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t h = mix64(seed);
    for (char c : purpose) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view purpose) {
    return std::mt19937_64(derive_seed(seed, purpose));
}

} // namespace emseg
