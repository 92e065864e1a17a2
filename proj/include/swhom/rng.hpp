#pragma once

#include <cstdint>
#include <random>

namespace swhom {

/// splitmix64 finalizer; used only to spread (seed, path_id) before seeding.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

using PathEngine = std::mt19937_64;

/// Engine for one path. Depends only on (seed, path_id), never on scheduling.
inline PathEngine path_engine(std::uint64_t seed, std::uint64_t path_id) {
    const std::uint64_t a = splitmix64(seed);
    const std::uint64_t b = splitmix64(a ^ splitmix64(path_id + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(path_id), static_cast<std::uint32_t>(path_id >> 32)};
    return PathEngine(seq);
}

/// Independent root seed for a named sub-stream (e.g. one verification test) of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0xd1b54a32d192ed03ULL));
}

/// Uniform draw in [0, 1) with 53 random bits.
inline double uniform01(PathEngine& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

}  // namespace swhom
