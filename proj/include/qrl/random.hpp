#pragma once

// Deterministic substreams: every independent work unit (replication,
// bootstrap replicate, ...) gets its own engine seeded from the root seed and
// its integer key, so results do not depend on scheduling.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qrl {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = splitmix64(root);
    for (auto k : key) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

using Engine = std::mt19937_64;

inline Engine substream(std::uint64_t root, std::initializer_list<std::uint64_t> key) {
    std::seed_seq seq{static_cast<std::uint32_t>(derive_seed(root, key)),
                      static_cast<std::uint32_t>(derive_seed(root, key) >> 32)};
    return Engine(seq);
}

// Uniform on (0, 1]; safe under -log.
inline double uniform_open0(Engine& eng) {
    return 1.0 - std::generate_canonical<double, 53>(eng);
}

}  // namespace qrl
