#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace vtg {

// Seeded randomness with fully specified arithmetic. The std distribution
// adapters are implementation-defined, which would break the byte-identical
// output contract across standard libraries, so draws are hand-rolled on top
// of mt19937_64.
using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates child streams derived from one seed.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return mix64(mix64(seed ^ 0x243f6a8885a308d3ull) + mix64(stream) + index * 0x9e3779b97f4a7c15ull);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// uniform in [0, 1)
inline double uniform(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform(rng);
}

// uniform integer in [lo, hi], inclusive
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(rng() % span);
}

// standard normal via Box-Muller; stateless (one sine draw per call)
inline double gaussian(Rng& rng) {
    const double u1 = 1.0 - uniform(rng); // (0, 1]
    const double u2 = uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Fisher-Yates
template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
        const auto j = uniform_int(rng, 0, i);
        std::swap(first[i], first[j]);
    }
}

} // namespace vtg
