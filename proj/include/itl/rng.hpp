// Small deterministic RNG used everywhere randomness is needed. Keeping the
// generator in-repo pins byte-identical streams across platforms and
// standard-library versions.
#pragma once

#include <cstdint>
#include <string_view>

namespace itl {

struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n). Modulo bias is irrelevant at our pool sizes.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    int range(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(
                        static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    double uniform01() { return (next() >> 11) * 0x1.0p-53; }

    double normal(double mean, double stddev) {
        // Box-Muller, one sample per call.
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        double r = __builtin_sqrt(-2.0 * __builtin_log(u1));
        return mean + stddev * r * __builtin_cos(6.283185307179586 * u2);
    }
};

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), seed);
}

// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    SplitMix64 g(base ^ (0x6a09e667f3bcc909ULL + tag * 0x9e3779b97f4a7c15ULL));
    return g.next();
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    return derive_seed(base, fnv1a64(tag));
}

}  // namespace itl
