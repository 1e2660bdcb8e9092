#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace jcd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a child seed from a master seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
    return splitmix64(master ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(master, a), b);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                                 std::uint64_t c) {
    return derive_seed(derive_seed(master, a, b), c);
}

/// Uniform draw in (0, 1]. Never returns 0, so log() of the result is safe.
inline double uniform_unit(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1p-53;
}

/// Circularly symmetric complex Gaussian CN(0, 1): total variance 1,
/// split evenly between real and imaginary parts.
inline std::complex<double> complex_normal(Rng& rng) {
    // Box-Muller in polar form; hand-rolled so that streams are
    // bit-reproducible across standard library implementations.
    const double u = uniform_unit(rng);
    const double phi = 2.0 * M_PI * uniform_unit(rng);
    const double r = std::sqrt(-std::log(u));
    return {r * std::cos(phi), r * std::sin(phi)};
}

inline std::complex<double> complex_normal(Rng& rng, double variance) {
    return std::sqrt(variance) * complex_normal(rng);
}

} // namespace jcd
