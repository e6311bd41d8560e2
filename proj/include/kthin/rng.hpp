#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace kthin {

// SplitMix64 finalizer; used to derive independent substreams from a base seed.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Hash-combine for stream splitting: derive_stream(seed, tag0, tag1, ...).
inline std::uint64_t derive_stream(std::uint64_t seed) { return mix64(seed); }

template <typename... Tags>
std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t tag, Tags... rest) {
    return derive_stream(mix64(seed ^ mix64(tag)), rest...);
}

// Quantile of the standard normal (Wichura's PPND16 rational approximation,
// absolute error below 1e-15 on (0,1)).  Used instead of
// std::normal_distribution so the variate stream is identical across
// platforms and standard-library implementations.
double norm_quantile(double p);

namespace detail {

inline double ppnd16_central(double q) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
}

inline double ppnd16_tail(double r) {
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        return num / den;
    }
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    return num / den;
}

}  // namespace detail

inline double norm_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0))
        throw std::invalid_argument("norm_quantile: p must lie in (0,1)");
    const double q = p - 0.5;
    if (q < 0.425 && q > -0.425) return detail::ppnd16_central(q);
    const double tail_p = (q < 0.0) ? p : 1.0 - p;
    const double r = std::sqrt(-std::log(tail_p));
    const double v = detail::ppnd16_tail(r);
    return (q < 0.0) ? -v : v;
}

// Deterministic random stream: mt19937_64 with explicit, platform-independent
// transforms.  Exactly one 64-bit draw is consumed per uniform() and per
// normal() call.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1): the half-offset keeps the quantile finite.
    double uniform_open() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via inverse CDF (one uniform consumed per variate).
    double normal() { return norm_quantile(uniform_open()); }

    std::uint64_t raw() { return gen_(); }

  private:
    std::mt19937_64 gen_;
};

}  // namespace kthin
