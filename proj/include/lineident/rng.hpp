#pragma once

#include <cstdint>
#include <random>

namespace lineident {

// Derives a decorrelated stream seed from a base seed and a stream index.
// SplitMix64-style finalizer; the same (base, index) pair always yields the
// same seed on every platform, which keeps replications and worker threads
// reproducible regardless of scheduling.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

// Deterministic random source. The engine is std::mt19937_64 (bit-exact per
// the standard); all variate transforms are implemented here rather than with
// std::*_distribution so that draws are byte-identical across standard
// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform01();
    // Uniform on (0, 1); never returns an endpoint.
    double uniform_open();
    // Uniform on [lo, hi).
    double uniform(double lo, double hi);
    // Integer uniform on [0, n), n >= 1, without modulo bias.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via the Marsaglia polar method (no caching, so the
    // draw sequence is a pure function of the engine state).
    double normal();

    // Gamma variate, shape/scale parameterization, Marsaglia-Tsang squeeze
    // for shape >= 1 and the boosting transform for shape < 1.
    double gamma(double shape, double scale);

private:
    std::mt19937_64 eng_;
};

}  // namespace lineident
