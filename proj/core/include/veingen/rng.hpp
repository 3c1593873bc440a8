#pragma once

#include <cstdint>
#include <string_view>

namespace veingen {

// Deterministic 64-bit stream generator (splitmix64). Used everywhere instead
// of <random> engines/distributions so that output is bit-identical across
// platforms and standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [lo, hi] inclusive, unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller (always draws two uniforms, caches none,
    // so consumption is predictable).
    double gaussian();

    double gaussian(double mean, double sigma) {
        return mean + sigma * gaussian();
    }

    bool bernoulli(double p) { return next_double() < p; }

private:
    std::uint64_t state_;
};

// Derives an independent child seed from a master seed, an index, and a
// purpose tag. Distinct (index, tag) pairs map to distinct streams; the
// mapping is pure so any worker can recompute it.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                          std::string_view tag);

} // namespace veingen
