#include "veingen/rng.hpp"

#include <cmath>
#include <numbers>

namespace veingen {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span + 1) % span;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x > limit);
    return lo + static_cast<std::int64_t>(x % span);
}

double Rng::gaussian() {
    double u1;
    do {
        u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                          std::string_view tag) {
    std::uint64_t h = mix64(master + 0x9e3779b97f4a7c15ull);
    h = mix64(h ^ (index + 0x9e3779b97f4a7c15ull));
    h = mix64(h ^ fnv1a64(tag));
    return h;
}

} // namespace veingen
