#pragma once

// Counter-based normal generator. Every variate is a pure function of
// (seed, stream, step, slot), so output never depends on thread count,
// scheduling, or call order. Streams are indexed by path.

#include <cmath>
#include <cstdint>

namespace hierisk {

namespace detail {
// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace detail

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t word(std::uint64_t stream, std::uint64_t step, std::uint64_t slot) const {
        std::uint64_t h = detail::mix64(seed_ ^ 0x8824a3d6f8dd8e2bull);
        h = detail::mix64(h ^ stream);
        h = detail::mix64(h ^ step);
        h = detail::mix64(h ^ slot);
        return h;
    }

    // Uniform on (0,1]; the +1 keeps log() finite below.
    double uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t slot) const {
        return static_cast<double>((word(stream, step, slot) >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller.
    double normal(std::uint64_t stream, std::uint64_t step, std::uint64_t slot) const {
        const double u1 = uniform(stream, step, 2 * slot);
        const double u2 = uniform(stream, step, 2 * slot + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace hierisk
