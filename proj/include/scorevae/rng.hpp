#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace scorevae {

// Deterministic random stream. Normal variates are generated by an explicit
// Box-Muller transform on the raw 64-bit outputs so that a given seed always
// produces the same byte-for-byte sequence, independent of the standard
// library's distribution internals.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (cosine branch only).
    double normal() {
        double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1p-53; // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Derive an independent child stream; consumes one draw from this stream.
    RandomStream split() { return RandomStream(engine_()); }

private:
    std::mt19937_64 engine_;
};

} // namespace scorevae
