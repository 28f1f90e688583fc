#pragma once

#include <cstdint>
#include <random>

namespace ddekit {

/// Seeded generator with portable real draws. std::uniform_real_distribution
/// is implementation-defined, so uniforms are built from raw mt19937_64 bits
/// and the same seed reproduces the same stream on any standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // modulo bias is irrelevant at the scales used here (n << 2^64)
        return engine_() % n;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace ddekit
