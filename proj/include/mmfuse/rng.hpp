#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mmfuse {

/// Deterministic random source.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The floating-point conversions below are implemented here rather
/// than through <random> distributions, whose algorithms are left to the
/// standard library vendor. Together this gives the same stream for the same
/// seed on every conforming platform.
///
/// Child generators are derived with split(): the child's seed is a SplitMix64
/// mix of the parent seed and the stream key, so subsystems draw from
/// independent streams regardless of how much the parent has been consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    Rng split(std::uint64_t stream) const;
    Rng split(std::string_view tag) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace mmfuse
