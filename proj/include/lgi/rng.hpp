#pragma once

#include <cstdint>
#include <string_view>

namespace lgi {

// SplitMix64, used for seeding and stream derivation.
std::uint64_t splitmix64(std::uint64_t& state);

// xoshiro256** (Blackman & Vigna, 2018), seeded by expanding a 64-bit seed with
// SplitMix64. All draws are integer-derived so sequences are bit-exact on every
// platform; normal() uses Box-Muller over our own uniforms rather than
// <random> distributions, whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();

    // Uniform double in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] (inclusive), unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    double normal();

    // Independent child stream keyed by a tag; does not advance *this.
    Rng fork(std::string_view tag) const;
    Rng fork(std::uint64_t tag) const;

private:
    std::uint64_t s_[4];
};

} // namespace lgi
