#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace danalab {

// Seeded stream derived from (seed, label). Streams with different labels are
// independent, so adding draws to one subsystem leaves the others untouched.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view label);

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [lo, hi). Built from the raw 64-bit draw so results do not
    // depend on the standard library's distribution implementation.
    double uniform(double lo = 0.0, double hi = 1.0);

    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);

    // Standard normal via Box-Muller.
    double normal();

    Rng child(std::string_view label) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label);

}  // namespace danalab
