#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace hetreg {

/// Deterministic xoshiro256++ generator, seeded via splitmix64. The same seed
/// yields the same draw sequence on every platform, which makes datasets,
/// splits, and weight inits bit-reproducible. Normal draws use Box-Muller on
/// uniform pairs; the second value of each pair is cached and returned by the
/// next call.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform draw in [0, 1) with 53 bits of mantissa.
    double uniform();
    double uniform(double lo, double hi);

    /// Standard-normal draw (Box-Muller).
    double normal();

    /// n i.i.d. standard-normal draws.
    std::vector<double> standard_normal(std::size_t n);

    /// Derives an independent stream seed from (seed, stream). Used to give
    /// data generation, splitting, init, and batching their own streams.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace hetreg
