#pragma once

#include <cstdint>

#include "pguide/tensor.hpp"

namespace pguide {

/// SplitMix64 generator (Steele, Lea & Flood 2014): the state advances by the
/// golden-ratio increment 0x9E3779B97F4A7C15 and each output is the mixed
/// state. Uniforms take the top 53 bits. Normals use the Box-Muller transform
///
///     r = sqrt(-2 ln(1 - u1)),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)
///
/// with z1 cached for the next call, so a sequence of normals consumes exactly
/// one uniform per value on average.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform integer on [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();

    /// Independent stream for a parallel lane, derived from (seed, lane).
    static Rng substream(std::uint64_t seed, std::uint64_t lane);

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// rows x cols tensor of i.i.d. N(0, 1) draws, filled row-major.
Tensor2 normal_sample(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace pguide
