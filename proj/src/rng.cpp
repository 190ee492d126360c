#include "pguide/rng.hpp"

#include <cmath>
#include <numbers>

namespace pguide {

std::uint64_t Rng::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    // Rejection keeps the distribution exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t lane) {
    Rng mixer(seed ^ (0xD1B54A32D192ED03ULL * (lane + 1)));
    return Rng(mixer.next_u64());
}

Tensor2 normal_sample(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor2 out(rows, cols);
    for (auto& v : out.flat()) v = rng.normal();
    return out;
}

}  // namespace pguide
