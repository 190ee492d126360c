#pragma once

#include <span>
#include <vector>

#include "pguide/tensor.hpp"

namespace pguide {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are allocated on construction,
/// one pair per parameter, in the order the parameters are given.
class Adam {
public:
    explicit Adam(std::span<ParamTensor* const> params);

    /// Applies one update using the accumulated grads. `step` is 1-based.
    /// Throws TrainingError naming the parameter if any gradient is non-finite.
    void step(std::span<ParamTensor* const> params, const AdamConfig& cfg, long step);

private:
    std::vector<Tensor2> m_;
    std::vector<Tensor2> v_;
};

}  // namespace pguide
