#include "pguide/adam.hpp"

#include <cmath>

#include "pguide/errors.hpp"

namespace pguide {

Adam::Adam(std::span<ParamTensor* const> params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto* p : params) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void Adam::step(std::span<ParamTensor* const> params, const AdamConfig& cfg, long step) {
    if (params.size() != m_.size()) {
        throw ShapeError("Adam::step: parameter count changed since construction");
    }
    if (step < 1) throw DomainError("Adam::step: step count must be >= 1");
    for (const auto* p : params) {
        if (!p->grad.all_finite()) {
            throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
        }
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto value = params[k]->value.flat();
        auto grad = params[k]->grad.flat();
        auto m = m_[k].flat();
        auto v = v_[k].flat();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace pguide
