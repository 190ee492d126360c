#include "pguide/layers.hpp"

#include <cmath>

#include "pguide/errors.hpp"

namespace pguide {

Tensor2 affine_forward(const Tensor2& x, const ParamTensor& W, const ParamTensor& b) {
    if (b.value.rows() != 1 || b.value.cols() != W.value.cols()) {
        throw ShapeError("affine_forward: bias " + b.value.shape_string() +
                         " incompatible with weight " + W.value.shape_string());
    }
    Tensor2 y = matmul(x, W.value);
    const auto bias = b.value.row_span(0);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto r = y.row_span(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
    return y;
}

Tensor2 affine_backward(const Tensor2& x, const Tensor2& dy, ParamTensor& W, ParamTensor& b) {
    if (dy.rows() != x.rows() || dy.cols() != W.value.cols()) {
        throw ShapeError("affine_backward: upstream grad " + dy.shape_string() +
                         " incompatible with input " + x.shape_string());
    }
    W.grad += matmul_tn(x, dy);
    auto bg = b.grad.row_span(0);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        const auto r = dy.row_span(i);
        for (std::size_t j = 0; j < r.size(); ++j) bg[j] += r[j];
    }
    return matmul_nt(dy, W.value);
}

Tensor2 tanh_forward(const Tensor2& x) {
    if (!x.all_finite()) throw DomainError("tanh_forward: non-finite input");
    Tensor2 y = x;
    for (auto& v : y.flat()) v = std::tanh(v);
    return y;
}

Tensor2 tanh_backward(const Tensor2& y, const Tensor2& dy) {
    if (!y.same_shape(dy)) throw ShapeError("tanh_backward: shape mismatch");
    Tensor2 dx = dy;
    auto yd = y.flat();
    auto d = dx.flat();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - yd[i] * yd[i];
    return dx;
}

}  // namespace pguide
