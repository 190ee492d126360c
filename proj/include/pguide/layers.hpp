#pragma once

#include "pguide/tensor.hpp"

namespace pguide {

/// y = x W + b, with W (in x out) and b (1 x out) broadcast over rows.
Tensor2 affine_forward(const Tensor2& x, const ParamTensor& W, const ParamTensor& b);

/// Accumulates dL/dW and dL/db into W.grad and b.grad and returns dL/dx.
Tensor2 affine_backward(const Tensor2& x, const Tensor2& dy, ParamTensor& W, ParamTensor& b);

Tensor2 tanh_forward(const Tensor2& x);

/// Given y = tanh(x) from the forward pass, returns dy * (1 - y^2).
Tensor2 tanh_backward(const Tensor2& y, const Tensor2& dy);

}  // namespace pguide
