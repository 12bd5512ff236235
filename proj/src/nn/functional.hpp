#pragma once

#include <functional>

#include "nn/tensor.hpp"

namespace coseq::nn {

/// Numerically stable softmax over a rank-1 tensor (max subtraction,
/// double accumulation). Output is a probability vector.
Tensor softmax(const Tensor& v);

/// -log(probs[label]) with a floor clamp; `onehot` must contain exactly one
/// 1.0 and zeros elsewhere.
float cross_entropy(const Tensor& probs, const Tensor& onehot);

/// Scalar loss with an analytic gradient, the shape grad_check understands.
/// When grad_out is non-null the callee fills it with dL/dx.
using LossFn = std::function<float(const Tensor& x, Tensor* grad_out)>;

/// Central-difference check of the analytic gradient of f at x.
/// Returns max_i |analytic_i - numeric_i| / max(||analytic||_inf,
/// ||numeric||_inf, eps): the error relative to the gradient's scale.
/// Default h is 2^-10 (~1e-3), a power of two so x +- h stays exactly
/// representable for well-scaled x.
float grad_check(const LossFn& f, const Tensor& x, float h = 0.0009765625f);

}  // namespace coseq::nn
