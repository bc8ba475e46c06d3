#pragma once

#include "averify/tensor.hpp"

namespace averify {

/// out[j] = sum_i weights[j,i] * input[i] + bias[j].
/// weights: [out, in], bias: [out], input: [in].
Tensor dense_forward(const Tensor& weights, const Tensor& bias, const Tensor& input);

/// Cross-correlation with zero padding.
/// kernels: [outC, inC, kH, kW], bias: [outC], input: [inC, H, W].
/// Output height (H + 2*padding - kH) / stride + 1 must be integral,
/// likewise width; non-integral sizes are an error.
Tensor conv2d_forward(const Tensor& kernels, const Tensor& bias, const Tensor& input,
                      std::size_t stride, std::size_t padding);

/// Elementwise max(0, x).
Tensor relu(const Tensor& t);

/// Windowed max over [C, H, W] input. Tail rows/columns that do not fit a
/// full window are dropped. window must not exceed the spatial extent.
Tensor maxpool2d(const Tensor& t, std::size_t window, std::size_t stride);

/// Reshape to rank 1 preserving row-major data order.
Tensor flatten(const Tensor& t);

/// Numerically stabilized softmax: exp(z_i - max z) / sum. Requires k >= 2
/// finite logits; output sums to 1 within 1e-12 with every entry > 0 and
/// the same argmax as the logits.
ProbabilityVector softmax(const Tensor& logits);

/// -ln(probs[cls]). cls must be in range and probs[cls] > 0.
double cross_entropy(const ProbabilityVector& probs, std::size_t cls);

}  // namespace averify
