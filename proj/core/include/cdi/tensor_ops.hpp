#pragma once

#include "cdi/tensor.hpp"

namespace cdi {

// Differentiable graph ops. Every op computes its value eagerly and, when any
// input requires grad, registers a backward function on the result node.
// All loops run in a fixed serial order, so values and gradients are
// bit-reproducible run to run.

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

// 3x3 convolution, stride 1, zero padding 1 (output size == input size).
// weight is (out_c, in_c, 3, 3); bias is (1, out_c, 1, 1). Per-output sums
// accumulate in double so values are stable to one float rounding.
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor leaky_relu(const Tensor& x, float negative_slope = 0.1f);

// Logistic function, clamped to the open interval (0, 1): outputs never
// reach either endpoint even after float rounding.
Tensor sigmoid(const Tensor& x);

// 2x2 average pooling, stride 2; height and width must be even.
Tensor avg_pool2(const Tensor& x);

// 2x bilinear upsampling with half-pixel centers and edge clamping; matches
// resize_bilinear on images at the same scale factor.
Tensor upsample_bilinear2(const Tensor& x);

// Channel concatenation; n/h/w must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Forward differences along x / y. Output has the input's size; the last
// column / row (which has no forward neighbour) is zero, so constants map
// to exactly zero everywhere.
Tensor diff_x(const Tensor& x);
Tensor diff_y(const Tensor& x);

// Full reductions to a (1,1,1,1) tensor; sums accumulate in double.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

}  // namespace cdi
