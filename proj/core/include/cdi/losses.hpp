#pragma once

#include <span>

#include "cdi/tensor.hpp"

namespace cdi {

// Mean squared error over every element of pred vs target.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Multi-scale gradient loss: at each of `scales` levels (level 0 is full
// resolution, each next level is a 2x average-pool of the previous), the
// mean squared difference of forward-difference gradients along x and y is
// taken; the per-level terms are averaged. Adding a constant to pred shifts
// no gradient, so the loss is exactly invariant to constant offsets.
Tensor msg_loss(const Tensor& pred, const Tensor& target, int scales = 4);

// Least-squares scale: the alpha minimizing ||alpha * base - target||^2,
// i.e. <base, target> / <base, base>, accumulated in double. Returns 1 when
// base is identically zero (any alpha fits; 1 keeps the caller's value).
double ls_scale_align(std::span<const float> base, std::span<const float> target);

}  // namespace cdi
