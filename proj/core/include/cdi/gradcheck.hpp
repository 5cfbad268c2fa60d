#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdi/nn.hpp"
#include "cdi/tensor.hpp"

namespace cdi {

struct GradCheckEntry {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;

  bool passed(double tol) const { return max_rel_error < tol; }
  std::string to_string() const;
};

// Compares analytic and central-difference derivatives of a scalar loss for
// every named leaf. The loss is the output of fn if scalar, otherwise a
// fixed random +-1 projection of it (accumulated in double). Each leaf is
// probed along the sign pattern of its own analytic gradient, so the
// directional derivative aggregates the whole buffer as an L1 norm and the
// comparison stays well above float rounding and finite-difference
// truncation noise. fn must be a pure function of the leaves.
GradCheckReport grad_check_fn(
    const std::function<Tensor()>& fn,
    const std::vector<std::pair<std::string, Tensor>>& leaves,
    std::uint64_t seed, double step = 1e-3);

// Checks every parameter tensor of the network against the projection loss.
GradCheckReport grad_check_network(const EncoderDecoder& net,
                                   const Tensor& input, std::uint64_t seed,
                                   double step = 1e-3);

struct AuditCase {
  std::string name;
  GradCheckReport report;
};

// One finite-difference case per differentiable building block (convolution,
// activation, pooling, upsampling, concatenation, spatial differences,
// elementwise arithmetic) plus both training losses, each on random 8x8
// inputs drawn from `seed`. Whole-network gradients need kink-aware weight
// placement and are exercised separately with crafted parameters.
std::vector<AuditCase> gradient_audit(std::uint64_t seed);

double audit_max_rel_error(const std::vector<AuditCase>& cases);

}  // namespace cdi
