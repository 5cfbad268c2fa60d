#pragma once

#include <cstdint>
#include <vector>

#include "cdi/tensor.hpp"

namespace cdi {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are stored as float (they travel in
// checkpoints); the update itself is computed in double per element. With
// fresh state and zero gradient the update is exactly zero.
class Adam {
 public:
  Adam(std::vector<Tensor> params, const AdamConfig& config = {});

  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_count_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Checkpoint plumbing: first-moment and second-moment buffers, aligned
  // with params() order.
  const std::vector<std::vector<float>>& moment1() const { return m_; }
  const std::vector<std::vector<float>>& moment2() const { return v_; }
  void load_state(std::uint64_t step_count, std::vector<std::vector<float>> m,
                  std::vector<std::vector<float>> v);

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace cdi
