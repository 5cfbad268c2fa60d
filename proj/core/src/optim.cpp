#include "cdi/optim.hpp"

#include <cmath>
#include <string>

#include "cdi/errors.hpp"

namespace cdi {

Adam::Adam(std::vector<Tensor> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
  if (config_.lr <= 0.0 || config_.beta1 < 0.0 || config_.beta1 >= 1.0 ||
      config_.beta2 < 0.0 || config_.beta2 >= 1.0 || config_.eps <= 0.0) {
    throw DataError("invalid optimizer settings");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor& p : params_) {
    if (!p.requires_grad()) {
      throw DataError("optimizer given a tensor that does not require grad");
    }
    m_.emplace_back(p.value().size(), 0.0f);
    v_.emplace_back(p.value().size(), 0.0f);
  }
}

void Adam::step() {
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    std::span<float> w = params_[p].value();
    std::span<const float> g = params_[p].grad();
    std::vector<float>& m = m_[p];
    std::vector<float>& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      w[i] = static_cast<float>(w[i] - config_.lr * m_hat /
                                           (std::sqrt(v_hat) + config_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::load_state(std::uint64_t step_count, std::vector<std::vector<float>> m,
                      std::vector<std::vector<float>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw DataError("optimizer state has wrong number of slots");
  }
  for (std::size_t p = 0; p < params_.size(); ++p) {
    if (m[p].size() != params_[p].value().size() ||
        v[p].size() != params_[p].value().size()) {
      throw DataError("optimizer state slot " + std::to_string(p) +
                      " has wrong size");
    }
  }
  step_count_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace cdi
