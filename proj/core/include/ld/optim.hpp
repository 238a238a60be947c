#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ld/tensor.hpp"

namespace ld {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm gradient clipping; off unless set.
  std::optional<double> clip_norm;
};

// Bias-corrected Adam. Moments are created on the first step and must keep
// matching the parameter shapes afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  void step(Tensor& param, const Tensor& grad);

  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void reset();

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t steps_ = 0;
};

// params − lr·grads
void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr);
Tensor sgd_step(const Tensor& param, const Tensor& grad, double lr);

}  // namespace ld
