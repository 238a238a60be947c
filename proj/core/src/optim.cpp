#include "ld/optim.hpp"

#include <cmath>

#include "ld/errors.hpp"

namespace ld {

namespace {

void check_grads(const std::vector<Tensor>& params, const std::vector<Tensor>& grads, const char* op) {
  if (params.size() != grads.size()) throw DimensionError(std::string(op) + ": parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], op);
    require_finite(grads[i], op);
  }
}

}  // namespace

void Adam::reset() {
  m_.clear();
  v_.clear();
  steps_ = 0;
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  check_grads(params, grads, "adam_step");
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  } else if (m_.size() != params.size()) {
    throw DimensionError("adam_step: parameter list changed between steps");
  }

  double clip_scale = 1.0;
  if (config_.clip_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
      for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > *config_.clip_norm) clip_scale = *config_.clip_norm / norm;
  }

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    require_same_shape(params[k], m_[k], "adam_step");
    Tensor& p = params[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip_scale;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::step(Tensor& param, const Tensor& grad) {
  std::vector<Tensor> p{std::move(param)};
  try {
    step(p, std::vector<Tensor>{grad});
  } catch (...) {
    param = std::move(p.front());
    throw;
  }
  param = std::move(p.front());
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
  check_grads(params, grads, "sgd_step");
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k].size(); ++i) params[k][i] -= lr * grads[k][i];
}

Tensor sgd_step(const Tensor& param, const Tensor& grad, double lr) {
  std::vector<Tensor> p{param};
  sgd_step(p, {grad}, lr);
  return std::move(p.front());
}

}  // namespace ld
