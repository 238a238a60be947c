#pragma once

#include "ld/autodiff.hpp"
#include "ld/tensor.hpp"

namespace ld {

// Global ridge-regression classifier on bias-augmented features.
struct RRHead {
  Tensor weights;       // (F+1)×C, starts at zero
  double lambda = 1.0;  // ridge regularizer
  double alpha = 0.01;  // pseudo-gradient step size
  double calib = 1.0;   // logit scale, trained with the feature extractor

  static RRHead zeros(std::size_t features_with_bias, std::size_t classes, double lambda, double alpha);
};

// Minibatch ridge solution W_l = Zᵀ(ZZᵀ + λI)⁻¹Y through a B×B Cholesky
// solve. Z: B×(F+1), Y: B×C.
Tensor solve_local(const Tensor& z, const Tensor& y, double lambda);
// Differentiable form (w.r.t. Z and Y).
ad::Var solve_local(const ad::Var& z, const ad::Var& y, double lambda);

// W ← (1−α)W + αW_l
RRHead pseudo_step(RRHead head, const Tensor& local);
ad::Var pseudo_step(const ad::Var& weights, const ad::Var& local, double alpha);

// softmax(calib · Z·W), row-wise.
Tensor predict(const RRHead& head, const Tensor& z);
ad::Var predict(const ad::Var& weights, const ad::Var& calib, const ad::Var& z);

}  // namespace ld
