#pragma once

#include <functional>

#include "ld/tensor.hpp"

// Reference computations for cross-checking the optimized paths. None of
// these share code with the ridge or meta-gradient implementations beyond
// Tensor storage.
namespace ld::verify {

// Central differences (f(x+εe_i) − f(x−εe_i)) / 2ε for every coordinate.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

// Binary logistic model p = σ(θᵀx), one inner step on a single base example
// with soft label ỹ, then the derivative of the outer log-loss on (x, y)
// w.r.t. ỹ: α(σ(θ'ᵀx) − y)·xᵀx̃ with θ' = θ − α(σ(θᵀx̃) − ỹ)x̃.
struct OneLayerCase {
  Tensor theta;      // D
  Tensor x_base;     // D
  double y_base = 0; // soft label in [0, 1]
  Tensor x_real;     // D
  double y_real = 0; // 0 or 1
  double alpha = 0.01;
};
double one_layer_meta_grad(const OneLayerCase& c);
// θ' of the case above.
Tensor one_layer_inner_step(const OneLayerCase& c);

// (ZᵀZ + λI)⁻¹ZᵀY by Gaussian elimination with partial pivoting.
Tensor rr_direct(const Tensor& z, const Tensor& y, double lambda);

}  // namespace ld::verify
