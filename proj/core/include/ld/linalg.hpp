#pragma once

#include "ld/tensor.hpp"

// Plain (untracked) kernels. All are single-threaded and deterministic.
namespace ld::linalg {

// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m×k] · b[n×k]ᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a[m×k]ᵀ · b[m×n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

// Lower-triangular L with a = L·Lᵀ. Throws NumericalError if a is not
// (numerically) positive definite.
Tensor cholesky(const Tensor& a);
// Solves (L·Lᵀ) x = b for x, b[n×m].
Tensor cholesky_solve(const Tensor& chol, const Tensor& b);
// a[n×n] symmetric positive definite; returns a⁻¹ b without forming a⁻¹.
Tensor spd_solve(const Tensor& a, const Tensor& b);

}  // namespace ld::linalg
