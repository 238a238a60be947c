#include "ld/linalg.hpp"

#include <cmath>
#include <string>

#include "ld/errors.hpp"

namespace ld::linalg {
namespace {

void require_matrix(const Tensor& t, const char* op) { require_rank(t, 2, op); }

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) mismatch("matmul", a, b);
  Tensor out({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) mismatch("matmul_nt", a, b);
  Tensor out({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != m) mismatch("matmul_tn", a, b);
  Tensor out({k, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (std::size_t r = 0; r < m; ++r) {
    const double* brow = pb + r * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = pa[r * k + i];
      if (av == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor cholesky(const Tensor& a) {
  require_matrix(a, "cholesky");
  const std::size_t n = a.rows();
  if (a.cols() != n) throw DimensionError("cholesky: square matrix expected, got " + shape_string(a.shape()));
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t p = 0; p < j; ++p) d -= l(j, p) * l(j, p);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NumericalError("cholesky: matrix is not positive definite (pivot " + std::to_string(j) + ")");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Tensor cholesky_solve(const Tensor& chol, const Tensor& b) {
  require_matrix(chol, "cholesky_solve");
  require_matrix(b, "cholesky_solve");
  const std::size_t n = chol.rows(), m = b.cols();
  if (b.rows() != n) mismatch("cholesky_solve", chol, b);
  Tensor x = b;
  // forward: L y = b
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < i; ++p) {
      const double lip = chol(i, p);
      for (std::size_t c = 0; c < m; ++c) x(i, c) -= lip * x(p, c);
    }
    const double d = chol(i, i);
    for (std::size_t c = 0; c < m; ++c) x(i, c) /= d;
  }
  // backward: Lᵀ x = y
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t p = ii + 1; p < n; ++p) {
      const double lpi = chol(p, ii);
      for (std::size_t c = 0; c < m; ++c) x(ii, c) -= lpi * x(p, c);
    }
    const double d = chol(ii, ii);
    for (std::size_t c = 0; c < m; ++c) x(ii, c) /= d;
  }
  return x;
}

Tensor spd_solve(const Tensor& a, const Tensor& b) {
  Tensor x = cholesky_solve(cholesky(a), b);
  require_finite(x, "spd_solve");
  return x;
}

}  // namespace ld::linalg
