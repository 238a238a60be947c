#include "ld/verify.hpp"

#include <cmath>
#include <utility>

#include "ld/errors.hpp"

namespace ld::verify {

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff: eps must be positive");
  Tensor out(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericalError("finite_diff: function is not finite near coordinate " + std::to_string(i));
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

namespace {

double sigmoid(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

double inner(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("one_layer: vector lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Tensor one_layer_inner_step(const OneLayerCase& c) {
  const double err = sigmoid(inner(c.theta, c.x_base)) - c.y_base;
  Tensor out = c.theta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c.alpha * err * c.x_base[i];
  return out;
}

double one_layer_meta_grad(const OneLayerCase& c) {
  const Tensor theta2 = one_layer_inner_step(c);
  return c.alpha * (sigmoid(inner(theta2, c.x_real)) - c.y_real) * inner(c.x_real, c.x_base);
}

Tensor rr_direct(const Tensor& z, const Tensor& y, double lambda) {
  require_rank(z, 2, "rr_direct");
  require_rank(y, 2, "rr_direct");
  require_finite(z, "rr_direct");
  require_finite(y, "rr_direct");
  if (!(lambda > 0.0)) throw ArgumentError("rr_direct: lambda must be positive");
  if (z.rows() != y.rows()) throw DimensionError("rr_direct: Z and Y disagree on batch size");
  const std::size_t b = z.rows();
  const std::size_t f = z.cols();
  const std::size_t c = y.cols();

  // Augmented system [ZᵀZ + λI | ZᵀY], F×(F+C).
  const std::size_t w = f + c;
  std::vector<double> m(f * w, 0.0);
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b; ++k) s += z(k, i) * z(k, j);
      m[i * w + j] = s + (i == j ? lambda : 0.0);
    }
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b; ++k) s += z(k, i) * y(k, j);
      m[i * w + f + j] = s;
    }
  }

  for (std::size_t col = 0; col < f; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < f; ++r)
      if (std::abs(m[r * w + col]) > std::abs(m[piv * w + col])) piv = r;
    if (m[piv * w + col] == 0.0) throw NumericalError("rr_direct: singular system");
    if (piv != col)
      for (std::size_t j = 0; j < w; ++j) std::swap(m[piv * w + j], m[col * w + j]);
    for (std::size_t r = col + 1; r < f; ++r) {
      const double factor = m[r * w + col] / m[col * w + col];
      if (factor == 0.0) continue;
      for (std::size_t j = col; j < w; ++j) m[r * w + j] -= factor * m[col * w + j];
    }
  }

  Tensor out({f, c});
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t ii = f; ii-- > 0;) {
      double s = m[ii * w + f + j];
      for (std::size_t k = ii + 1; k < f; ++k) s -= m[ii * w + k] * out(k, j);
      out(ii, j) = s / m[ii * w + ii];
    }
  }
  require_finite(out, "rr_direct");
  return out;
}

}  // namespace ld::verify
