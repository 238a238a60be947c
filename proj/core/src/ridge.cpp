#include "ld/ridge.hpp"

#include "ld/errors.hpp"
#include "ld/linalg.hpp"

namespace ld {

namespace {

void check_solve_args(const Tensor& z, const Tensor& y, double lambda) {
  require_rank(z, 2, "solve_local");
  require_rank(y, 2, "solve_local");
  if (z.rows() == 0) throw ArgumentError("solve_local: empty batch");
  if (z.rows() != y.rows()) {
    throw DimensionError("solve_local: features " + shape_string(z.shape()) + " and labels " +
                         shape_string(y.shape()) + " disagree on batch size");
  }
  if (!(lambda > 0.0)) throw ArgumentError("solve_local: lambda must be positive");
}

}  // namespace

RRHead RRHead::zeros(std::size_t features_with_bias, std::size_t classes, double lambda, double alpha) {
  if (!(lambda > 0.0)) throw ArgumentError("RRHead: lambda must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("RRHead: alpha must be in (0, 1]");
  RRHead h;
  h.weights = Tensor({features_with_bias, classes});
  h.lambda = lambda;
  h.alpha = alpha;
  return h;
}

Tensor solve_local(const Tensor& z, const Tensor& y, double lambda) {
  check_solve_args(z, y, lambda);
  Tensor gram = linalg::matmul_nt(z, z);
  for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) += lambda;
  Tensor out = linalg::matmul_tn(z, linalg::spd_solve(gram, y));
  require_finite(out, "solve_local");
  return out;
}

ad::Var solve_local(const ad::Var& z, const ad::Var& y, double lambda) {
  check_solve_args(z.value(), y.value(), lambda);
  ad::Var gram = ad::add_diag(ad::matmul_nt(z, z), lambda);
  return ad::matmul_tn(z, ad::spd_solve(gram, y));
}

RRHead pseudo_step(RRHead head, const Tensor& local) {
  require_same_shape(head.weights, local, "pseudo_step");
  const double a = head.alpha;
  for (std::size_t i = 0; i < local.size(); ++i) head.weights[i] = (1.0 - a) * head.weights[i] + a * local[i];
  return head;
}

ad::Var pseudo_step(const ad::Var& weights, const ad::Var& local, double alpha) {
  return ad::add(ad::scale(weights, 1.0 - alpha), ad::scale(local, alpha));
}

Tensor predict(const RRHead& head, const Tensor& z) {
  return predict(ad::Var(head.weights), ad::Var(Tensor::scalar(head.calib)), ad::Var(z)).value();
}

ad::Var predict(const ad::Var& weights, const ad::Var& calib, const ad::Var& z) {
  return ad::softmax_rows(ad::scale_by(ad::matmul(z, weights), calib));
}

}  // namespace ld
