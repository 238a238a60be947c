#include "ld/selftest.hpp"

#include <algorithm>
#include <cmath>

#include "ld/distill.hpp"
#include "ld/rng.hpp"
#include "ld/ridge.hpp"
#include "ld/verify.hpp"

namespace ld::selftest {

namespace {

Tensor randn(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

Tensor random_simplex(std::size_t n, std::size_t c, Rng& rng) {
  Tensor t({n, c});
  for (double& v : t.data()) v = rng.uniform(0.05, 1.0);
  return project_labels(t);
}

Tensor random_one_hot(std::size_t n, std::size_t c, Rng& rng) {
  Tensor t({n, c});
  for (std::size_t i = 0; i < n; ++i) t(i, rng.below(c)) = 1.0;
  return t;
}

// Toy input geometry: 2×3 images, so D = 6.
ArchSpec toy_arch(ArchKind kind) {
  ArchSpec a = make_arch(kind, 2, 3);
  if (kind == ArchKind::mlp) {
    a.hidden = 7;
    a.feature_dim = 5;
  }
  return a;
}

struct Toy {
  Tensor x_inner, y_inner, x_outer, y_outer;
};

Toy toy_batches(std::size_t d, std::size_t c, Rng& rng) {
  const std::size_t n_inner = 5;
  const std::size_t n_outer = 8;
  return Toy{randn({n_inner, d}, rng), random_simplex(n_inner, c, rng), randn({n_outer, d}, rng),
             random_one_hot(n_outer, c, rng)};
}

// Outer loss of the ridge variant evaluated with plain tensor arithmetic and
// the direct (non-Woodbury) ridge solve.
double rr_outer_loss(const RRHead& head, const Tensor& z_inner, const Tensor& y_inner, const Tensor& z_outer,
                     const Tensor& y_outer) {
  const Tensor local = verify::rr_direct(z_inner, y_inner, head.lambda);
  const std::size_t f = local.rows();
  const std::size_t c = local.cols();
  double loss = 0.0;
  for (std::size_t i = 0; i < z_outer.rows(); ++i) {
    std::vector<double> logits(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < f; ++k)
        s += z_outer(i, k) * ((1.0 - head.alpha) * head.weights(k, j) + head.alpha * local(k, j));
      logits[j] = head.calib * s;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (double l : logits) norm += std::exp(l - mx);
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(logits[j] - mx) / norm;
      loss -= y_outer(i, j) * std::log(std::max(p, 1e-12));
    }
  }
  return loss / static_cast<double>(z_outer.rows());
}

std::vector<Tensor> params_of(const ModelState& m) {
  std::vector<Tensor> p = m.theta;
  p.insert(p.end(), m.head.begin(), m.head.end());
  return p;
}

Tensor forward(const ModelState& m, const std::vector<ad::Var>& p, const Tensor& x) {
  const auto nt = static_cast<std::ptrdiff_t>(m.theta.size());
  std::vector<ad::Var> theta(p.begin(), p.begin() + nt);
  std::vector<ad::Var> head(p.begin() + nt, p.end());
  return predict_standard(m.arch, theta, head, ad::Var(x)).value();
}

// Outer loss after one SGD step on the inner loss; labels may be off-simplex.
double second_order_outer_loss(const ModelState& m, const Toy& t, const Tensor& y_inner, double alpha) {
  std::vector<Tensor> p = params_of(m);
  {
    ad::Tape tape;
    std::vector<ad::Var> vars = track_all(tape, p);
    const auto nt = static_cast<std::ptrdiff_t>(m.theta.size());
    std::vector<ad::Var> theta(vars.begin(), vars.begin() + nt);
    std::vector<ad::Var> head(vars.begin() + nt, vars.end());
    ad::Var loss = soft_ce_unchecked(predict_standard(m.arch, theta, head, ad::Var(t.x_inner)), ad::Var(y_inner));
    std::vector<Tensor> g = ad::grad(loss, vars);
    for (std::size_t k = 0; k < p.size(); ++k)
      for (std::size_t i = 0; i < p[k].size(); ++i) p[k][i] -= alpha * g[k][i];
  }
  const Tensor probs = forward(m, constants(p), t.x_outer);
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t j = 0; j < probs.cols(); ++j) loss -= t.y_outer(i, j) * std::log(std::max(probs(i, j), 1e-12));
  return loss / static_cast<double>(probs.rows());
}

ModelState random_standard(ArchKind kind, std::size_t classes, Rng& rng) {
  ModelState m = init_model(toy_arch(kind), classes, HeadKind::standard, rng.next());
  // Larger-than-init head weights keep the predictions away from uniform.
  for (Tensor& h : m.head)
    for (double& v : h.data()) v += 0.5 * rng.normal();
  return m;
}

}  // namespace

Measurement woodbury_vs_direct(std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "woodbury"));
  const double lambdas[] = {0.1, 1.0, 10.0};
  Measurement m{instances, 0.0};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t b = 1 + rng.below(30);
    const std::size_t f = 1 + rng.below(20);
    const std::size_t c = 1 + rng.below(10);
    const double lambda = lambdas[i % 3];
    const Tensor z = randn({b, f}, rng);
    const Tensor y = randn({b, c}, rng);
    m.worst = std::max(m.worst, max_abs_diff(solve_local(z, y, lambda), verify::rr_direct(z, y, lambda)));
  }
  return m;
}

Measurement rr_meta_grad_vs_fd(ArchKind arch, std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "rr-fd", static_cast<std::uint64_t>(arch)));
  const double lambdas[] = {0.1, 1.0, 10.0};
  Measurement m{instances, 0.0};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t c = 2 + rng.below(3);
    const ArchSpec spec = toy_arch(arch);
    RidgeModel model{init_model(spec, c, HeadKind::ridge, rng.next()),
                     RRHead::zeros(feature_width(spec) + 1, c, lambdas[i % 3], rng.uniform(0.1, 1.0))};
    model.head.weights = randn(model.head.weights.shape(), rng, 0.5);
    model.head.calib = rng.uniform(0.5, 2.0);
    const Toy t = toy_batches(spec.input_dim(), c, rng);

    const Tensor analytic = meta_grad_rr(model, t.x_inner, t.y_inner, t.x_outer, t.y_outer).grad;
    const Tensor z_inner = ridge_features(model.extractor, t.x_inner);
    const Tensor z_outer = ridge_features(model.extractor, t.x_outer);
    const Tensor numeric = verify::finite_diff(
        [&](const Tensor& y) { return rr_outer_loss(model.head, z_inner, y, z_outer, t.y_outer); }, t.y_inner);
    m.worst = std::max(m.worst, relative_error(analytic, numeric));
  }
  return m;
}

Measurement second_order_vs_fd(ArchKind arch, std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "so-fd", static_cast<std::uint64_t>(arch)));
  Measurement m{instances, 0.0};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t c = 2 + rng.below(3);
    const ModelState model = random_standard(arch, c, rng);
    const Toy t = toy_batches(model.arch.input_dim(), c, rng);
    const double alpha = rng.uniform(0.05, 0.5);
    const Tensor analytic = meta_grad_second_order(model, t.x_inner, t.y_inner, t.x_outer, t.y_outer, alpha).grad;
    const Tensor numeric = verify::finite_diff(
        [&](const Tensor& y) { return second_order_outer_loss(model, t, y, alpha); }, t.y_inner);
    m.worst = std::max(m.worst, relative_error(analytic, numeric));
  }
  return m;
}

Measurement second_order_forms(ArchKind arch, std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "so-forms", static_cast<std::uint64_t>(arch)));
  Measurement m{instances, 0.0};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t c = 2 + rng.below(3);
    const ModelState model = random_standard(arch, c, rng);
    const Toy t = toy_batches(model.arch.input_dim(), c, rng);
    const double alpha = rng.uniform(0.01, 0.5);
    const Tensor a = meta_grad_second_order(model, t.x_inner, t.y_inner, t.x_outer, t.y_outer, alpha).grad;
    const Tensor b = meta_grad_second_order_unrolled(model, t.x_inner, t.y_inner, t.x_outer, t.y_outer, alpha).grad;
    m.worst = std::max(m.worst, max_abs_diff(a, b));
  }
  return m;
}

Measurement one_layer_closed_form(std::size_t instances, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "one-layer"));
  Measurement m{instances, 0.0};
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t d = 2 + rng.below(9);
    verify::OneLayerCase c;
    c.theta = randn({d}, rng);
    c.x_base = randn({d}, rng);
    c.y_base = rng.uniform();
    c.x_real = randn({d}, rng);
    c.y_real = static_cast<double>(rng.below(2));
    c.alpha = rng.uniform(0.001, 1.0);

    ModelState model = init_model(make_arch(ArchKind::logistic, 1, d), 2, HeadKind::standard, 0);
    model.head = {c.theta.reshaped({d, 1})};
    const Tensor y_inner = Tensor::row({1.0 - c.y_base, c.y_base});
    const Tensor y_outer = Tensor::row({1.0 - c.y_real, c.y_real});
    const Tensor g = meta_grad_second_order(model, c.x_base.reshaped({1, d}), y_inner, c.x_real.reshaped({1, d}),
                                            y_outer, c.alpha)
                         .grad;
    // The scalar label enters as [1−ỹ, ỹ], so d/dỹ = g₁ − g₀.
    m.worst = std::max(m.worst, std::abs((g(0, 1) - g(0, 0)) - verify::one_layer_meta_grad(c)));
  }
  return m;
}

Measurement simplex_fuzz(std::size_t updates, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "simplex"));
  Measurement m{updates, 0.0};
  Tensor labels = random_simplex(8, 10, rng);
  for (std::size_t u = 0; u < updates; ++u) {
    const double scale = std::pow(10.0, rng.uniform(-4.0, 1.0));
    Tensor raw = labels;
    for (double& v : raw.data()) v += scale * rng.normal();
    if (rng.below(20) == 0) {
      const std::size_t r = rng.below(raw.rows());
      for (std::size_t j = 0; j < raw.cols(); ++j) raw(r, j) = -std::abs(raw(r, j)) - 1e-3;
    }
    labels = project_labels(raw);
    for (std::size_t i = 0; i < labels.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < labels.cols(); ++j) {
        m.worst = std::max(m.worst, -labels(i, j));
        s += labels(i, j);
      }
      m.worst = std::max(m.worst, std::abs(s - 1.0));
    }
  }
  return m;
}

std::vector<Check> run_all(std::uint64_t seed) {
  std::vector<Check> out;
  auto add = [&](std::string name, Measurement measured, double tol) {
    out.push_back(Check{std::move(name), measured.worst < tol, measured, tol});
  };
  add("ridge solve: Woodbury vs direct", woodbury_vs_direct(100, seed), 1e-8);
  for (ArchKind a : {ArchKind::linear, ArchKind::mlp}) {
    add("rr meta-gradient vs finite differences (" + to_string(a) + ")", rr_meta_grad_vs_fd(a, 20, seed), 1e-5);
    add("second-order meta-gradient vs finite differences (" + to_string(a) + ")", second_order_vs_fd(a, 20, seed),
        1e-5);
    add("second-order dot-product vs unrolled (" + to_string(a) + ")", second_order_forms(a, 20, seed), 1e-8);
  }
  add("one-layer closed form", one_layer_closed_form(100, seed), 1e-10);
  add("simplex projection fuzz", simplex_fuzz(10000, seed), 1e-9);
  return out;
}

}  // namespace ld::selftest
