#include "ld/distill.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ld/errors.hpp"
#include "ld/rng.hpp"

namespace ld {

using ad::Var;

std::string to_string(Algo algo) { return algo == Algo::rr ? "rr" : "second_order"; }

Algo parse_algo(const std::string& name) {
  if (name == "rr") return Algo::rr;
  if (name == "second_order" || name == "second-order") return Algo::second_order;
  throw ArgumentError("unknown algorithm '" + name + "' (expected rr or second_order)");
}

std::string to_string(BaseMode mode) { return mode == BaseMode::balanced ? "balanced" : "unstructured"; }

BaseMode parse_base_mode(const std::string& name) {
  if (name == "balanced") return BaseMode::balanced;
  if (name == "unstructured") return BaseMode::unstructured;
  throw ArgumentError("unknown base mode '" + name + "' (expected balanced or unstructured)");
}

// ---- configuration -----------------------------------------------------------

void RunConfig::validate() const {
  if (epochs == 0) throw ArgumentError("config: epochs must be at least 1");
  if (outer_batch == 0) throw ArgumentError("config: outer batch must be at least 1");
  if (base_examples == 0) throw ArgumentError("config: need at least one base example");
  if (inner_batch > base_examples) throw ArgumentError("config: inner batch larger than the base set");
  if (!(beta > 0.0)) throw ArgumentError("config: label step size must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("config: alpha must be in (0, 1]");
  if (!(lambda > 0.0)) throw ArgumentError("config: lambda must be positive");
  if (moving_window == 0 || patience == 0) throw ArgumentError("config: monitor window and patience must be positive");
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw ArgumentError("config: validation fraction must be in (0, 1)");
  if (clip_norm && !(*clip_norm > 0.0)) throw ArgumentError("config: clip norm must be positive");
  if (max_iterations && *max_iterations == 0) throw ArgumentError("config: max iterations must be at least 1");
  if (target_subsample && *target_subsample == 0) throw ArgumentError("config: target subsample must be positive");
}

std::size_t RunConfig::resolved_inner_batch() const {
  return inner_batch != 0 ? inner_batch : std::min(default_inner_batch(base_examples), base_examples);
}

BaseMode RunConfig::resolved_base_mode() const {
  if (base_mode) return *base_mode;
  return source_dataset == target_dataset ? BaseMode::balanced : BaseMode::unstructured;
}

ArchSpec RunConfig::arch_spec(std::size_t height, std::size_t width) const {
  ArchSpec a = make_arch(arch, height, width);
  if (hidden != 0) a.hidden = hidden;
  if (feature_dim != 0 && (arch == ArchKind::linear || arch == ArchKind::mlp)) a.feature_dim = feature_dim;
  feature_width(a);
  return a;
}

// ---- label projection --------------------------------------------------------

Tensor project_labels(const Tensor& labels) {
  require_rank(labels, 2, "project_labels");
  require_finite(labels, "project_labels");
  Tensor out = labels;
  const std::size_t c = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out(i, j) = std::max(out(i, j), 0.0);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) = s > 0.0 ? out(i, j) / s : 1.0 / static_cast<double>(c);
  }
  return out;
}

Var soft_ce_unchecked(const Var& pred, const Var& target) {
  require_same_shape(pred.value(), target.value(), "soft_ce");
  require_rank(pred.value(), 2, "soft_ce");
  const double batch = static_cast<double>(pred.value().rows());
  return ad::scale(ad::dot(target, ad::log_clamped(pred, 1e-12)), -1.0 / batch);
}

// ---- meta-gradients ----------------------------------------------------------

namespace {

void check_batches(const Tensor& x_inner, const Tensor& y_inner, const Tensor& x_outer, const Tensor& y_outer,
                   const char* op) {
  require_rank(x_inner, 2, op);
  require_rank(y_inner, 2, op);
  require_rank(x_outer, 2, op);
  require_rank(y_outer, 2, op);
  if (x_inner.rows() != y_inner.rows() || x_outer.rows() != y_outer.rows())
    throw DimensionError(std::string(op) + ": inputs and labels disagree on batch size");
  if (y_inner.cols() != y_outer.cols()) throw DimensionError(std::string(op) + ": class count differs");
  if (x_inner.rows() == 0 || x_outer.rows() == 0) throw DimensionError(std::string(op) + ": empty batch");
}

std::vector<int> argmax_labels(const Tensor& y) {
  std::vector<int> out(y.rows());
  for (std::size_t i = 0; i < y.rows(); ++i) out[i] = static_cast<int>(argmax_row(y, i));
  return out;
}

// All trainable tensors of a standard model, extractor first.
std::vector<Tensor> all_params(const ModelState& m) {
  std::vector<Tensor> p = m.theta;
  p.insert(p.end(), m.head.begin(), m.head.end());
  return p;
}

struct SplitVars {
  std::vector<Var> theta;
  std::vector<Var> head;
};

SplitVars split_params(const std::vector<Var>& all, std::size_t n_theta) {
  SplitVars s;
  s.theta.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_theta));
  s.head.assign(all.begin() + static_cast<std::ptrdiff_t>(n_theta), all.end());
  return s;
}

Var forward_standard(const ModelState& m, const std::vector<Var>& params, const Var& x) {
  SplitVars s = split_params(params, m.theta.size());
  return predict_standard(m.arch, s.theta, s.head, x);
}

}  // namespace

MetaGradient meta_grad_rr_features(const RRHead& head, const Tensor& z_inner, const Tensor& y_inner,
                                   const Tensor& z_outer, const Tensor& y_outer, double loss_scale) {
  check_batches(z_inner, y_inner, z_outer, y_outer, "meta_grad_rr");
  if (z_inner.cols() != head.weights.rows() || z_outer.cols() != head.weights.rows())
    throw DimensionError("meta_grad_rr: feature width does not match the head");

  ad::Tape tape;
  Var y = tape.variable(y_inner);
  Var local = solve_local(Var(z_inner), y, head.lambda);
  Var w = pseudo_step(Var(head.weights), local, head.alpha);
  Var probs = predict(w, Var(Tensor::scalar(head.calib)), Var(z_outer));
  Var loss = ad::scale(soft_ce(probs, Var(y_outer)), loss_scale);

  MetaGradient out;
  out.grad = ad::grad(loss, y);
  out.outer_probs = probs.value();
  out.outer_loss = loss.value().item();
  out.local_weights = local.value();
  return out;
}

MetaGradient meta_grad_rr(const RidgeModel& model, const Tensor& x_inner, const Tensor& y_inner,
                          const Tensor& x_outer, const Tensor& y_outer, double loss_scale) {
  return meta_grad_rr_features(model.head, ridge_features(model.extractor, x_inner), y_inner,
                               ridge_features(model.extractor, x_outer), y_outer, loss_scale);
}

MetaGradient meta_grad_second_order(const ModelState& model, const Tensor& x_inner, const Tensor& y_inner,
                                    const Tensor& x_outer, const Tensor& y_outer, double alpha) {
  check_batches(x_inner, y_inner, x_outer, y_outer, "meta_grad_second_order");
  const std::vector<Tensor> params = all_params(model);
  const std::size_t n_inner = x_inner.rows();
  const std::size_t classes = y_inner.cols();

  // Θ' = Θ − α∇_Θ L_in
  std::vector<Tensor> updated;
  {
    ad::Tape tape;
    std::vector<Var> p = track_all(tape, params);
    Var loss = soft_ce_unchecked(forward_standard(model, p, Var(x_inner)), Var(y_inner));
    updated = params;
    sgd_step(updated, ad::grad(loss, p), alpha);
  }

  // ∇_Θ' L_out
  MetaGradient out;
  std::vector<Tensor> outer_grad;
  {
    ad::Tape tape;
    std::vector<Var> p = track_all(tape, updated);
    Var probs = forward_standard(model, p, Var(x_outer));
    Var loss = soft_ce(probs, Var(y_outer));
    outer_grad = ad::grad(loss, p);
    out.outer_probs = probs.value();
    out.outer_loss = loss.value().item();
  }

  out.grad = Tensor({n_inner, classes});
  const double coef = alpha / static_cast<double>(n_inner);
  for (std::size_t j = 0; j < n_inner; ++j) {
    ad::Tape tape;
    std::vector<Var> p = track_all(tape, params);
    const std::size_t row[] = {j};
    Var logp = ad::log_clamped(forward_standard(model, p, Var(x_inner.gather_rows(row))), 1e-12);
    for (std::size_t c = 0; c < classes; ++c) {
      Tensor pick({1, classes});
      pick[c] = 1.0;
      std::vector<Tensor> g = ad::grad(ad::dot(logp, Var(std::move(pick))), p);
      double acc = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k)
        for (std::size_t i = 0; i < g[k].size(); ++i) acc += g[k][i] * outer_grad[k][i];
      out.grad(j, c) = coef * acc;
    }
  }
  require_finite(out.grad, "meta_grad_second_order");
  return out;
}

MetaGradient meta_grad_second_order_unrolled(const ModelState& model, const Tensor& x_inner, const Tensor& y_inner,
                                             const Tensor& x_outer, const Tensor& y_outer, double alpha) {
  check_batches(x_inner, y_inner, x_outer, y_outer, "meta_grad_second_order");
  ad::Tape tape;
  std::vector<Var> p = track_all(tape, all_params(model));
  Var y = tape.variable(y_inner);
  Var inner = soft_ce_unchecked(forward_standard(model, p, Var(x_inner)), y);
  std::vector<Var> g = ad::grad_graph(inner, p);
  std::vector<Var> updated(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) updated[k] = ad::sub(p[k], ad::scale(g[k], alpha));
  Var probs = forward_standard(model, updated, Var(x_outer));
  Var loss = soft_ce(probs, Var(y_outer));

  MetaGradient out;
  out.grad = ad::grad(loss, y);
  out.outer_probs = probs.value();
  out.outer_loss = loss.value().item();
  return out;
}

// ---- distillation loop -------------------------------------------------------

namespace {

std::vector<std::size_t> iota_pool(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

LabeledDataset prepare_target(const RunConfig& cfg, const LabeledDataset& target) {
  if (!cfg.target_subsample || *cfg.target_subsample >= target.size()) return target;
  return subsample(target, *cfg.target_subsample, derive_seed(cfg.seed, "subsample"));
}

std::size_t median_of(std::vector<std::size_t> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  if (v.size() % 2 == 1) return v[mid];
  return (v[mid - 1] + v[mid] + 1) / 2;
}

}  // namespace

Distiller::Distiller(RunConfig config, const LabeledDataset& source, const LabeledDataset& target)
    : config_((config.validate(), std::move(config))),
      arch_(config_.arch_spec(source.height(), source.width())),
      target_(prepare_target(config_, target)),
      split_(make_split(target_.size(), config_.val_frac, derive_seed(config_.seed, "split"))),
      synthetic_(select_base(source, config_.base_examples, config_.resolved_base_mode(),
                             derive_seed(config_.seed, "base"), target.num_classes)),
      inner_batch_(config_.resolved_inner_batch()),
      inner_stream_(iota_pool(config_.base_examples), inner_batch_, derive_seed(config_.seed, "inner")),
      outer_stream_(split_.train, config_.outer_batch, derive_seed(config_.seed, "outer")),
      labels_(synthetic_.soft_labels),
      label_adam_(AdamConfig{.lr = config_.beta, .clip_norm = config_.clip_norm}),
      model_adam_(AdamConfig{.lr = config_.beta, .clip_norm = config_.clip_norm}),
      monitor_(config_.moving_window, config_.patience) {
  if (source.height() != target.height() || source.width() != target.width())
    throw DimensionError("distill: source and target images differ in size");
  if (split_.validation.empty() && config_.validate_each_epoch)
    throw ArgumentError("distill: validation split is empty");
  per_epoch_ = outer_stream_.batches_per_epoch();
  total_iterations_ = config_.epochs * per_epoch_;
  if (config_.max_iterations) total_iterations_ = std::min(total_iterations_, *config_.max_iterations);
  init_model();
}

void Distiller::init_model() {
  const std::size_t classes = labels_.cols();
  const std::uint64_t seed = derive_seed(config_.seed, "model", reset_count_);
  if (config_.algo == Algo::rr) {
    ModelState extractor = ld::init_model(arch_, classes, HeadKind::ridge, seed);
    ridge_ = RidgeModel{std::move(extractor),
                        RRHead::zeros(feature_width(arch_) + 1, classes, config_.lambda, config_.alpha)};
  } else {
    standard_ = ld::init_model(arch_, classes, HeadKind::standard, seed);
  }
}

void Distiller::reset_model() {
  ++reset_count_;
  init_model();
  model_adam_.reset();
  monitor_.clear();
}

std::size_t Distiller::current_steps() const {
  if (!intervals_.empty()) return intervals_.back();
  return std::max<std::size_t>(since_reset_, 1);
}

std::string Distiller::diagnostics(const std::string& cause) const {
  std::ostringstream os;
  os << "distillation aborted at iteration " << iteration_ << ": " << cause << "\n"
     << "  resets=" << reset_count_ << " since_reset=" << since_reset_ << " T_i=" << current_steps() << "\n";
  double lo = 0.0;
  double hi = 0.0;
  bool finite = true;
  if (labels_.size() > 0) {
    lo = hi = labels_[0];
    for (double v : labels_.data()) {
      if (!std::isfinite(v)) finite = false;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  os << "  labels: min=" << lo << " max=" << hi << (finite ? "" : " (non-finite entries)") << "\n";
  if (ridge_) os << "  calib=" << ridge_->head.calib << " |W|=" << norm2(ridge_->head.weights) << "\n";
  os << "  monitor: average=" << monitor_.moving_average() << " best=" << monitor_.best()
     << " since_best=" << monitor_.since_best();
  return os.str();
}

IterationRecord Distiller::step() {
  if (iteration_ >= total_iterations_) throw ArgumentError("distill: iteration budget exhausted");
  ++iteration_;
  ++since_reset_;

  const std::vector<std::size_t> inner_rows = inner_stream_.next();
  const std::vector<std::size_t> outer_rows = outer_stream_.next();
  const Tensor x_inner = synthetic_.images.gather_rows(inner_rows);
  const Tensor x_outer = target_.flat(outer_rows);
  const Tensor y_outer = target_.one_hot(outer_rows);

  IterationRecord rec;
  rec.iteration = iteration_;
  try {
    MetaGradient mg;
    if (config_.algo == Algo::rr) {
      const Tensor z_inner = ridge_features(ridge_->extractor, x_inner);
      const Tensor z_outer = ridge_features(ridge_->extractor, x_outer);
      mg = meta_grad_rr_features(ridge_->head, z_inner, labels_.gather_rows(inner_rows), z_outer, y_outer);
      ridge_->head = pseudo_step(std::move(ridge_->head), mg.local_weights);
    } else {
      mg = meta_grad_second_order(*standard_, x_inner, labels_.gather_rows(inner_rows), x_outer, y_outer,
                                  config_.alpha);
    }

    Tensor full_grad(labels_.shape());
    for (std::size_t j = 0; j < inner_rows.size(); ++j)
      for (std::size_t c = 0; c < labels_.cols(); ++c) full_grad(inner_rows[j], c) += mg.grad(j, c);
    label_adam_.step(labels_, full_grad);
    labels_ = project_labels(labels_);

    const Tensor y_inner = labels_.gather_rows(inner_rows);
    if (config_.algo == Algo::rr) {
      ridge_extractor_step(*ridge_, model_adam_, x_inner, y_inner);
    } else {
      standard_step(*standard_, model_adam_, x_inner, y_inner);
    }

    const std::vector<int> truth = argmax_labels(y_outer);
    rec.outer_accuracy = accuracy(mg.outer_probs, truth);
    rec.outer_loss = mg.outer_loss;
    if (!std::isfinite(rec.outer_loss)) throw NumericalError("non-finite outer loss");
    last_grad_ = std::move(mg.grad);
    rec.meta_grad = &last_grad_;
  } catch (const DistillAborted&) {
    throw;
  } catch (const NumericalError& e) {
    throw DistillAborted(diagnostics(e.what()));
  }

  if (monitor_.update(rec.outer_accuracy)) {
    intervals_.push_back(since_reset_);
    since_reset_ = 0;
    reset_model();
    rec.reset = true;
  }
  return rec;
}

double Distiller::validate_labels(std::uint64_t seed) const {
  TrainSpec spec;
  spec.arch = arch_;
  spec.head = config_.algo == Algo::rr ? HeadKind::ridge : HeadKind::standard;
  spec.num_classes = labels_.cols();
  spec.steps = current_steps();
  spec.inner_batch = inner_batch_;
  spec.lambda = config_.lambda;
  spec.alpha = config_.alpha;
  spec.seed = seed;
  TrainedModel model = train_from_scratch(spec, synthetic_.images, labels_);
  std::vector<int> truth(split_.validation.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = target_.labels[split_.validation[i]];
  return model.accuracy(target_.flat(split_.validation), truth);
}

DistillArtifact Distiller::run(const IterationObserver& observer) {
  DistillArtifact art;
  art.source_dataset = config_.source_dataset;
  art.target_dataset = config_.target_dataset;
  art.base_indices = synthetic_.base_indices;
  art.config = config_;
  art.seed = config_.seed;

  Tensor best_labels = labels_;
  double best_val = -1.0;
  while (iteration_ < total_iterations_) {
    IterationRecord rec = step();
    if (observer) observer(rec);
    const bool epoch_end = iteration_ % per_epoch_ == 0 || iteration_ == total_iterations_;
    if (config_.validate_each_epoch && epoch_end) {
      const std::size_t epoch = (iteration_ + per_epoch_ - 1) / per_epoch_;
      const double acc = validate_labels(derive_seed(config_.seed, "validate", epoch));
      art.val_history.push_back(acc);
      if (acc > best_val) {
        best_val = acc;
        best_labels = labels_;
        art.selected_epoch = epoch;
      }
    }
  }

  art.labels = config_.validate_each_epoch ? best_labels : labels_;
  art.val_acc = std::max(best_val, 0.0);
  art.iterations = iteration_;
  art.resets = intervals_.size();
  art.steps = intervals_.empty() ? since_reset_ : intervals_.back();
  art.steps_median = intervals_.empty() ? art.steps : median_of(intervals_);
  return art;
}

DistillArtifact distill(const RunConfig& config, const LabeledDataset& source, const LabeledDataset& target,
                        const IterationObserver& observer) {
  Distiller d(config, source, target);
  return d.run(observer);
}

}  // namespace ld
