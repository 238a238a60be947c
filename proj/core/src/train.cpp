#include "ld/train.hpp"

#include "ld/datasets.hpp"
#include "ld/errors.hpp"

namespace ld {

using ad::Var;

Tensor ridge_features(const ModelState& extractor, const Tensor& x) {
  return with_bias_column(features_of(extractor, x));
}

Tensor ridge_pseudo_update(RidgeModel& model, const Tensor& x, const Tensor& y) {
  Tensor local = solve_local(ridge_features(model.extractor, x), y, model.head.lambda);
  model.head = pseudo_step(std::move(model.head), local);
  return local;
}

double ridge_extractor_step(RidgeModel& model, Adam& adam, const Tensor& x, const Tensor& y) {
  ad::Tape tape;
  std::vector<Var> theta = track_all(tape, model.extractor.theta);
  Var calib = tape.variable(Tensor::scalar(model.head.calib));
  Var z = with_bias_column(features(model.extractor.arch, theta, Var(x)));
  Var loss = soft_ce(predict(Var(model.head.weights), calib, z), Var(y));

  std::vector<Var> wrt = theta;
  wrt.push_back(calib);
  std::vector<Tensor> grads = ad::grad(loss, wrt);

  std::vector<Tensor> params = model.extractor.theta;
  params.push_back(Tensor::scalar(model.head.calib));
  adam.step(params, grads);
  model.head.calib = params.back().item();
  params.pop_back();
  model.extractor.theta = std::move(params);
  return loss.value().item();
}

double standard_step(ModelState& model, Adam& adam, const Tensor& x, const Tensor& y) {
  ad::Tape tape;
  std::vector<Var> theta = track_all(tape, model.theta);
  std::vector<Var> head = track_all(tape, model.head);
  Var loss = soft_ce(predict_standard(model.arch, theta, head, Var(x)), Var(y));

  std::vector<Var> wrt = theta;
  wrt.insert(wrt.end(), head.begin(), head.end());
  std::vector<Tensor> grads = ad::grad(loss, wrt);

  std::vector<Tensor> params = model.theta;
  params.insert(params.end(), model.head.begin(), model.head.end());
  adam.step(params, grads);
  const std::size_t nt = model.theta.size();
  model.theta.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(nt));
  model.head.assign(params.begin() + static_cast<std::ptrdiff_t>(nt), params.end());
  return loss.value().item();
}

Tensor predict_ridge_of(const RidgeModel& model, const Tensor& x) {
  return predict(model.head, ridge_features(model.extractor, x));
}

Tensor TrainedModel::predict(const Tensor& x) const {
  if (ridge_) return predict_ridge_of(*ridge_, x);
  return predict_standard_of(*standard_, x);
}

double TrainedModel::accuracy(const Tensor& x, std::span<const int> labels) const {
  return ld::accuracy(predict(x), labels);
}

TrainedModel train_from_scratch(const TrainSpec& spec, const Tensor& x, const Tensor& y,
                                std::span<const std::size_t> checkpoints, const CheckpointFn& checkpoint) {
  if (spec.steps == 0) throw ArgumentError("train: steps must be at least 1");
  if (x.rows() != y.rows()) throw DimensionError("train: images and labels disagree on count");
  if (y.cols() != spec.num_classes) {
    throw IncompatibleArtifact("train: label width " + std::to_string(y.cols()) + " does not match " +
                               std::to_string(spec.num_classes) + " classes");
  }
  const std::size_t n = x.rows();
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  MinibatchStream batches(pool, std::min(spec.inner_batch, n), derive_seed(spec.seed, "inner"));
  AdamConfig opt;
  opt.lr = spec.lr;
  Adam adam(opt);
  std::size_t next_ckpt = 0;

  auto emit = [&](std::size_t step, const auto& make_model) {
    while (checkpoint && next_ckpt < checkpoints.size() && checkpoints[next_ckpt] == step) {
      checkpoint(step, make_model());
      ++next_ckpt;
    }
  };

  if (spec.head == HeadKind::ridge) {
    ModelState extractor = init_model(spec.arch, spec.num_classes, HeadKind::ridge, derive_seed(spec.seed, "init"));
    RidgeModel model{std::move(extractor),
                     RRHead::zeros(feature_width(spec.arch) + 1, spec.num_classes, spec.lambda, spec.alpha)};
    for (std::size_t step = 1; step <= spec.steps; ++step) {
      const auto rows = batches.next();
      const Tensor xb = x.gather_rows(rows);
      const Tensor yb = y.gather_rows(rows);
      ridge_pseudo_update(model, xb, yb);
      ridge_extractor_step(model, adam, xb, yb);
      emit(step, [&] { return TrainedModel(model); });
    }
    return TrainedModel(std::move(model));
  }

  ModelState model = init_model(spec.arch, spec.num_classes, HeadKind::standard, derive_seed(spec.seed, "init"));
  for (std::size_t step = 1; step <= spec.steps; ++step) {
    const auto rows = batches.next();
    standard_step(model, adam, x.gather_rows(rows), y.gather_rows(rows));
    emit(step, [&] { return TrainedModel(model); });
  }
  return TrainedModel(std::move(model));
}

}  // namespace ld
