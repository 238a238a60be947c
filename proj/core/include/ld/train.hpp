#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "ld/models.hpp"
#include "ld/optim.hpp"
#include "ld/ridge.hpp"

// Model-side training steps shared by distillation and by retraining from
// scratch on a synthetic set.
namespace ld {

// Ridge model: feature extractor plus global RR head.
struct RidgeModel {
  ModelState extractor;
  RRHead head;
};

// Bias-augmented features of x under the extractor (untracked).
Tensor ridge_features(const ModelState& extractor, const Tensor& x);

// Solves the local ridge problem on (x, y) and takes one pseudo-gradient step
// on the global weights. Returns W_l.
Tensor ridge_pseudo_update(RidgeModel& model, const Tensor& x, const Tensor& y);

// One Adam step on the extractor parameters and calibration scale, using the
// soft cross-entropy of the current global head on (x, y). The head weights
// are held fixed. Returns the loss before the step.
double ridge_extractor_step(RidgeModel& model, Adam& adam, const Tensor& x, const Tensor& y);

// One Adam step on every parameter of a standard (softmax-linear) model.
double standard_step(ModelState& model, Adam& adam, const Tensor& x, const Tensor& y);

Tensor predict_ridge_of(const RidgeModel& model, const Tensor& x);

struct TrainSpec {
  ArchSpec arch;
  HeadKind head = HeadKind::ridge;
  std::size_t num_classes = 0;
  std::size_t steps = 1;
  std::size_t inner_batch = 10;
  double lr = 1e-3;
  double lambda = 1.0;
  double alpha = 0.01;
  std::uint64_t seed = 0;
};

class TrainedModel {
 public:
  TrainedModel(ModelState standard) : standard_(std::move(standard)) {}
  TrainedModel(RidgeModel ridge) : ridge_(std::move(ridge)) {}

  HeadKind head() const { return ridge_ ? HeadKind::ridge : HeadKind::standard; }
  Tensor predict(const Tensor& x) const;
  double accuracy(const Tensor& x, std::span<const int> labels) const;

  const std::optional<RidgeModel>& ridge() const { return ridge_; }
  const std::optional<ModelState>& standard() const { return standard_; }

 private:
  std::optional<ModelState> standard_;
  std::optional<RidgeModel> ridge_;
};

// Fresh model from spec.seed trained for spec.steps Adam steps on minibatches
// of the synthetic set (x: N×D, y: N×C soft labels). If given, `checkpoint`
// is called after each step listed in `checkpoints` (ascending).
using CheckpointFn = std::function<void(std::size_t step, const TrainedModel& model)>;
TrainedModel train_from_scratch(const TrainSpec& spec, const Tensor& x, const Tensor& y,
                                std::span<const std::size_t> checkpoints = {}, const CheckpointFn& checkpoint = {});

}  // namespace ld
