#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ld/datasets.hpp"
#include "ld/errors.hpp"
#include "ld/models.hpp"
#include "ld/optim.hpp"
#include "ld/train.hpp"

namespace ld {

enum class Algo { rr, second_order };
std::string to_string(Algo algo);
Algo parse_algo(const std::string& name);

std::string to_string(BaseMode mode);
BaseMode parse_base_mode(const std::string& name);

struct RunConfig {
  Algo algo = Algo::rr;
  ArchKind arch = ArchKind::mlp;
  std::size_t hidden = 0;       // 0: arch default
  std::size_t feature_dim = 0;  // 0: arch default
  std::string source_dataset = "mnist";
  std::string target_dataset = "mnist";
  std::size_t base_examples = 100;
  std::optional<BaseMode> base_mode;  // default: balanced within-dataset, unstructured across
  std::size_t epochs = 400;
  std::size_t outer_batch = 1024;   // N_o
  std::size_t inner_batch = 0;      // N_i; 0 picks default_inner_batch(base_examples)
  double beta = 1e-3;               // Adam step for labels and model
  double alpha = 0.01;              // inner SGD step / pseudo-gradient step
  double lambda = 1.0;              // ridge regularizer
  std::size_t moving_window = 50;   // N_m
  std::size_t patience = 50;        // N_w
  double val_frac = 0.1;
  std::uint64_t seed = 0;
  std::optional<std::size_t> target_subsample;
  std::optional<std::size_t> max_iterations;  // caps epochs × batches when set
  bool validate_each_epoch = true;
  std::optional<double> clip_norm;

  void validate() const;
  std::size_t resolved_inner_batch() const;
  BaseMode resolved_base_mode() const;
  ArchSpec arch_spec(std::size_t height, std::size_t width) const;
  bool operator==(const RunConfig&) const = default;
};

// Moving-average overfitting detector. Reports a reset once the best moving
// average (over the last N_m accuracies) has not improved for N_w updates;
// an equal average does not count as an improvement.
class ResetMonitor {
 public:
  ResetMonitor(std::size_t window, std::size_t patience);

  bool update(double accuracy);
  void clear();

  double moving_average() const;
  double best() const { return best_; }
  std::size_t since_best() const { return since_best_; }
  std::size_t window() const { return window_; }
  std::size_t patience() const { return patience_; }

 private:
  std::size_t window_;
  std::size_t patience_;
  std::deque<double> recent_;
  double best_;
  std::size_t since_best_ = 0;
};

// Clamp negatives to 0 and renormalize each row; an all-zero row becomes uniform.
Tensor project_labels(const Tensor& labels);

// Mean soft cross-entropy without the simplex check on the target, for
// evaluating losses at perturbed labels.
ad::Var soft_ce_unchecked(const ad::Var& pred, const ad::Var& target);

struct MetaGradient {
  Tensor grad;          // N_i×C, d(outer loss)/d(inner labels)
  Tensor outer_probs;   // predictions on the outer batch used for the loss
  double outer_loss = 0.0;
  Tensor local_weights; // W_l (ridge variant only)
};

// Gradient of the outer soft-CE (outer batch predicted with W after the
// pseudo-step towards W_l) w.r.t. the inner labels. Only W_l depends on the
// labels; features are treated as constants. `loss_scale` multiplies the loss.
MetaGradient meta_grad_rr(const RidgeModel& model, const Tensor& x_inner, const Tensor& y_inner,
                          const Tensor& x_outer, const Tensor& y_outer, double loss_scale = 1.0);
// Same, from precomputed bias-augmented features.
MetaGradient meta_grad_rr_features(const RRHead& head, const Tensor& z_inner, const Tensor& y_inner,
                                   const Tensor& z_outer, const Tensor& y_outer, double loss_scale = 1.0);

// Second-order meta-gradient through one inner SGD step Θ' = Θ − α∇_Θ L_in.
// Uses ∂Θ'/∂ỹ_jc = (α/N_i)·∇_Θ log ŷ_c(x̃_j), exact because L_in is linear in
// the labels, so each entry is a dot product with ∇_Θ' L_out.
MetaGradient meta_grad_second_order(const ModelState& model, const Tensor& x_inner, const Tensor& y_inner,
                                    const Tensor& x_outer, const Tensor& y_outer, double alpha);
// The same quantity by differentiating through the recorded inner gradient
// (reverse-over-reverse).
MetaGradient meta_grad_second_order_unrolled(const ModelState& model, const Tensor& x_inner, const Tensor& y_inner,
                                             const Tensor& x_outer, const Tensor& y_outer, double alpha);

struct DistillArtifact {
  int format_version = 1;
  std::string source_dataset;
  std::string target_dataset;
  std::vector<std::size_t> base_indices;
  Tensor labels;                   // N×C on the simplex
  std::size_t steps = 1;           // T_i: most recent inter-reset interval
  std::size_t steps_median = 1;    // median of all intervals
  std::size_t resets = 0;
  std::size_t iterations = 0;
  RunConfig config;
  std::uint64_t seed = 0;
  double val_acc = 0.0;            // validation accuracy of the selected labels
  std::size_t selected_epoch = 0;
  std::vector<double> val_history; // per-epoch validation accuracy
};

struct IterationRecord {
  std::size_t iteration = 0;
  const Tensor* meta_grad = nullptr;  // N_i×C
  double outer_accuracy = 0.0;
  double outer_loss = 0.0;
  bool reset = false;
};
using IterationObserver = std::function<void(const IterationRecord&)>;

// Thrown when the loop hits a non-finite value; carries a state summary.
class DistillAborted : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// One label-distillation run, steppable for tests and analyses.
class Distiller {
 public:
  // `target` is the target training pool; it is subsampled and split here.
  Distiller(RunConfig config, const LabeledDataset& source, const LabeledDataset& target);

  // One outer iteration: label update, then model update. Returns its record.
  IterationRecord step();
  // Fresh extractor/head and optimizer state; labels are untouched.
  void reset_model();
  // Validation accuracy of a fresh model trained on the current labels for
  // the current T_i. Does not mutate distillation state.
  double validate_labels(std::uint64_t seed) const;

  std::size_t total_iterations() const { return total_iterations_; }
  std::size_t iterations_per_epoch() const { return per_epoch_; }
  std::size_t iteration() const { return iteration_; }
  std::size_t current_steps() const;  // T_i as recorded so far
  const Tensor& labels() const { return labels_; }
  const SyntheticSet& synthetic() const { return synthetic_; }
  const Split& split() const { return split_; }
  const LabeledDataset& target() const { return target_; }
  const ResetMonitor& monitor() const { return monitor_; }
  const std::vector<std::size_t>& reset_intervals() const { return intervals_; }
  const RunConfig& config() const { return config_; }
  const ArchSpec& arch() const { return arch_; }

  // Runs to completion with per-epoch validation checkpointing.
  DistillArtifact run(const IterationObserver& observer = {});

 private:
  void init_model();
  std::string diagnostics(const std::string& cause) const;

  RunConfig config_;
  ArchSpec arch_;
  LabeledDataset target_;
  Split split_;
  SyntheticSet synthetic_;
  std::size_t inner_batch_;
  MinibatchStream inner_stream_;
  MinibatchStream outer_stream_;
  Tensor labels_;
  Adam label_adam_;
  Adam model_adam_;
  std::optional<RidgeModel> ridge_;
  std::optional<ModelState> standard_;
  ResetMonitor monitor_;
  std::size_t per_epoch_ = 0;
  std::size_t total_iterations_ = 0;
  std::size_t iteration_ = 0;
  std::size_t since_reset_ = 0;
  std::size_t reset_count_ = 0;
  std::vector<std::size_t> intervals_;
  Tensor last_grad_;
};

DistillArtifact distill(const RunConfig& config, const LabeledDataset& source, const LabeledDataset& target,
                        const IterationObserver& observer = {});

}  // namespace ld
