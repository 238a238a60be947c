#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ld/datasets.hpp"
#include "ld/distill.hpp"
#include "ld/train.hpp"

namespace ld {

inline constexpr std::size_t kDefaultEvalSeeds = 20;

// Base images and labels that a model is retrained on.
struct TrainingSet {
  Tensor images;  // N×D
  Tensor labels;  // N×C
};

// Images of the artifact's base examples drawn from the source dataset.
TrainingSet training_set(const DistillArtifact& artifact, const LabeledDataset& source);

struct RetrainOptions {
  std::optional<ArchKind> arch;     // default: the distillation arch
  std::optional<HeadKind> head;     // default: ridge for rr artifacts, standard otherwise
  std::optional<std::size_t> steps; // default: artifact T_i
};

// Training recipe for retraining the artifact's labels from scratch.
TrainSpec retrain_spec(const DistillArtifact& artifact, const LabeledDataset& source, const RetrainOptions& options,
                       std::uint64_t seed);

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  ArchKind arch = ArchKind::mlp;
  double accuracy = 0.0;
};

struct EvalReport {
  std::vector<SeedResult> runs;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  std::size_t n = 0;
  std::string config_fingerprint;
  std::optional<long long> delta;  // sweep axis value, when part of a sweep
};

// Test images and labels as flat tensors.
struct TestSet {
  Tensor images;
  std::vector<int> labels;
};
TestSet make_test_set(const LabeledDataset& ds);

// Fills n, mean and std from runs.
void finalize_report(EvalReport& report);

// Fresh model per call; accuracy on the test set. Pure in (spec, data).
double retrain_accuracy(const TrainSpec& spec, const TrainingSet& data, const TestSet& test);

double retrain(const DistillArtifact& artifact, const LabeledDataset& source, const TestSet& test,
               const RetrainOptions& options, std::uint64_t seed);

// Seeds 0..n-1 mapped through derive_seed(base, "eval", i).
std::vector<std::uint64_t> eval_seeds(std::size_t n, std::uint64_t base = 0);

// One retraining per seed (spec.seed replaced). `workers` > 1 runs seeds on
// a thread pool; results are in seed order either way.
EvalReport run_seeds(const TrainSpec& spec, const TrainingSet& data, const TestSet& test,
                     std::span<const std::uint64_t> seeds, std::size_t workers = 1);

EvalReport suite(const DistillArtifact& artifact, const LabeledDataset& source, const TestSet& test,
                 const RetrainOptions& options, std::size_t n_seeds = kDefaultEvalSeeds, std::size_t workers = 1);

inline const std::vector<long long> kDefaultSweepDeltas = {-50, -20, -10, 0, 10, 20, 50, 100};

// Suite at steps T_i + δ per δ (same seed list for every δ).
std::vector<EvalReport> sweep_steps(const DistillArtifact& artifact, const LabeledDataset& source, const TestSet& test,
                                    const RetrainOptions& options, std::span<const long long> deltas,
                                    std::size_t n_seeds = kDefaultEvalSeeds, std::size_t workers = 1);

// Step budget with the best mean validation accuracy over the given seeds,
// checked every `every` steps up to `max_steps`. Ties keep the smaller budget.
struct StepTuning {
  std::size_t best_steps = 0;
  double best_accuracy = 0.0;
  std::vector<std::size_t> steps;
  std::vector<double> mean_accuracy;
};
StepTuning tune_steps(const TrainSpec& spec, const TrainingSet& data, const TestSet& validation,
                      std::span<const std::uint64_t> seeds, std::size_t max_steps = 1000, std::size_t every = 50);

// Population variance over all entries of one meta-gradient matrix.
double entry_variance(const Tensor& grad);
// Trailing moving average (window ≥ 1; early points average what exists).
std::vector<double> moving_average(std::span<const double> values, std::size_t window);
double median(std::vector<double> values);

struct VarianceSeries {
  Algo algo = Algo::rr;
  std::vector<double> raw;       // per-iteration variance
  std::vector<double> smoothed;  // moving average of raw
};
// Distills with each algorithm on the config (validation off) and records the
// per-iteration meta-gradient variance.
std::vector<VarianceSeries> grad_variance(const RunConfig& config, const LabeledDataset& source,
                                          const LabeledDataset& target, std::size_t window);

struct LabelSummary {
  Tensor mean_by_source_class;           // C_source×C_target; rows of absent classes are zero
  std::vector<std::size_t> class_counts; // base examples per source class
  // Mean label mass on the base example's own class (same label space only).
  std::optional<double> true_label_mass;
  std::optional<double> argmax_agreement;  // fraction whose argmax is the own class
};
LabelSummary label_summary(const Tensor& labels, std::span<const int> source_classes, std::size_t source_class_count,
                           bool same_label_space);
LabelSummary label_summary(const DistillArtifact& artifact, const LabeledDataset& source);

// Convex combination of base images weighted by their mass on target_class.
// images: N×H×W or N×D. Returns one image with the per-image shape.
Tensor reconstruct_class(const Tensor& labels, const Tensor& images, std::size_t target_class);

// ---- report output -----------------------------------------------------------

// FNV-1a of the given text, as 16 hex digits.
std::string fingerprint(const std::string& text);

// Header `seed,steps,arch,accuracy`, one row per run.
std::string report_csv(std::span<const EvalReport> reports);
// {mean, std, n, config_fingerprint} (array of those for several reports).
std::string report_json(const EvalReport& report);
std::string report_json(std::span<const EvalReport> reports);

// Binary P5 graymap; pixels clamped to [0, 1] and scaled to 0..255.
std::string encode_pgm(const Tensor& image);
// Tiles images (each H×W) into a grid with `cols` columns.
Tensor tile_images(std::span<const Tensor> images, std::size_t cols);

}  // namespace ld
