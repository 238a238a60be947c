#include "ld/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ld/artifact.hpp"
#include "ld/errors.hpp"
#include "ld/rng.hpp"

namespace ld {

TrainingSet training_set(const DistillArtifact& artifact, const LabeledDataset& source) {
  for (std::size_t idx : artifact.base_indices)
    if (idx >= source.size())
      throw IncompatibleArtifact("base index " + std::to_string(idx) + " is outside the source dataset '" +
                                 source.name + "'");
  if (artifact.labels.rows() != artifact.base_indices.size())
    throw IncompatibleArtifact("label rows do not match the base indices");
  return TrainingSet{source.flat(artifact.base_indices), artifact.labels};
}

TrainSpec retrain_spec(const DistillArtifact& artifact, const LabeledDataset& source, const RetrainOptions& options,
                       std::uint64_t seed) {
  RunConfig cfg = artifact.config;
  if (options.arch && *options.arch != cfg.arch) {
    cfg.arch = *options.arch;
    cfg.hidden = 0;
    cfg.feature_dim = 0;
  }
  TrainSpec spec;
  try {
    spec.arch = cfg.arch_spec(source.height(), source.width());
  } catch (const ArgumentError& e) {
    throw IncompatibleArtifact(std::string("retrain: ") + e.what());
  }
  spec.head = options.head.value_or(cfg.algo == Algo::rr ? HeadKind::ridge : HeadKind::standard);
  spec.num_classes = artifact.labels.cols();
  if (spec.arch.kind == ArchKind::logistic && spec.num_classes != 2)
    throw IncompatibleArtifact("retrain: the logistic arch needs two classes");
  spec.steps = options.steps.value_or(artifact.steps);
  if (spec.steps == 0) throw ArgumentError("retrain: steps must be at least 1");
  spec.inner_batch = cfg.resolved_inner_batch();
  spec.lambda = cfg.lambda;
  spec.alpha = cfg.alpha;
  spec.seed = seed;
  return spec;
}

TestSet make_test_set(const LabeledDataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return TestSet{ds.flat(rows), ds.labels};
}

double retrain_accuracy(const TrainSpec& spec, const TrainingSet& data, const TestSet& test) {
  if (data.images.cols() != spec.arch.input_dim())
    throw IncompatibleArtifact("retrain: base images do not match the arch input size");
  if (test.images.cols() != data.images.cols()) throw IncompatibleArtifact("retrain: test images differ in size");
  for (int label : test.labels)
    if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes)
      throw IncompatibleArtifact("retrain: test labels exceed the label width");
  return train_from_scratch(spec, data.images, data.labels).accuracy(test.images, test.labels);
}

double retrain(const DistillArtifact& artifact, const LabeledDataset& source, const TestSet& test,
               const RetrainOptions& options, std::uint64_t seed) {
  return retrain_accuracy(retrain_spec(artifact, source, options, seed), training_set(artifact, source), test);
}

std::vector<std::uint64_t> eval_seeds(std::size_t n, std::uint64_t base) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = derive_seed(base, "eval", i);
  return out;
}

void finalize_report(EvalReport& r) {
  r.n = r.runs.size();
  if (r.n == 0) return;
  double s = 0.0;
  for (const auto& run : r.runs) s += run.accuracy;
  r.mean = s / static_cast<double>(r.n);
  if (r.n < 2) {
    r.std = 0.0;
    return;
  }
  double sq = 0.0;
  for (const auto& run : r.runs) sq += (run.accuracy - r.mean) * (run.accuracy - r.mean);
  r.std = std::sqrt(sq / static_cast<double>(r.n - 1));
}

namespace {

std::string spec_text(const TrainSpec& s) {
  std::ostringstream os;
  os << to_string(s.arch.kind) << ':' << s.arch.input_height << 'x' << s.arch.input_width << ':' << s.arch.hidden
     << ':' << s.arch.feature_dim << "|head=" << (s.head == HeadKind::ridge ? "ridge" : "standard")
     << "|classes=" << s.num_classes << "|steps=" << s.steps << "|batch=" << s.inner_batch << "|lr=" << s.lr
     << "|lambda=" << s.lambda << "|alpha=" << s.alpha;
  return os.str();
}

}  // namespace

EvalReport run_seeds(const TrainSpec& spec, const TrainingSet& data, const TestSet& test,
                     std::span<const std::uint64_t> seeds, std::size_t workers) {
  EvalReport report;
  report.runs.resize(seeds.size());
  auto one = [&](std::size_t i) {
    TrainSpec s = spec;
    s.seed = seeds[i];
    report.runs[i] = SeedResult{seeds[i], s.steps, s.arch.kind, retrain_accuracy(s, data, test)};
  };

  workers = std::max<std::size_t>(1, std::min(workers, seeds.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < seeds.size(); i = next++) one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  finalize_report(report);
  report.config_fingerprint = fingerprint(spec_text(spec));
  return report;
}

EvalReport suite(const DistillArtifact& artifact, const LabeledDataset& source, const TestSet& test,
                 const RetrainOptions& options, std::size_t n_seeds, std::size_t workers) {
  if (n_seeds < 2) throw ArgumentError("suite: need at least 2 seeds");
  const TrainSpec spec = retrain_spec(artifact, source, options, 0);
  const std::vector<std::uint64_t> seeds = eval_seeds(n_seeds, artifact.seed);
  EvalReport r = run_seeds(spec, training_set(artifact, source), test, seeds, workers);
  r.config_fingerprint = fingerprint(config_to_json(artifact.config) + spec_text(spec));
  return r;
}

std::vector<EvalReport> sweep_steps(const DistillArtifact& artifact, const LabeledDataset& source, const TestSet& test,
                                    const RetrainOptions& options, std::span<const long long> deltas,
                                    std::size_t n_seeds, std::size_t workers) {
  const long long base = static_cast<long long>(options.steps.value_or(artifact.steps));
  for (long long d : deltas)
    if (base + d < 1)
      throw ArgumentError("sweep: T_i " + std::to_string(base) + " with delta " + std::to_string(d) +
                          " leaves no training steps");
  std::vector<EvalReport> out;
  for (long long d : deltas) {
    RetrainOptions o = options;
    o.steps = static_cast<std::size_t>(base + d);
    EvalReport r = suite(artifact, source, test, o, n_seeds, workers);
    r.delta = d;
    out.push_back(std::move(r));
  }
  return out;
}

StepTuning tune_steps(const TrainSpec& spec, const TrainingSet& data, const TestSet& validation,
                      std::span<const std::uint64_t> seeds, std::size_t max_steps, std::size_t every) {
  if (every == 0 || max_steps < every) throw ArgumentError("tune_steps: need 1 ≤ every ≤ max_steps");
  if (seeds.empty()) throw ArgumentError("tune_steps: need at least one seed");
  StepTuning t;
  for (std::size_t s = every; s <= max_steps; s += every) t.steps.push_back(s);
  t.mean_accuracy.assign(t.steps.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    TrainSpec s = spec;
    s.steps = t.steps.back();
    s.seed = seed;
    std::size_t k = 0;
    train_from_scratch(s, data.images, data.labels, t.steps, [&](std::size_t, const TrainedModel& m) {
      t.mean_accuracy[k++] += m.accuracy(validation.images, validation.labels) / static_cast<double>(seeds.size());
    });
  }
  t.best_accuracy = -1.0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    if (t.mean_accuracy[i] > t.best_accuracy) {
      t.best_accuracy = t.mean_accuracy[i];
      t.best_steps = t.steps[i];
    }
  }
  return t;
}

double entry_variance(const Tensor& grad) {
  if (grad.size() == 0) return 0.0;
  const double n = static_cast<double>(grad.size());
  double mean = 0.0;
  for (double v : grad.data()) mean += v;
  mean /= n;
  double sq = 0.0;
  for (double v : grad.data()) sq += (v - mean) * (v - mean);
  return sq / n;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw ArgumentError("moving_average: window must be at least 1");
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty series");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<VarianceSeries> grad_variance(const RunConfig& config, const LabeledDataset& source,
                                          const LabeledDataset& target, std::size_t window) {
  std::vector<VarianceSeries> out;
  for (Algo algo : {Algo::rr, Algo::second_order}) {
    RunConfig cfg = config;
    cfg.algo = algo;
    cfg.validate_each_epoch = false;
    VarianceSeries s;
    s.algo = algo;
    Distiller d(cfg, source, target);
    d.run([&](const IterationRecord& rec) { s.raw.push_back(entry_variance(*rec.meta_grad)); });
    s.smoothed = moving_average(s.raw, window);
    out.push_back(std::move(s));
  }
  return out;
}

LabelSummary label_summary(const Tensor& labels, std::span<const int> source_classes, std::size_t source_class_count,
                           bool same_label_space) {
  require_rank(labels, 2, "label_summary");
  if (labels.rows() != source_classes.size()) throw DimensionError("label_summary: one source class per base row");
  const std::size_t c = labels.cols();
  LabelSummary s;
  s.mean_by_source_class = Tensor({source_class_count, c});
  s.class_counts.assign(source_class_count, 0);
  double own_mass = 0.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    const int k = source_classes[i];
    if (k < 0 || static_cast<std::size_t>(k) >= source_class_count)
      throw DimensionError("label_summary: source class out of range");
    const auto row = static_cast<std::size_t>(k);
    ++s.class_counts[row];
    for (std::size_t j = 0; j < c; ++j) s.mean_by_source_class(row, j) += labels(i, j);
    if (same_label_space && row < c) {
      own_mass += labels(i, row);
      if (argmax_row(labels, i) == row) ++agree;
    }
  }
  for (std::size_t k = 0; k < source_class_count; ++k)
    if (s.class_counts[k] > 0)
      for (std::size_t j = 0; j < c; ++j) s.mean_by_source_class(k, j) /= static_cast<double>(s.class_counts[k]);
  if (same_label_space && labels.rows() > 0) {
    s.true_label_mass = own_mass / static_cast<double>(labels.rows());
    s.argmax_agreement = static_cast<double>(agree) / static_cast<double>(labels.rows());
  }
  return s;
}

LabelSummary label_summary(const DistillArtifact& artifact, const LabeledDataset& source) {
  std::vector<int> classes;
  classes.reserve(artifact.base_indices.size());
  for (std::size_t idx : artifact.base_indices) {
    if (idx >= source.size()) throw IncompatibleArtifact("label_summary: base index outside the source dataset");
    classes.push_back(source.labels[idx]);
  }
  return label_summary(artifact.labels, classes, source.num_classes,
                       artifact.source_dataset == artifact.target_dataset);
}

Tensor reconstruct_class(const Tensor& labels, const Tensor& images, std::size_t target_class) {
  require_rank(labels, 2, "reconstruct_class");
  if (target_class >= labels.cols()) throw ArgumentError("reconstruct_class: class out of range");
  if (images.rank() < 2 || images.shape()[0] != labels.rows())
    throw DimensionError("reconstruct_class: one image per label row");
  const Shape image_shape(images.shape().begin() + 1, images.shape().end());
  const std::size_t d = shape_size(image_shape);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.rows(); ++i) total += labels(i, target_class);
  if (!(total > 0.0)) throw ArgumentError("reconstruct_class: no label mass on the requested class");
  Tensor out(image_shape);
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    const double w = labels(i, target_class) / total;
    if (w == 0.0) continue;
    for (std::size_t p = 0; p < d; ++p) out[p] += w * images[i * d + p];
  }
  return out;
}

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

std::string report_csv(std::span<const EvalReport> reports) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,steps,arch,accuracy\n";
  for (const auto& r : reports)
    for (const auto& run : r.runs) os << run.seed << ',' << run.steps << ',' << to_string(run.arch) << ',' << run.accuracy << '\n';
  return os.str();
}

namespace {

nlohmann::ordered_json report_object(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mean"] = r.mean;
  j["std"] = r.std;
  j["n"] = r.n;
  j["config_fingerprint"] = r.config_fingerprint;
  if (r.delta) j["delta"] = *r.delta;
  if (!r.runs.empty()) j["steps"] = r.runs.front().steps;
  return j;
}

}  // namespace

std::string report_json(const EvalReport& report) { return report_object(report).dump(2) + "\n"; }

std::string report_json(std::span<const EvalReport> reports) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(report_object(r));
  return arr.dump(2) + "\n";
}

std::string encode_pgm(const Tensor& image) {
  require_rank(image, 2, "encode_pgm");
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  out.reserve(out.size() + image.size());
  for (double v : image.data()) {
    const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

Tensor tile_images(std::span<const Tensor> images, std::size_t cols) {
  if (images.empty() || cols == 0) throw ArgumentError("tile_images: need images and at least one column");
  const Shape& s = images.front().shape();
  if (s.size() != 2) throw DimensionError("tile_images: images must be H×W");
  const std::size_t h = s[0];
  const std::size_t w = s[1];
  cols = std::min(cols, images.size());
  const std::size_t rows = (images.size() + cols - 1) / cols;
  Tensor out({rows * h, cols * w});
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].shape() != s) throw DimensionError("tile_images: images differ in shape");
    const std::size_t r0 = (k / cols) * h;
    const std::size_t c0 = (k % cols) * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) out(r0 + i, c0 + j) = images[k](i, j);
  }
  return out;
}

}  // namespace ld
