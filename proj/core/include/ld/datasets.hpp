#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ld/rng.hpp"
#include "ld/tensor.hpp"

namespace ld {

// IDX parse failures. Each failure mode has its own kind so callers (and
// tests) can tell them apart.
class IdxError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline constexpr double kGrayscaleMean = 0.1307;
inline constexpr double kGrayscaleStd = 0.3081;

struct LabeledDataset {
  std::string name;
  Tensor images;             // N×H×W
  std::vector<int> labels;   // length N, each in [0, num_classes)
  std::size_t num_classes = 0;
  double norm_mean = 0.0;
  double norm_std = 1.0;
  bool normalized = false;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.shape().at(1); }
  std::size_t width() const { return images.shape().at(2); }
  std::size_t dim() const { return height() * width(); }

  // Selected images flattened to rows×D.
  Tensor flat(std::span<const std::size_t> rows) const;
  // Pixel values with normalization undone (i.e. back in [0,1]).
  Tensor raw_flat(std::span<const std::size_t> rows) const;
  // One-hot rows for the selected labels.
  Tensor one_hot(std::span<const std::size_t> rows) const;
};

// Parses IDX byte buffers. `source` is only used in error messages.
Tensor parse_idx_images(std::span<const std::uint8_t> bytes, const std::string& source);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes, const std::string& source);

// Reads an image/label IDX pair; pixels scaled to [0,1], class count inferred
// as max(label)+1.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

LabeledDataset normalize(LabeledDataset ds, double mean, double std);

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> rows);
// Uniform subsample without replacement; returns ds unchanged when count >= N.
LabeledDataset subsample(const LabeledDataset& ds, std::size_t count, std::uint64_t seed);

// ---- synthetic set ---------------------------------------------------------

enum class BaseMode { balanced, unstructured };

struct SyntheticSet {
  std::vector<std::size_t> base_indices;
  Tensor images;       // N_base×D
  Tensor soft_labels;  // N_base×C_target

  std::size_t size() const { return base_indices.size(); }
  std::size_t num_classes() const { return soft_labels.cols(); }
};

SyntheticSet select_base(const LabeledDataset& ds, std::size_t n, BaseMode mode, std::uint64_t seed,
                         std::size_t c_target);

// Inner (synthetic) batch size keyed on the number of base examples.
std::size_t default_inner_batch(std::size_t n_base);

// ---- splits and minibatches ------------------------------------------------

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  double validation_fraction = 0.0;
};

// Unstratified uniform split of [0, n).
Split make_split(std::size_t n, double val_frac, std::uint64_t seed);

// Endless stream of minibatches over a fixed index pool. Each epoch is a fresh
// permutation; the final short batch of an epoch is kept.
class MinibatchStream {
 public:
  MinibatchStream(std::vector<std::size_t> pool, std::size_t batch, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t batches_per_epoch() const { return (pool_.size() + batch_ - 1) / batch_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t batch_size() const { return batch_; }

 private:
  void reshuffle();

  std::vector<std::size_t> pool_;
  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

struct SplitAndBatches {
  Split split;
  MinibatchStream batches;
};

SplitAndBatches split_and_batch(const LabeledDataset& ds, double val_frac, std::size_t batch, std::uint64_t seed);

// ---- generated and named datasets --------------------------------------------

// Two isotropic Gaussian blobs in D=16 (stored as 4×4 images), means ±m with
// |m| = separation, unit noise. Balanced labels 0/1.
LabeledDataset make_gaussian_blobs(std::size_t n, std::uint64_t seed, double separation = 3.0);

enum class DataPart { train, test };

// --data-root flag wins over LD_DATA_ROOT; throws DatasetNotFound if neither.
std::filesystem::path resolve_data_root(const std::optional<std::string>& flag);

// Known names: mnist, kmnist, fashion-mnist, emnist-letters (IDX files under
// <root>/<name>/), and "synthetic" (generated, root unused). IDX sets come
// back normalized with the grayscale mean/std.
LabeledDataset load_named(const std::string& name, const std::filesystem::path& root, DataPart part);
bool is_known_dataset(const std::string& name);

}  // namespace ld
