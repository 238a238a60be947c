#include "ld/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "ld/errors.hpp"

namespace ld {

Tensor LabeledDataset::flat(std::span<const std::size_t> rows) const {
  const std::size_t d = dim();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw DimensionError("flat: row index out of range");
    std::copy_n(images.raw() + rows[i] * d, d, out.raw() + i * d);
  }
  return out;
}

Tensor LabeledDataset::raw_flat(std::span<const std::size_t> rows) const {
  Tensor out = flat(rows);
  if (normalized) {
    for (double& v : out.data()) v = v * norm_std + norm_mean;
  }
  return out;
}

Tensor LabeledDataset::one_hot(std::span<const std::size_t> rows) const {
  Tensor out({rows.size(), num_classes});
  for (std::size_t i = 0; i < rows.size(); ++i) out(i, static_cast<std::size_t>(labels.at(rows[i]))) = 1.0;
  return out;
}

LabeledDataset normalize(LabeledDataset ds, double mean, double std) {
  if (ds.normalized) throw ArgumentError("normalize: dataset '" + ds.name + "' is already normalized");
  if (!(std > 0.0)) throw ArgumentError("normalize: std must be positive");
  for (double& v : ds.images.data()) v = (v - mean) / std;
  ds.norm_mean = mean;
  ds.norm_std = std;
  ds.normalized = true;
  return ds;
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> rows) {
  LabeledDataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.norm_mean = ds.norm_mean;
  out.norm_std = ds.norm_std;
  out.normalized = ds.normalized;
  out.images = ds.images.gather_rows(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(ds.labels.at(r));
  return out;
}

LabeledDataset subsample(const LabeledDataset& ds, std::size_t count, std::uint64_t seed) {
  if (count >= ds.size()) return ds;
  Rng rng(seed);
  auto rows = sample_without_replacement(ds.size(), count, rng);
  return subset(ds, rows);
}

SyntheticSet select_base(const LabeledDataset& ds, std::size_t n, BaseMode mode, std::uint64_t seed,
                         std::size_t c_target) {
  if (n == 0) throw ArgumentError("select_base: need at least one base example");
  if (n > ds.size()) {
    throw ArgumentError("select_base: " + std::to_string(n) + " base examples requested from " +
                        std::to_string(ds.size()));
  }
  if (c_target == 0) throw ArgumentError("select_base: target class count must be positive");
  Rng rng(seed);
  SyntheticSet set;
  if (mode == BaseMode::balanced) {
    if (ds.num_classes == 0 || n % ds.num_classes != 0) {
      throw ArgumentError("select_base: balanced selection needs n divisible by the class count (" +
                          std::to_string(n) + " vs " + std::to_string(ds.num_classes) + ")");
    }
    const std::size_t per_class = n / ds.num_classes;
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
      const auto& members = by_class[c];
      if (members.size() < per_class) {
        throw ArgumentError("select_base: class " + std::to_string(c) + " has too few examples");
      }
      for (std::size_t k : sample_without_replacement(members.size(), per_class, rng)) {
        set.base_indices.push_back(members[k]);
      }
    }
  } else {
    set.base_indices = sample_without_replacement(ds.size(), n, rng);
  }
  set.images = ds.flat(set.base_indices);
  set.soft_labels = Tensor({n, c_target}, 1.0 / static_cast<double>(c_target));
  return set;
}

std::size_t default_inner_batch(std::size_t n_base) {
  if (n_base >= 100) return 50;
  if (n_base >= 50) return 25;
  return std::min<std::size_t>(n_base, 10);
}

Split make_split(std::size_t n, double val_frac, std::uint64_t seed) {
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw ArgumentError("make_split: validation fraction must be in (0,1)");
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  Split s;
  s.validation_fraction = val_frac;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

MinibatchStream::MinibatchStream(std::vector<std::size_t> pool, std::size_t batch, std::uint64_t seed)
    : pool_(std::move(pool)), batch_(batch), rng_(seed) {
  if (batch_ == 0) throw ArgumentError("minibatch: batch size must be positive");
  if (batch_ > pool_.size()) {
    throw ArgumentError("minibatch: batch size " + std::to_string(batch_) + " exceeds pool of " +
                        std::to_string(pool_.size()));
  }
  reshuffle();
}

void MinibatchStream::reshuffle() {
  order_ = pool_;
  rng_.shuffle(order_);
  cursor_ = 0;
}

std::vector<std::size_t> MinibatchStream::next() {
  if (cursor_ >= order_.size()) {
    reshuffle();
    ++epoch_;
  }
  const std::size_t end = std::min(cursor_ + batch_, order_.size());
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

SplitAndBatches split_and_batch(const LabeledDataset& ds, double val_frac, std::size_t batch, std::uint64_t seed) {
  Split split = make_split(ds.size(), val_frac, derive_seed(seed, "split"));
  MinibatchStream stream(split.train, batch, derive_seed(seed, "batches"));
  return {std::move(split), std::move(stream)};
}

LabeledDataset make_gaussian_blobs(std::size_t n, std::uint64_t seed, double separation) {
  constexpr std::size_t side = 4;
  constexpr std::size_t d = side * side;
  // fixed mean direction shared by every draw so train/test agree
  Rng dir_rng(0x5eedULL);
  std::vector<double> mu(d);
  double norm = 0.0;
  for (double& v : mu) {
    v = dir_rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : mu) v *= separation / norm;

  Rng rng(seed);
  LabeledDataset ds;
  ds.name = "synthetic";
  ds.num_classes = 2;
  ds.images = Tensor({n, side, side});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double sign = label == 1 ? 1.0 : -1.0;
    ds.labels[i] = label;
    for (std::size_t j = 0; j < d; ++j) ds.images[i * d + j] = sign * mu[j] + rng.normal();
  }
  return ds;
}

std::filesystem::path resolve_data_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("LD_DATA_ROOT"); env && *env) return env;
  throw DatasetNotFound("no dataset root: pass --data-root or set LD_DATA_ROOT");
}

namespace {

std::filesystem::path first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (std::filesystem::exists(dir / n)) return dir / n;
  }
  throw DatasetNotFound("none of the expected IDX files found in " + dir.string() + " (looked for " +
                        *names.begin() + ", ...)");
}

// EMNIST stores images transposed and labels letters 1..26.
void fix_emnist(LabeledDataset& ds) {
  const std::size_t n = ds.size(), h = ds.height(), w = ds.width();
  Tensor t({n, w, h});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) t[(i * w + c) * h + r] = ds.images[(i * h + r) * w + c];
  ds.images = std::move(t);
  int lo = *std::min_element(ds.labels.begin(), ds.labels.end());
  if (lo > 0) {
    for (int& l : ds.labels) l -= lo;
    ds.num_classes -= static_cast<std::size_t>(lo);
  }
}

}  // namespace

bool is_known_dataset(const std::string& name) {
  return name == "mnist" || name == "kmnist" || name == "fashion-mnist" || name == "emnist-letters" ||
         name == "synthetic";
}

LabeledDataset load_named(const std::string& name, const std::filesystem::path& root, DataPart part) {
  if (name == "synthetic") {
    return part == DataPart::train ? make_gaussian_blobs(2000, 11) : make_gaussian_blobs(1000, 12);
  }
  if (!is_known_dataset(name)) throw DatasetNotFound("unknown dataset '" + name + "'");
  const std::filesystem::path dir = root / name;
  const bool train = part == DataPart::train;
  LabeledDataset ds;
  if (name == "emnist-letters") {
    ds = load_idx(first_existing(dir, {train ? "emnist-letters-train-images-idx3-ubyte"
                                             : "emnist-letters-test-images-idx3-ubyte"}),
                  first_existing(dir, {train ? "emnist-letters-train-labels-idx1-ubyte"
                                             : "emnist-letters-test-labels-idx1-ubyte"}));
    fix_emnist(ds);
  } else {
    ds = load_idx(first_existing(dir, {train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte",
                                       train ? "train-images.idx3-ubyte" : "t10k-images.idx3-ubyte"}),
                  first_existing(dir, {train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte",
                                       train ? "train-labels.idx1-ubyte" : "t10k-labels.idx1-ubyte"}));
  }
  ds.name = name;
  return normalize(std::move(ds), kGrayscaleMean, kGrayscaleStd);
}

}  // namespace ld
