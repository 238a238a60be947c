#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ld/autodiff.hpp"
#include "ld/tensor.hpp"

namespace ld {

// linear:    x·Θ + b                      (F defaults to D)
// mlp:       relu(relu(x·W1 + b1)·W2 + b2) (D -> hidden -> F)
// smallconv: two [5×5 conv, relu, 2×2 max-pool] stages, flattened (F = 192 on 28×28)
// logistic:  no extractor; binary sigmoid head on the raw input
enum class ArchKind { linear, mlp, smallconv, logistic };

std::string to_string(ArchKind kind);
ArchKind parse_arch_kind(const std::string& name);

struct ArchSpec {
  ArchKind kind = ArchKind::mlp;
  std::size_t input_height = 28;
  std::size_t input_width = 28;
  std::size_t hidden = 256;
  std::size_t feature_dim = 128;

  std::size_t input_dim() const { return input_height * input_width; }
  bool operator==(const ArchSpec&) const = default;
};

// Desk-scale defaults for each kind on an H×W input.
ArchSpec make_arch(ArchKind kind, std::size_t height, std::size_t width);
// Validates the spec and returns the feature width F it produces.
std::size_t feature_width(const ArchSpec& arch);

enum class HeadKind { standard, ridge };

struct ModelState {
  ArchSpec arch;
  std::vector<Tensor> theta;  // feature extractor parameters
  std::vector<Tensor> head;   // softmax-linear {V, b} or logistic {θ}; empty for ridge models
  std::uint64_t seed = 0;
};

// Uniform(-√(3/fan_in), √(3/fan_in)) weights, zero biases; a pure function of
// (arch, classes, head, seed).
ModelState init_model(const ArchSpec& arch, std::size_t num_classes, HeadKind head, std::uint64_t seed);

// x: B×D. Returns B×F.
ad::Var features(const ArchSpec& arch, std::span<const ad::Var> theta, const ad::Var& x);
// Class distribution from the softmax-linear (or logistic) head.
ad::Var predict_standard(const ArchSpec& arch, std::span<const ad::Var> theta, std::span<const ad::Var> head,
                         const ad::Var& x);

// Untracked conveniences; evaluated in row chunks to bound memory.
Tensor features_of(const ModelState& m, const Tensor& x);
Tensor predict_standard_of(const ModelState& m, const Tensor& x);

// Appends the constant-1 bias column used by the ridge head.
ad::Var with_bias_column(const ad::Var& z);
Tensor with_bias_column(const Tensor& z);

// Mean over the batch of −Σ_c target_c · log(max(pred_c, 1e-12)).
// Target rows must lie on the simplex (±1e-6).
ad::Var soft_ce(const ad::Var& pred, const ad::Var& target);

// Fraction of rows whose argmax matches the label.
double accuracy(const Tensor& probs, std::span<const int> labels);
std::size_t argmax_row(const Tensor& m, std::size_t row);

std::vector<ad::Var> track_all(ad::Tape& tape, const std::vector<Tensor>& tensors);
std::vector<ad::Var> constants(const std::vector<Tensor>& tensors);

}  // namespace ld
