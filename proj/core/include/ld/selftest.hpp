#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ld/models.hpp"

// Randomized cross-checks of the optimized paths against the reference
// oracles. Each returns the worst error observed; callers decide tolerances.
namespace ld::selftest {

struct Measurement {
  std::size_t instances = 0;
  double worst = 0.0;
};

// max |solve_local − rr_direct| with B ≤ 30, F ≤ 20, λ ∈ {0.1, 1, 10}.
Measurement woodbury_vs_direct(std::size_t instances, std::uint64_t seed);
// Worst relative error of the ridge meta-gradient against central differences.
Measurement rr_meta_grad_vs_fd(ArchKind arch, std::size_t instances, std::uint64_t seed);
// Same for the second-order meta-gradient.
Measurement second_order_vs_fd(ArchKind arch, std::size_t instances, std::uint64_t seed);
// max |dot-product form − reverse-over-reverse form|.
Measurement second_order_forms(ArchKind arch, std::size_t instances, std::uint64_t seed);
// max |second-order meta-gradient − one-layer closed form| on the logistic model.
Measurement one_layer_closed_form(std::size_t instances, std::uint64_t seed);
// Worst simplex violation (negative entry or |row sum − 1|) after projecting
// randomly perturbed labels.
Measurement simplex_fuzz(std::size_t updates, std::uint64_t seed);

struct Check {
  std::string name;
  bool passed = false;
  Measurement measured;
  double tolerance = 0.0;
};
std::vector<Check> run_all(std::uint64_t seed = 0);

}  // namespace ld::selftest
