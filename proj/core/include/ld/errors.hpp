#pragma once

#include <stdexcept>
#include <string>

namespace ld {

// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An operation produced NaN/Inf, or a system that should be solvable was not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on argument values was violated (not a shape problem).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Misuse of the differentiation tape (non-scalar loss, foreign tensor, ...).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Dataset files that are missing or cannot be opened.
class DatasetNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Artifact / configuration documents that do not match what the caller needs.
class IncompatibleArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ld
