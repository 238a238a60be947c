#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ld {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Value semantics: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor identity(std::size_t n);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors. rows()/cols() require rank 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* raw() { return data_.data(); }
  const double* raw() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  // Value of a one-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  // Copies rows [begin, end) of a rank >= 1 tensor (along the leading axis).
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  // Copies the listed rows along the leading axis.
  Tensor gather_rows(std::span<const std::size_t> rows) const;

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws NumericalError naming `op` when `t` holds NaN or Inf.
void require_finite(const Tensor& t, const char* op);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
void require_rank(const Tensor& t, std::size_t rank, const char* op);

// Elementwise helpers used by optimizers and tests.
double max_abs_diff(const Tensor& a, const Tensor& b);
double norm2(const Tensor& t);
// ||a - b|| / max(||a||, ||b||); 0 when both are zero.
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace ld
