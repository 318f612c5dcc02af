// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace flapnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float64 array. Rank is small (<= 3 in practice).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // 2-D conveniences; a rank-1 tensor reads as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols(); }
  const double* row(std::size_t r) const { return data_.data() + r * cols(); }

  void fill(double v);
  void reshape(Shape shape);
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Max |a - b| over elements; throws DimensionError on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

// C = A·B for A[m×k], B[k×n]. Serial reference path.
Tensor matmul(const Tensor& a, const Tensor& b);
// Same contract, rows distributed over OpenMP threads.
Tensor matmul_parallel(const Tensor& a, const Tensor& b);

enum class Activation { kSigmoid, kTanh, kRelu, kSilu };

double sigmoid(double x);
double silu(double x);
Tensor activate(const Tensor& x, Activation kind);

}  // namespace flapnet
