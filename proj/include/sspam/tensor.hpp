// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sspam {

/// Dense row-major matrix of 64-bit reals. Parameters, activations and
/// gradients all live in this type; vectors are 1×n or n×1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
  static Matrix identity(std::size_t n);
  static Matrix row(std::initializer_list<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  void fill(double value);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws std::invalid_argument naming both shapes unless a and b match.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

// Products. Each output entry accumulates sequentially over the inner index,
// so results are bit-identical to a naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

double sum_squares(const Matrix& m);
double frobenius_norm(const Matrix& m);
/// Throws std::invalid_argument on an empty matrix.
double max_abs(const Matrix& m);
double mean(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double c);
void scale_in_place(Matrix& m, double c);
/// y += alpha * x
void axpy(double alpha, const Matrix& x, Matrix& y);

/// sqrt(sum_i ||g_i||²) over all layers, summed in layer order.
double global_grad_norm(std::span<const Matrix> layers);

bool all_finite(const Matrix& m);
/// Index of the first non-finite entry, or size() when all are finite.
std::size_t first_non_finite(const Matrix& m);

}  // namespace sspam
