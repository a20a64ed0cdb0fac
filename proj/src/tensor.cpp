// SPDX-License-Identifier: Apache-2.0
#include "sspam/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sspam/kernels.hpp"

namespace sspam {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row(std::initializer_list<double> values) { return Matrix{values}; }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + a.shape_string() + " x " +
                                b.shape_string() + ")");
  }
  Matrix c(a.rows(), b.cols());
  kernels::active().matmul(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(),
                           b.cols());
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

double sum_squares(const Matrix& m) {
  return kernels::active().sum_squares(m.data().data(), m.size());
}

double frobenius_norm(const Matrix& m) { return std::sqrt(sum_squares(m)); }

double max_abs(const Matrix& m) {
  if (m.empty()) throw std::invalid_argument("max_abs: empty matrix");
  return kernels::active().max_abs(m.data().data(), m.size());
}

double mean(const Matrix& m) {
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (double v : m.data()) s += v;
  return s / static_cast<double>(m.size());
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Matrix scaled(const Matrix& m, double c) {
  Matrix out = m;
  scale_in_place(out, c);
  return out;
}

void scale_in_place(Matrix& m, double c) { kernels::active().scale(m.data().data(), m.size(), c); }

void axpy(double alpha, const Matrix& x, Matrix& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double global_grad_norm(std::span<const Matrix> layers) {
  double total = 0.0;
  for (const Matrix& g : layers) total += sum_squares(g);
  return std::sqrt(total);
}

bool all_finite(const Matrix& m) { return first_non_finite(m) == m.size(); }

std::size_t first_non_finite(const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m[i])) return i;
  }
  return m.size();
}

}  // namespace sspam
