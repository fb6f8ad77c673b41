// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major real matrices and vectors in double precision, plus the
// softmax variants used by attention and next-token prediction.
//
// Every Matrix and Vector holds only finite entries; construction rejects
// NaN and Inf, and all operations build their results through the checked
// constructors.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace minigpt {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0);
  explicit Vector(std::vector<double> entries);
  Vector(std::initializer_list<double> entries);

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> values() const { return data_; }
  const std::vector<double>& entries() const { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  // Row-by-row literal: Matrix{{1, 2}, {3, 4}}. Rows must have equal length.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool is_square() const { return rows_ == cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }
  Vector row_vector(std::size_t r) const;
  Vector col_vector(std::size_t c) const;

  std::span<const double> values() const { return data_; }
  const std::vector<double>& entries() const { return data_; }

  // First `n` rows as a new matrix.
  Matrix top_rows(std::size_t n) const;

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class SoftmaxMode {
  // One denominator shared by every unmasked entry of the matrix.
  PaperGlobal,
  // Conventional per-row normalization over the unmasked prefix of each row.
  RowWise,
};

std::string to_string(SoftmaxMode mode);
SoftmaxMode parse_softmax_mode(const std::string& name);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
// a + c on every entry.
Matrix add_scalar(const Matrix& a, double c);
// Kronecker product: (a ⊗ b)[(i*p + k), (j*q + l)] = a(i,j) * b(k,l).
Matrix kronecker(const Matrix& a, const Matrix& b);

Vector matvec(const Matrix& a, const Vector& x);
Vector add(const Vector& a, const Vector& b);
Vector add_scalar(const Vector& x, double c);
Vector scale(const Vector& x, double s);

// Row-major flattening of a matrix and its inverse.
Vector vectorize_rows(const Matrix& a);
Matrix unvectorize_rows(const Vector& v, std::size_t rows, std::size_t cols);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(const Vector& a, const Vector& b);
double sum(const Matrix& a);
double sum(const Vector& x);

// Rank found by Gaussian elimination with full pivoting. A pivot counts when
// its magnitude exceeds tolerance * max(1, max_ij |a_ij|).
std::size_t numerical_rank(const Matrix& a, double tolerance = 1e-9);

// e^{a_ij} / sum_{p,q} e^{a_pq}, normalizing over every entry.
Matrix softmax_matrix(const Matrix& a);

// Autoregressive masked softmax: entries with i < j are exactly zero. Masked
// positions are excluded from the exponential sums rather than represented as
// -infinity.
Matrix masked_softmax(const Matrix& a, SoftmaxMode mode = SoftmaxMode::PaperGlobal);

// exp(x_i) / sum_j exp(x_j).
Vector softmax_vector(const Vector& x);

}  // namespace minigpt
