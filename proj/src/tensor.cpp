// SPDX-License-Identifier: Apache-2.0
#include "minigpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

#include "minigpt/errors.hpp"

namespace minigpt {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << what << ": non-finite entry at flat index " << i;
      throw DomainError(msg.str());
    }
  }
}

std::string shape_of(const Matrix& m) { return m.shape_string(); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

}  // namespace

Vector::Vector(std::size_t len, double fill) : data_(len, fill) { require_finite(data_, "Vector"); }

Vector::Vector(std::vector<double> entries) : data_(std::move(entries)) { require_finite(data_, "Vector"); }

Vector::Vector(std::initializer_list<double> entries) : data_(entries) { require_finite(data_, "Vector"); }

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require_finite(data_, "Matrix");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "Matrix: " << data_.size() << " entries cannot fill shape " << rows_ << "x" << cols_;
    throw DimensionError(msg.str());
  }
  require_finite(data_, "Matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) : rows_(rows.size()) {
  cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged row literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(data_, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return Matrix();
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("Matrix::from_rows: rows of unequal length");
    data.insert(data.end(), r.entries().begin(), r.entries().end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

Vector Matrix::row_vector(std::size_t r) const {
  auto span = row(r);
  return Vector(std::vector<double>(span.begin(), span.end()));
}

Vector Matrix::col_vector(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return Vector(std::move(out));
}

Matrix Matrix::top_rows(std::size_t n) const {
  if (n > rows_) {
    throw DimensionError("Matrix::top_rows: requested " + std::to_string(n) + " rows of " + shape_string());
  }
  return Matrix(n, cols_, std::vector<double>(data_.begin(), data_.begin() + n * cols_));
}

std::string Matrix::shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

std::string to_string(SoftmaxMode mode) { return mode == SoftmaxMode::PaperGlobal ? "paper" : "rowwise"; }

SoftmaxMode parse_softmax_mode(const std::string& name) {
  if (name == "paper") return SoftmaxMode::PaperGlobal;
  if (name == "rowwise") return SoftmaxMode::RowWise;
  throw ConfigError("unknown softmax mode '" + name + "' (expected paper|rowwise)");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_of(a) + " by " + shape_of(b));
  }
  std::vector<double> out(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.data() + i * b.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * brow[j];
    }
  }
  return Matrix(a.rows(), b.cols(), std::move(out));
}

Matrix transpose(const Matrix& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j * a.rows() + i] = a(i, j);
  return Matrix(a.cols(), a.rows(), std::move(out));
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.begin(), std::plus<>());
  return Matrix(a.rows(), a.cols(), std::move(out));
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.begin(), std::minus<>());
  return Matrix(a.rows(), a.cols(), std::move(out));
}

Matrix scale(const Matrix& a, double s) {
  std::vector<double> out(a.entries());
  for (double& v : out) v *= s;
  return Matrix(a.rows(), a.cols(), std::move(out));
}

Matrix add_scalar(const Matrix& a, double c) {
  std::vector<double> out(a.entries());
  for (double& v : out) v += c;
  return Matrix(a.rows(), a.cols(), std::move(out));
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  const std::size_t p = b.rows(), q = b.cols();
  Matrix out(a.rows() * p, a.cols() * q);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t k = 0; k < p; ++k)
        for (std::size_t l = 0; l < q; ++l) out(i * p + k, j * q + l) = a(i, j) * b(k, l);
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: cannot apply " + shape_of(a) + " to vector of length " +
                         std::to_string(x.size()));
  }
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    out[i] = std::inner_product(r.begin(), r.end(), x.values().begin(), 0.0);
  }
  return Vector(std::move(out));
}

Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("add: vector lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  std::vector<double> out(a.size());
  std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.begin(), std::plus<>());
  return Vector(std::move(out));
}

Vector add_scalar(const Vector& x, double c) {
  std::vector<double> out(x.entries());
  for (double& v : out) v += c;
  return Vector(std::move(out));
}

Vector scale(const Vector& x, double s) {
  std::vector<double> out(x.entries());
  for (double& v : out) v *= s;
  return Vector(std::move(out));
}

Vector vectorize_rows(const Matrix& a) { return Vector(a.entries()); }

Matrix unvectorize_rows(const Vector& v, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, v.entries());
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff: vector lengths differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double sum(const Matrix& a) { return std::accumulate(a.values().begin(), a.values().end(), 0.0); }

double sum(const Vector& x) { return std::accumulate(x.values().begin(), x.values().end(), 0.0); }

std::size_t numerical_rank(const Matrix& a, double tolerance) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> w(a.entries());
  double scale_ref = 1.0;
  for (double v : w) scale_ref = std::max(scale_ref, std::abs(v));
  const double threshold = tolerance * scale_ref;

  std::size_t rank = 0;
  for (; rank < std::min(m, n); ++rank) {
    std::size_t pr = rank, pc = rank;
    double best = 0.0;
    for (std::size_t i = rank; i < m; ++i)
      for (std::size_t j = rank; j < n; ++j)
        if (std::abs(w[i * n + j]) > best) {
          best = std::abs(w[i * n + j]);
          pr = i;
          pc = j;
        }
    if (best <= threshold) break;
    for (std::size_t j = 0; j < n; ++j) std::swap(w[rank * n + j], w[pr * n + j]);
    for (std::size_t i = 0; i < m; ++i) std::swap(w[i * n + rank], w[i * n + pc]);
    const double pivot = w[rank * n + rank];
    for (std::size_t i = rank + 1; i < m; ++i) {
      const double f = w[i * n + rank] / pivot;
      for (std::size_t j = rank; j < n; ++j) w[i * n + j] -= f * w[rank * n + j];
    }
  }
  return rank;
}

Matrix softmax_matrix(const Matrix& a) {
  if (a.size() == 0) throw DomainError("softmax_matrix: empty matrix");
  const double peak = *std::max_element(a.values().begin(), a.values().end());
  std::vector<double> out(a.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = std::exp(a.values()[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return Matrix(a.rows(), a.cols(), std::move(out));
}

Matrix masked_softmax(const Matrix& a, SoftmaxMode mode) {
  if (!a.is_square()) throw DimensionError("masked_softmax: expected a square matrix, got " + shape_of(a));
  const std::size_t n = a.rows();
  if (n == 0) throw DomainError("masked_softmax: empty matrix");
  Matrix out(n, n);

  if (mode == SoftmaxMode::PaperGlobal) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) peak = std::max(peak, a(i, j));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        out(i, j) = std::exp(a(i, j) - peak);
        total += out(i, j);
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) out(i, j) /= total;
    return out;
  }

  for (std::size_t i = 0; i < n; ++i) {
    double peak = a(i, 0);
    for (std::size_t j = 1; j <= i; ++j) peak = std::max(peak, a(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      out(i, j) = std::exp(a(i, j) - peak);
      total += out(i, j);
    }
    for (std::size_t j = 0; j <= i; ++j) out(i, j) /= total;
  }
  return out;
}

Vector softmax_vector(const Vector& x) {
  if (x.empty()) throw DomainError("softmax_vector: empty vector");
  const double peak = *std::max_element(x.values().begin(), x.values().end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return Vector(std::move(out));
}

}  // namespace minigpt
