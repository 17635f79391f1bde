#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace caeq {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a symmetric matrix is not positive definite. `pivot()` is the
/// row at which factorization broke down.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what, std::size_t pivot)
      : std::runtime_error(what), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws ShapeError on a length mismatch and
  /// std::domain_error on a non-finite entry.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::vector<double> col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;
  /// Copy of the block [r0, r0+nr) x [c0, c0+nc).
  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
  Matrix diag_vector() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

/// Lower-triangular square matrix with a positive diagonal. Entries above the
/// diagonal are stored as exact zeros.
class LowerTriangular {
 public:
  LowerTriangular() = default;
  /// Validates the triangular structure and positive diagonal.
  explicit LowerTriangular(Matrix full);

  std::size_t n() const noexcept { return full_.rows(); }
  double operator()(std::size_t r, std::size_t c) const noexcept { return full_(r, c); }
  const Matrix& dense() const noexcept { return full_; }

 private:
  Matrix full_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// L * L^T.
Matrix self_outer(const LowerTriangular& l);

/// G with G G^T = s + jitter*I. Fails with FactorizationError if a pivot is not
/// strictly positive. Only the lower triangle of `s` is read.
LowerTriangular cholesky_lower(const Matrix& s, double jitter = 0.0);

/// S^{-1} via Cholesky: solves G G^T Z = I column by column.
Matrix invert_spd(const Matrix& s);

/// Inverse of a lower-triangular matrix (itself lower-triangular).
Matrix invert_lower(const LowerTriangular& l);

/// output(i,j) = m(i,j) for j > i, else 0. The diagonal is excluded.
Matrix strict_upper_hadamard(const Matrix& m);

double frobenius_sq(const Matrix& m);
double max_abs(const Matrix& m);
/// ||a - b||_F / max(||b||_F, floor).
double relative_diff(const Matrix& a, const Matrix& b, double floor = 1e-300);

}  // namespace caeq
