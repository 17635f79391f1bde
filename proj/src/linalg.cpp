#include "caeq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace caeq {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, "matrix data length does not match rows*cols");
  if (!all_finite()) throw std::domain_error("matrix contains a non-finite entry");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  if (!all_finite()) throw std::domain_error("matrix contains a non-finite entry");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
  require(values.size() == rows_, "column length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
  require(r0 + nr <= rows_ && c0 + nc <= cols_, "block out of range");
  Matrix b(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>((r0 + r) * cols_ + c0), nc,
                b.data_.begin() + static_cast<std::ptrdiff_t>(r * nc));
  return b;
}

Matrix Matrix::diag_vector() const {
  require(square(), "diag_vector of non-square matrix");
  Matrix d(rows_, 1);
  for (std::size_t i = 0; i < rows_; ++i) d(i, 0) = (*this)(i, i);
  return d;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "matrix add shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "matrix subtract shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

LowerTriangular::LowerTriangular(Matrix full) : full_(std::move(full)) {
  require(full_.square(), "triangular factor must be square");
  for (std::size_t r = 0; r < full_.rows(); ++r) {
    if (!(full_(r, r) > 0.0))
      throw FactorizationError("triangular factor has a non-positive diagonal", r);
    for (std::size_t c = r + 1; c < full_.cols(); ++c)
      if (full_(r, c) != 0.0) throw ShapeError("entry above the diagonal is nonzero");
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += aip * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix self_outer(const LowerTriangular& l) {
  const std::size_t n = l.n();
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p <= j; ++p) s += l(i, p) * l(j, p);
      c(i, j) = s;
      c(j, i) = s;
    }
  return c;
}

LowerTriangular cholesky_lower(const Matrix& s, double jitter) {
  require(s.square(), "cholesky_lower: matrix is not square");
  const std::size_t n = s.rows();
  Matrix g(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = s(j, j) + jitter;
    const double* gj = g.row(j).data();
    for (std::size_t p = 0; p < j; ++p) d -= gj[p] * gj[p];
    if (!(d > 0.0) || !std::isfinite(d))
      throw FactorizationError("matrix is not positive definite at pivot " + std::to_string(j), j);
    const double djj = std::sqrt(d);
    g(j, j) = djj;
    for (std::size_t i = j + 1; i < n; ++i) {
      const double* gi = g.row(i).data();
      double v = s(i, j);
      for (std::size_t p = 0; p < j; ++p) v -= gi[p] * gj[p];
      g(i, j) = v / djj;
    }
  }
  return LowerTriangular(std::move(g));
}

Matrix invert_lower(const LowerTriangular& l) {
  const std::size_t n = l.n();
  // Row i of the inverse only depends on rows < i: forward substitution
  // against the identity, one row at a time.
  Matrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lii = l(i, i);
    inv(i, i) = 1.0 / lii;
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t p = j; p < i; ++p) s += l(i, p) * inv(p, j);
      inv(i, j) = -s / lii;
    }
  }
  return inv;
}

Matrix invert_spd(const Matrix& s) {
  const LowerTriangular g = cholesky_lower(s);
  const Matrix ginv = invert_lower(g);
  // S^{-1} = G^{-T} G^{-1}; entry (i,j) = sum_{p >= max(i,j)} ginv(p,i) ginv(p,j).
  const std::size_t n = s.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double v = 0.0;
      for (std::size_t p = i; p < n; ++p) v += ginv(p, i) * ginv(p, j);
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

Matrix strict_upper_hadamard(const Matrix& m) {
  require(m.square(), "strict_upper_hadamard: matrix is not square");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

double frobenius_sq(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s = std::max(s, std::abs(v));
  return s;
}

double relative_diff(const Matrix& a, const Matrix& b, double floor) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "relative_diff shape mismatch");
  return std::sqrt(frobenius_sq(a - b)) / std::max(std::sqrt(frobenius_sq(b)), floor);
}

}  // namespace caeq
