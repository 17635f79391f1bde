#include "caeq/problem.hpp"

#include <algorithm>
#include <numeric>

namespace caeq {

void LayerProblem::validate() const {
  if (w.rows() == 0 || w.cols() == 0) throw ShapeError("weight matrix is empty");
  if (x.rows() != w.cols()) throw ShapeError("input rows differ from weight columns");
  if (x.cols() == 0) throw ShapeError("calibration input has no samples");
  if (x_fp.rows() != x.rows() || x_fp.cols() != x.cols())
    throw ShapeError("full-precision input shape differs from quantized input");
}

LayerProblem LayerProblem::symmetric(Matrix w, Matrix x) {
  Matrix x_fp = x;
  return {std::move(w), std::move(x), std::move(x_fp)};
}

Permutation identity_permutation(std::size_t n) {
  Permutation p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

Permutation inverse_permutation(const Permutation& perm) {
  Permutation inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size())
      throw ShapeError("not a permutation");
    inv[perm[i]] = i;
  }
  return inv;
}

Matrix permute_columns(const Matrix& m, const Permutation& perm) {
  if (perm.size() != m.cols()) throw ShapeError("permutation length differs from column count");
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < perm.size(); ++j) dst[j] = src[perm[j]];
  }
  return out;
}

Matrix permute_rows(const Matrix& m, const Permutation& perm) {
  if (perm.size() != m.rows()) throw ShapeError("permutation length differs from row count");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto src = m.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix permute_symmetric(const Matrix& m, const Permutation& perm) {
  return permute_columns(permute_rows(m, perm), perm);
}

}  // namespace caeq
