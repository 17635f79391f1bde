#pragma once

#include <cstddef>
#include <vector>

#include "caeq/linalg.hpp"

namespace caeq {

/// One linear layer to quantize: y = W x with W (m x n). `x` is the
/// quantized-flow calibration input and `x_fp` the full-precision-flow input,
/// both n x k.
struct LayerProblem {
  Matrix w;
  Matrix x;
  Matrix x_fp;

  std::size_t m() const noexcept { return w.rows(); }
  std::size_t n() const noexcept { return w.cols(); }
  std::size_t k() const noexcept { return x.cols(); }

  /// Throws ShapeError on inconsistent shapes or an empty problem.
  void validate() const;

  /// Problem whose full-precision input coincides with the quantized one.
  static LayerProblem symmetric(Matrix w, Matrix x);
};

using Permutation = std::vector<std::size_t>;

Permutation identity_permutation(std::size_t n);
Permutation inverse_permutation(const Permutation& perm);
/// out(:, j) = m(:, perm[j]).
Matrix permute_columns(const Matrix& m, const Permutation& perm);
/// out(i, :) = m(perm[i], :).
Matrix permute_rows(const Matrix& m, const Permutation& perm);
/// out(i, j) = m(perm[i], perm[j]).
Matrix permute_symmetric(const Matrix& m, const Permutation& perm);

}  // namespace caeq
