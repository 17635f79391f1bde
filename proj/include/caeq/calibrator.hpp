#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "caeq/linalg.hpp"
#include "caeq/problem.hpp"

namespace caeq {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HessianResult {
  Matrix h;       ///< X X^T, undamped
  double lambda;  ///< damping added to the diagonal before factorization
};

/// H = X X^T and lambda = lambda_frac * mean(diag H), floored at
/// 1e-8 * (1 + mean|H|).
HessianResult build_hessian(const Matrix& x, double lambda_frac);

/// Damping rule on its own, for callers that already hold H.
double damping_for(const Matrix& h, double lambda_frac);

/// Column order by descending Hessian diagonal; equal entries keep their
/// original relative order.
Permutation act_order_permutation(const Matrix& h);

struct PermutedProblem {
  LayerProblem problem;
  Permutation perm;     ///< processing index -> original column
  Permutation inverse;  ///< original column -> processing index
};

/// Permutes W columns and the rows of both inputs identically. W X is
/// preserved up to summation order.
PermutedProblem apply_permutation(const LayerProblem& problem, const Permutation& perm);

/// Lower-triangular L with L L^T = (H + lambda I)^{-1}.
///
/// Built without forming the inverse: factor the damped matrix in reversed
/// index order, which gives an upper-triangular V with H + lambda I = V V^T,
/// then L = V^{-T}. Throws CalibrationError if the damped matrix is not
/// positive definite.
LowerTriangular inverse_cholesky(const Matrix& h, double lambda);

/// P = ((M L) .* M_U) L^T with M_U the strictly-upper mask. Row i equals
/// M(i, :) L[i+1:, i+1:] L[i+1:, i+1:]^T placed in columns i+1.. and zero
/// elsewhere. Only the triangular parts that survive the mask are computed.
Matrix precompute_P(const Matrix& m, const LowerTriangular& l);

struct CalibOptions {
  double lambda_frac = 0.01;
  bool act_order = false;
  bool need_p1 = false;
  bool need_p2 = false;
};

/// Everything the column loop reads, all in processing (possibly permuted)
/// order. Immutable once built.
struct CalibState {
  Matrix h;        ///< undamped X X^T
  double lambda = 0.0;
  LowerTriangular l;
  Matrix l_t;      ///< L^T, cached so rows of it are contiguous
  Matrix dxxt;     ///< (X_fp - X) X^T
  Matrix p1;       ///< empty unless requested
  Matrix p2;       ///< empty unless requested
  Permutation perm;
  Permutation inverse;

  std::size_t n() const noexcept { return h.rows(); }
  bool has_p1() const noexcept { return p1.size() != 0; }
  bool has_p2() const noexcept { return p2.size() != 0; }
};

struct Calibrated {
  LayerProblem problem;  ///< in processing order
  CalibState state;
};

Calibrated calibrate(const LayerProblem& problem, const CalibOptions& options);

}  // namespace caeq
