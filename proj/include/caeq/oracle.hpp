#pragma once

// Brute-force references for the engine. Nothing here reads L, P1, P2 or the
// blocked solver; the dense solves go through Eigen rather than caeq's own
// kernels.

#include <cstddef>
#include <span>
#include <vector>

#include "caeq/engine.hpp"
#include "caeq/linalg.hpp"
#include "caeq/problem.hpp"

namespace caeq::oracle {

/// Per row: minimize ||d * design - target_row||^2 + ridge * ||d||^2 subject to
/// d[pinned_index] = pinned_value[row]. `design` is (n-q) x k (rows of X from
/// column q on); the ridge term reproduces the engine's damped normal matrix.
struct ConstrainedLSProblem {
  Matrix design;
  Matrix target;  ///< m x k
  std::size_t pinned_index = 0;
  std::vector<double> pinned_value;
  double ridge = 0.0;

  void validate() const;
};

struct ConstrainedLSSolution {
  Matrix delta;  ///< m x (n-q)
  bool rank_deficient = false;
  double kkt_residual = 0.0;  ///< relative residual; bordered-system route only
};

/// Eliminates the pinned variable and solves the reduced normal equations by
/// pseudo-inverse (minimum-norm when rank deficient).
ConstrainedLSSolution solve_constrained_ls(const ConstrainedLSProblem& p);

/// Second route: solves the bordered KKT system [A e; e^T 0] directly.
ConstrainedLSSolution solve_constrained_ls_kkt(const ConstrainedLSProblem& p);

/// ||delta * design - target||_F^2 + ridge * ||delta||_F^2.
double step_objective(const ConstrainedLSProblem& p, const Matrix& delta);

/// The per-column problem the engine solves at column `q`, in processing
/// order: target = [use_p1] W(:,q) dX(q,:) + [use_p2] (W0(:,q) - W(:,q)) Xfp(q,:),
/// pinned value Q(:,q) - W(:,q).
ConstrainedLSProblem step_problem(const Matrix& w0, const Matrix& w, std::span<const double> q_col,
                                  const LayerProblem& processing, std::size_t q, bool use_p1, bool use_p2,
                                  double ridge);

enum class ObjectiveMode { kSymmetric, kAsymmetric };

/// ||Q X - W0 X||_F^2 or ||Q X - W0 Xfp||_F^2 by plain dense products.
double full_objective(const Matrix& q, const Matrix& w0, const Matrix& x, const Matrix& x_fp, ObjectiveMode mode);

inline constexpr std::size_t kGreedyMaxWidth = 64;

/// End-to-end reference: per column, quantize, then solve the constrained
/// step with the spec's target. Output in original column order.
Matrix greedy_oracle_run(const LayerProblem& problem, const MethodSpec& spec);

}  // namespace caeq::oracle
