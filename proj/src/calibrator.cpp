#include "caeq/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace caeq {

namespace {

// X X^T, computing the lower triangle only.
Matrix gram(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  Matrix h(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    for (std::size_t j = 0; j <= i; ++j) {
      const double* xj = x.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += xi[p] * xj[p];
      h(i, j) = s;
      h(j, i) = s;
    }
  }
  return h;
}

}  // namespace

double damping_for(const Matrix& h, double lambda_frac) {
  const std::size_t n = h.rows();
  double diag = 0.0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag += h(i, i);
  for (double v : h.data()) abs_sum += std::abs(v);
  const double mean_diag = diag / double(n);
  const double mean_abs = abs_sum / double(h.size());
  return std::max(lambda_frac * mean_diag, 1e-8 * (1.0 + mean_abs));
}

HessianResult build_hessian(const Matrix& x, double lambda_frac) {
  if (x.rows() == 0 || x.cols() == 0) throw ShapeError("build_hessian: empty input");
  Matrix h = gram(x);
  const double lambda = damping_for(h, lambda_frac);
  return {std::move(h), lambda};
}

Permutation act_order_permutation(const Matrix& h) {
  if (!h.square()) throw ShapeError("act_order_permutation: Hessian is not square");
  Permutation perm = identity_permutation(h.rows());
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return h(a, a) > h(b, b); });
  return perm;
}

PermutedProblem apply_permutation(const LayerProblem& problem, const Permutation& perm) {
  if (perm.size() != problem.n()) throw ShapeError("permutation length differs from layer width");
  PermutedProblem out{{permute_columns(problem.w, perm), permute_rows(problem.x, perm),
                       permute_rows(problem.x_fp, perm)},
                      perm,
                      inverse_permutation(perm)};
  return out;
}

LowerTriangular inverse_cholesky(const Matrix& h, double lambda) {
  if (!h.square()) throw ShapeError("inverse_cholesky: Hessian is not square");
  const std::size_t n = h.rows();
  const Permutation reversed = [&] {
    Permutation p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = n - 1 - i;
    return p;
  }();

  // J (H + lambda I) J = G G^T  =>  H + lambda I = V V^T with V = J G J upper.
  LowerTriangular g;
  try {
    g = cholesky_lower(permute_symmetric(h, reversed), lambda);
  } catch (const FactorizationError& e) {
    throw CalibrationError("damped Hessian is not positive definite (pivot " +
                           std::to_string(n - 1 - e.pivot()) + ")");
  }
  // L = V^{-T} = J G^{-T} J, so L(i, j) = G^{-1}(n-1-j, n-1-i).
  const Matrix ginv = invert_lower(g);
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) l(i, j) = ginv(n - 1 - j, n - 1 - i);
  return LowerTriangular(std::move(l));
}

Matrix precompute_P(const Matrix& m, const LowerTriangular& l) {
  const std::size_t n = l.n();
  if (m.rows() != n || m.cols() != n) throw ShapeError("precompute_P: shape mismatch");
  Matrix p(n, n);
  std::vector<double> o(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    // O(i, a) = sum_{b >= a} M(i, b) L(b, a), kept for a > i only.
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t b = i + 1; b < n; ++b) {
      const double mib = m(i, b);
      if (mib == 0.0) continue;
      const double* lb = l.dense().row(b).data();
      for (std::size_t a = i + 1; a <= b; ++a) o[a] += mib * lb[a];
    }
    // P(i, j) = sum_{a = i+1}^{j} O(i, a) L(j, a).
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* lj = l.dense().row(j).data();
      double s = 0.0;
      for (std::size_t a = i + 1; a <= j; ++a) s += o[a] * lj[a];
      p(i, j) = s;
    }
  }
  return p;
}

Calibrated calibrate(const LayerProblem& problem, const CalibOptions& options) {
  problem.validate();
  const std::size_t n = problem.n();

  HessianResult hess = build_hessian(problem.x, options.lambda_frac);
  const Permutation perm = options.act_order ? act_order_permutation(hess.h) : identity_permutation(n);

  Calibrated out;
  if (options.act_order) {
    PermutedProblem pp = apply_permutation(problem, perm);
    out.problem = std::move(pp.problem);
    out.state.h = permute_symmetric(hess.h, perm);
  } else {
    out.problem = problem;
    out.state.h = std::move(hess.h);
  }
  CalibState& st = out.state;
  st.lambda = hess.lambda;
  st.perm = perm;
  st.inverse = inverse_permutation(perm);
  st.l = inverse_cholesky(st.h, st.lambda);
  st.l_t = st.l.dense().transpose();

  if (options.need_p1 || options.need_p2) {
    st.dxxt = matmul_nt(out.problem.x_fp - out.problem.x, out.problem.x);
    if (options.need_p1) st.p1 = precompute_P(st.dxxt, st.l);
    if (options.need_p2) st.p2 = precompute_P(st.h + st.dxxt, st.l);
  } else {
    st.dxxt = Matrix(n, n);
  }
  return out;
}

}  // namespace caeq
