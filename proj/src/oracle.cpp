#include "caeq/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "caeq/calibrator.hpp"

namespace caeq::oracle {

namespace {

using Dense = Eigen::MatrixXd;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Dense to_eigen(const Matrix& m) {
  return Eigen::Map<const RowMajor>(m.data().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols()));
}

Matrix from_eigen(const Dense& d) {
  Matrix m(std::size_t(d.rows()), std::size_t(d.cols()));
  Eigen::Map<RowMajor>(m.data().data(), d.rows(), d.cols()) = d;
  return m;
}

}  // namespace

void ConstrainedLSProblem::validate() const {
  if (design.rows() == 0 || design.cols() == 0) throw ShapeError("empty design");
  if (pinned_index >= design.rows()) throw ShapeError("pinned index outside the design rows");
  if (target.cols() != design.cols()) throw ShapeError("target and design sample counts differ");
  if (pinned_value.size() != target.rows()) throw ShapeError("one pinned value per target row required");
  if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be nonnegative");
}

ConstrainedLSSolution solve_constrained_ls(const ConstrainedLSProblem& p) {
  p.validate();
  const Eigen::Index vars = Eigen::Index(p.design.rows());
  const Eigen::Index s = Eigen::Index(p.pinned_index);
  const Dense design = to_eigen(p.design);
  const Dense target = to_eigen(p.target);

  // Free variables are every design row except the pinned one.
  Dense rest(vars - 1, design.cols());
  for (Eigen::Index i = 0, o = 0; i < vars; ++i)
    if (i != s) rest.row(o++) = design.row(i);

  ConstrainedLSSolution sol;
  Dense delta = Dense::Zero(target.rows(), vars);
  if (vars == 1) {
    for (Eigen::Index r = 0; r < target.rows(); ++r) delta(r, 0) = p.pinned_value[std::size_t(r)];
    sol.delta = from_eigen(delta);
    return sol;
  }

  const Dense normal = rest * rest.transpose() + p.ridge * Dense::Identity(vars - 1, vars - 1);
  const Eigen::CompleteOrthogonalDecomposition<Dense> cod(normal);
  sol.rank_deficient = cod.rank() < vars - 1;
  const Dense pinv = cod.pseudoInverse();

  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    const double c = p.pinned_value[std::size_t(r)];
    const Eigen::RowVectorXd shifted = target.row(r) - c * design.row(s);
    const Eigen::RowVectorXd v = (pinv * (rest * shifted.transpose())).transpose();
    for (Eigen::Index i = 0, o = 0; i < vars; ++i) delta(r, i) = (i == s) ? c : v(o++);
  }
  sol.delta = from_eigen(delta);
  return sol;
}

ConstrainedLSSolution solve_constrained_ls_kkt(const ConstrainedLSProblem& p) {
  p.validate();
  const Eigen::Index vars = Eigen::Index(p.design.rows());
  const Eigen::Index s = Eigen::Index(p.pinned_index);
  const Dense design = to_eigen(p.design);
  const Dense target = to_eigen(p.target);
  const Eigen::Index m = target.rows();

  Dense kkt = Dense::Zero(vars + 1, vars + 1);
  kkt.topLeftCorner(vars, vars) = design * design.transpose() + p.ridge * Dense::Identity(vars, vars);
  kkt(s, vars) = 1.0;
  kkt(vars, s) = 1.0;

  Dense rhs(vars + 1, m);
  rhs.topRows(vars) = design * target.transpose();
  for (Eigen::Index r = 0; r < m; ++r) rhs(vars, r) = p.pinned_value[std::size_t(r)];

  const Eigen::FullPivLU<Dense> lu(kkt);
  const Dense z = lu.solve(rhs);

  ConstrainedLSSolution sol;
  sol.rank_deficient = lu.rank() < vars + 1;
  const double scale = kkt.norm() * z.norm() + rhs.norm();
  sol.kkt_residual = scale > 0.0 ? (kkt * z - rhs).norm() / scale : 0.0;
  sol.delta = from_eigen(z.topRows(vars).transpose());
  return sol;
}

double step_objective(const ConstrainedLSProblem& p, const Matrix& delta) {
  p.validate();
  if (delta.rows() != p.target.rows() || delta.cols() != p.design.rows())
    throw ShapeError("update shape does not match the step problem");
  const Dense d = to_eigen(delta);
  const Dense resid = d * to_eigen(p.design) - to_eigen(p.target);
  return resid.squaredNorm() + p.ridge * d.squaredNorm();
}

ConstrainedLSProblem step_problem(const Matrix& w0, const Matrix& w, std::span<const double> q_col,
                                  const LayerProblem& processing, std::size_t q, bool use_p1, bool use_p2,
                                  double ridge) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const std::size_t k = processing.k();
  if (q >= n || q_col.size() != m || processing.n() != n) throw ShapeError("step problem shapes inconsistent");

  ConstrainedLSProblem p;
  p.design = processing.x.block(q, 0, n - q, k);
  p.target = Matrix(m, k);
  p.pinned_index = 0;
  p.pinned_value.resize(m);
  p.ridge = ridge;
  const auto x_row = processing.x.row(q);
  const auto xfp_row = processing.x_fp.row(q);
  for (std::size_t r = 0; r < m; ++r) {
    const double wq = w(r, q);
    const double drift = w0(r, q) - wq;
    auto t = p.target.row(r);
    for (std::size_t c = 0; c < k; ++c) {
      double v = 0.0;
      if (use_p1) v += wq * (xfp_row[c] - x_row[c]);
      if (use_p2) v += drift * xfp_row[c];
      t[c] = v;
    }
    p.pinned_value[r] = q_col[r] - wq;
  }
  return p;
}

double full_objective(const Matrix& q, const Matrix& w0, const Matrix& x, const Matrix& x_fp, ObjectiveMode mode) {
  if (q.rows() != w0.rows() || q.cols() != w0.cols() || x.rows() != q.cols() || x_fp.rows() != x.rows() ||
      x_fp.cols() != x.cols())
    throw ShapeError("full_objective: shapes inconsistent");
  const Dense reference = to_eigen(w0) * to_eigen(mode == ObjectiveMode::kSymmetric ? x : x_fp);
  return (to_eigen(q) * to_eigen(x) - reference).squaredNorm();
}

Matrix greedy_oracle_run(const LayerProblem& problem, const MethodSpec& spec) {
  problem.validate();
  spec.validate();
  const std::size_t n = problem.n();
  const std::size_t m = problem.m();
  if (n > kGreedyMaxWidth) throw std::length_error("greedy oracle limited to 64 columns");

  const Dense x = to_eigen(problem.x);
  const Matrix h = from_eigen(x * x.transpose());
  const double ridge = damping_for(h, spec.lambda_frac);

  // Only the ordering and grouping bookkeeping is shared with the engine.
  CalibState order;
  order.perm = spec.act_order ? act_order_permutation(h) : identity_permutation(n);
  order.inverse = inverse_permutation(order.perm);
  const LayerProblem processing = apply_permutation(problem, order.perm).problem;

  const Matrix& w0 = processing.w;
  Matrix w = w0;
  Matrix q_out(m, n);
  QuantGrid grid = make_grid(w0, order, spec);
  const std::size_t width = grid.group_width();

  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t g = grid.group_of(q);
    if (!grid.fitted(g)) grid.fit(g, w.block(0, q, m, width));
    const QuantizedColumn qc = grid.quantize(q, w.col(q));

    const ConstrainedLSProblem step =
        step_problem(w0, w, qc.dequant, processing, q, spec.use_p1, spec.use_p2, ridge);
    const ConstrainedLSSolution sol = solve_constrained_ls(step);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t t = q; t < n; ++t) w(r, t) += sol.delta(r, t - q);
    q_out.set_col(q, qc.dequant);
  }
  return permute_columns(q_out, order.inverse);
}

}  // namespace caeq::oracle
