#include "caeq/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>
#include <vector>

namespace caeq {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Per-column coefficients of the rank-1 compensation applied after quantizing
// column j. Every path (naive, in-block, trailing flush, pending view) goes
// through `apply`, so all of them round identically.
struct ColumnUpdate {
  double scaled_err;  // (w - q) / L_jj
  double w;           // pre-quantization value, coefficient of P1
  double drift;       // w0 - w, coefficient of P2

  double apply(double lt, double p1, double p2, bool use_p1, bool use_p2) const {
    double d = -scaled_err * lt;
    if (use_p1) d += w * p1;
    if (use_p2) d += drift * p2;
    return d;
  }
};

void check_pivot(const CalibState& calib, std::size_t j) {
  const double ljj = calib.l(j, j);
  if (!(std::abs(ljj) >= kPivotFloor))
    throw PivotError("inverse-Cholesky pivot " + std::to_string(ljj) + " at column " + std::to_string(j) +
                         " is below the floor; increase damping",
                     j);
}

void check_terms(const CalibState& calib, const MethodSpec& spec) {
  if (spec.use_p1 && !calib.has_p1()) throw StateError("method needs P1 but calibration did not build it");
  if (spec.use_p2 && !calib.has_p2()) throw StateError("method needs P2 but calibration did not build it");
}

std::span<const double> row_or_empty(const Matrix& m, std::size_t r) {
  return m.size() ? m.row(r) : std::span<const double>{};
}

bool lazy_scales(const MethodSpec& spec) {
  return spec.group_order == GroupOrder::kProcessing && spec.scale_source == ScaleSource::kCurrent;
}

}  // namespace

std::string MethodSpec::name() const {
  std::string base = use_p1 ? "gptaq" : "gptq";
  return use_p2 ? base + "+cae" : base;
}

void MethodSpec::validate() const {
  if (block_size == 0) throw std::invalid_argument("block_size must be at least 1");
  if (!(lambda_frac >= 0.0) || !std::isfinite(lambda_frac))
    throw std::invalid_argument("lambda_frac must be a finite nonnegative number");
  grid.validate();
}

CalibOptions calib_options(const MethodSpec& spec) {
  return {spec.lambda_frac, spec.act_order, spec.use_p1, spec.use_p2};
}

AlignmentMetrics alignment_metrics(const Matrix& q, const Matrix& w0, const Matrix& x, const Matrix& x_fp) {
  if (q.rows() != w0.rows() || q.cols() != w0.cols()) throw ShapeError("Q and W0 shapes differ");
  if (x.rows() != q.cols() || x_fp.rows() != x.rows() || x_fp.cols() != x.cols())
    throw ShapeError("input shapes do not match the weights");
  const double sym = frobenius_sq(matmul(q - w0, x));
  const double asym = frobenius_sq(matmul(q, x) - matmul(w0, x_fp));
  return {sym, asym};
}

EngineState::EngineState(Matrix weights, QuantGrid quant_grid)
    : w0(weights), w(std::move(weights)), q(w0.rows(), w0.cols()), grid(std::move(quant_grid)) {
  if (grid.rows() != w.rows() || grid.cols() != w.cols()) throw ShapeError("grid shape differs from weights");
}

QuantGrid make_grid(const Matrix& w0, const CalibState& calib, const MethodSpec& spec) {
  const std::size_t m = w0.rows();
  const std::size_t n = w0.cols();
  if (spec.group_order == GroupOrder::kOriginal) {
    QuantGrid grid(spec.grid, m, n, calib.perm);
    const std::size_t width = grid.group_width();
    for (std::size_t g = 0; g < grid.num_groups(); ++g) {
      Matrix group(m, width);
      for (std::size_t c = 0; c < width; ++c) {
        const std::size_t j = calib.inverse[g * width + c];
        for (std::size_t r = 0; r < m; ++r) group(r, c) = w0(r, j);
      }
      grid.fit(g, group);
    }
    return grid;
  }
  QuantGrid grid(spec.grid, m, n);
  if (spec.scale_source == ScaleSource::kOriginal) {
    const std::size_t width = grid.group_width();
    for (std::size_t g = 0; g < grid.num_groups(); ++g) grid.fit(g, w0.block(0, g * width, m, width));
  }
  return grid;
}

void prepare_column(EngineState& state, const MethodSpec& spec) {
  const std::size_t g = state.grid.group_of(state.col);
  if (state.grid.fitted(g)) return;
  if (!lazy_scales(spec) || state.col % state.grid.group_width() != 0)
    throw StateError("group scales missing at column " + std::to_string(state.col));
  state.grid.fit(g, state.w.block(0, state.col, state.w.rows(), state.grid.group_width()));
}

Matrix column_step(EngineState& state, const CalibState& calib, const MethodSpec& spec) {
  const std::size_t m = state.w.rows();
  const std::size_t n = state.w.cols();
  const std::size_t j = state.col;
  if (j >= n) throw StateError("all columns already quantized");
  if (calib.n() != n) throw ShapeError("calibration width differs from weights");
  check_terms(calib, spec);
  check_pivot(calib, j);

  const double ljj = calib.l(j, j);
  const auto scales = state.grid.scales(state.grid.group_of(j));
  const int qm = qmax(spec.grid.bits);
  const auto lt = calib.l_t.row(j);
  const auto p1 = row_or_empty(calib.p1, j);
  const auto p2 = row_or_empty(calib.p2, j);

  Matrix delta(m, n - j);
  for (std::size_t r = 0; r < m; ++r) {
    const double w = state.w(r, j);
    const double qv = quantize_level(w, scales[r], qm) * scales[r];
    state.q(r, j) = qv;
    const ColumnUpdate u{(w - qv) / ljj, w, state.w0(r, j) - w};
    auto wrow = state.w.row(r);
    for (std::size_t t = j; t < n; ++t) {
      const double d =
          u.apply(lt[t], spec.use_p1 ? p1[t] : 0.0, spec.use_p2 ? p2[t] : 0.0, spec.use_p1, spec.use_p2);
      wrow[t] += d;
      delta(r, t - j) = d;
    }
  }
  ++state.col;
  return delta;
}

Matrix run_layer_naive(const LayerProblem& problem, const MethodSpec& spec) {
  spec.validate();
  const Calibrated cal = calibrate(problem, calib_options(spec));
  EngineState state(cal.problem.w, make_grid(cal.problem.w, cal.state, spec));
  while (state.col < problem.n()) {
    prepare_column(state, spec);
    column_step(state, cal.state, spec);
  }
  return permute_columns(state.q, cal.state.inverse);
}

Matrix quantize_rows(const Matrix& w_in, const CalibState& calib, const MethodSpec& spec) {
  const std::size_t m = w_in.rows();
  const std::size_t n = w_in.cols();
  if (calib.n() != n) throw ShapeError("calibration width differs from weights");
  check_terms(calib, spec);
  const bool use_p1 = spec.use_p1;
  const bool use_p2 = spec.use_p2;
  const int qm = qmax(spec.grid.bits);
  const Matrix& lt = calib.l_t;

  Matrix w = w_in;
  const Matrix& w0 = w_in;
  Matrix q(m, n);
  QuantGrid grid = make_grid(w0, calib, spec);
  const std::size_t width = grid.group_width();
  const bool lazy = lazy_scales(spec);

  auto p1_at = [&](std::size_t j, std::size_t t) { return use_p1 ? calib.p1(j, t) : 0.0; };
  auto p2_at = [&](std::size_t j, std::size_t t) { return use_p2 ? calib.p2(j, t) : 0.0; };

  const std::size_t bsz = std::min(spec.block_size, n);
  std::vector<ColumnUpdate> pending(m * bsz);

  for (std::size_t i = 0; i < n; i += bsz) {
    const std::size_t end = std::min(i + bsz, n);
    for (std::size_t j = i; j < end; ++j) {
      const std::size_t g = grid.group_of(j);
      if (lazy && !grid.fitted(g)) {
        // Group columns past the block still owe this block's updates; fit
        // on the values they would have with those applied.
        Matrix group = w.block(0, j, m, width);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t t = std::max(j, end); t < j + width; ++t) {
            double v = w(r, t);
            for (std::size_t b = i; b < j; ++b)
              v += pending[r * bsz + (b - i)].apply(lt(b, t), p1_at(b, t), p2_at(b, t), use_p1, use_p2);
            group(r, t - j) = v;
          }
        grid.fit(g, group);
      }
      check_pivot(calib, j);
      const double ljj = calib.l(j, j);
      const auto scales = grid.scales(g);
      const auto lt_j = lt.row(j);

      for (std::size_t r = 0; r < m; ++r) {
        const double wv = w(r, j);
        const double qv = quantize_level(wv, scales[r], qm) * scales[r];
        q(r, j) = qv;
        const ColumnUpdate u{(wv - qv) / ljj, wv, w0(r, j) - wv};
        pending[r * bsz + (j - i)] = u;
        auto wrow = w.row(r);
        for (std::size_t t = j; t < end; ++t) wrow[t] += u.apply(lt_j[t], p1_at(j, t), p2_at(j, t), use_p1, use_p2);
      }
    }

    // Trailing flush: columns >= end receive every column's update of this
    // block, in column order.
    if (end < n) {
      for (std::size_t r = 0; r < m; ++r) {
        double* wrow = w.row(r).data();
        for (std::size_t b = i; b < end; ++b) {
          const ColumnUpdate& u = pending[r * bsz + (b - i)];
          const double* lt_b = lt.row(b).data();
          const double* p1_b = use_p1 ? calib.p1.row(b).data() : nullptr;
          const double* p2_b = use_p2 ? calib.p2.row(b).data() : nullptr;
          for (std::size_t t = end; t < n; ++t)
            wrow[t] += u.apply(lt_b[t], use_p1 ? p1_b[t] : 0.0, use_p2 ? p2_b[t] : 0.0, use_p1, use_p2);
        }
      }
    }
  }
  return q;
}

LayerResult run_layer(const LayerProblem& problem, const MethodSpec& spec, const RunOptions& options) {
  spec.validate();
  problem.validate();
  const auto t_start = Clock::now();

  const Calibrated cal = calibrate(problem, calib_options(spec));
  LayerResult result;
  result.report.calibrate_ms = ms_since(t_start);

  const auto t_quant = Clock::now();
  const std::size_t m = problem.m();
  const std::size_t n = problem.n();
  std::size_t workers = spec.workers ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, m);

  Matrix q_proc;
  if (workers <= 1) {
    q_proc = quantize_rows(cal.problem.w, cal.state, spec);
  } else {
    q_proc = Matrix(m, n);
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t wk = 0; wk < workers; ++wk) {
        const std::size_t r0 = m * wk / workers;
        const std::size_t r1 = m * (wk + 1) / workers;
        pool.emplace_back([&, wk, r0, r1] {
          try {
            const Matrix part = quantize_rows(cal.problem.w.block(r0, 0, r1 - r0, n), cal.state, spec);
            for (std::size_t r = r0; r < r1; ++r) {
              const auto src = part.row(r - r0);
              std::copy(src.begin(), src.end(), q_proc.row(r).begin());
            }
          } catch (...) {
            errors[wk] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  result.q = permute_columns(q_proc, cal.state.inverse);
  result.report.quantize_ms = ms_since(t_quant);
  result.report.total_ms = ms_since(t_start);

  const auto metrics = alignment_metrics(result.q, problem.w, problem.x, problem.x_fp);
  result.report.sym_err = metrics.sym_err;
  result.report.asym_err = metrics.asym_err;
  result.report.signal = frobenius_sq(matmul(problem.w, problem.x));
  if (options.with_baseline) {
    const LayerResult rtn = rtn_baseline(problem, spec.grid);
    result.report.rtn_sym_err = rtn.report.sym_err;
    result.report.rtn_asym_err = rtn.report.asym_err;
  }
  return result;
}

LayerResult rtn_baseline(const LayerProblem& problem, const GridParams& params) {
  problem.validate();
  const auto t0 = Clock::now();
  const std::size_t m = problem.m();
  QuantGrid grid(params, m, problem.n());
  const std::size_t width = grid.group_width();
  LayerResult result{Matrix(m, problem.n()), {}};
  for (std::size_t g = 0; g < grid.num_groups(); ++g) {
    grid.fit(g, problem.w.block(0, g * width, m, width));
    for (std::size_t j = g * width; j < (g + 1) * width; ++j)
      result.q.set_col(j, grid.quantize(j, problem.w.col(j)).dequant);
  }
  result.report.quantize_ms = ms_since(t0);
  result.report.total_ms = result.report.quantize_ms;
  const auto metrics = alignment_metrics(result.q, problem.w, problem.x, problem.x_fp);
  result.report.sym_err = result.report.rtn_sym_err = metrics.sym_err;
  result.report.asym_err = result.report.rtn_asym_err = metrics.asym_err;
  result.report.signal = frobenius_sq(matmul(problem.w, problem.x));
  return result;
}

}  // namespace caeq
