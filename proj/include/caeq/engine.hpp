#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "caeq/calibrator.hpp"
#include "caeq/linalg.hpp"
#include "caeq/problem.hpp"
#include "caeq/quantizer.hpp"

namespace caeq {

/// A diagonal entry of L too small to divide by. Usually means the damping
/// is inadequate for a dead input channel.
class PivotError : public std::runtime_error {
 public:
  PivotError(const std::string& what, std::size_t column)
      : std::runtime_error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

inline constexpr double kPivotFloor = 1e-12;

/// How groups are laid out when columns are reordered.
enum class GroupOrder {
  kProcessing,  ///< contiguous groups over the processing order (default)
  kOriginal,    ///< groups over original column indices; scales fitted up front from W
};

/// Which weights a group's scales are fitted from when the group is reached.
enum class ScaleSource {
  kCurrent,   ///< compensated weights at group entry (default)
  kOriginal,  ///< the frozen snapshot W0
};

/// Selects the method through two independent correction terms:
///
///   use_p1  use_p2
///   false   false   GPTQ
///   true    false   GPTAQ (asymmetric calibration)
///   false   true    GPTQ + compensation-aware error
///   true    true    GPTAQ + compensation-aware error
struct MethodSpec {
  bool use_p1 = false;
  bool use_p2 = false;
  std::size_t block_size = 128;
  bool act_order = false;
  double lambda_frac = 0.01;
  GridParams grid{};
  GroupOrder group_order = GroupOrder::kProcessing;
  ScaleSource scale_source = ScaleSource::kCurrent;
  /// Row workers; 0 means std::thread::hardware_concurrency().
  std::size_t workers = 1;

  static MethodSpec gptq() { return {}; }
  static MethodSpec gptaq() { return with(true, false); }
  static MethodSpec gptq_cae() { return with(false, true); }
  static MethodSpec gptaq_cae() { return with(true, true); }

  std::string name() const;
  void validate() const;

 private:
  static MethodSpec with(bool p1, bool p2) {
    MethodSpec s;
    s.use_p1 = p1;
    s.use_p2 = p2;
    return s;
  }
};

CalibOptions calib_options(const MethodSpec& spec);

struct LayerReport {
  double sym_err = 0.0;       ///< ||Q X - W0 X||_F^2
  double asym_err = 0.0;      ///< ||Q X - W0 X_fp||_F^2
  double rtn_sym_err = 0.0;
  double rtn_asym_err = 0.0;
  double signal = 0.0;        ///< ||W0 X||_F^2, for relative reporting
  double calibrate_ms = 0.0;
  double quantize_ms = 0.0;
  double total_ms = 0.0;
};

struct AlignmentMetrics {
  double sym_err;
  double asym_err;
};

/// sym = ||(Q - W0) X||_F^2, asym = ||Q X - W0 X_fp||_F^2.
AlignmentMetrics alignment_metrics(const Matrix& q, const Matrix& w0, const Matrix& x, const Matrix& x_fp);

// ---------------------------------------------------------------------------
// Naive reference path: one column at a time, every trailing column updated
// immediately. The blocked solver must agree with it.

struct EngineState {
  Matrix w0;  ///< snapshot taken after any permutation
  Matrix w;   ///< current compensated weights
  Matrix q;   ///< quantized output; columns >= col are zero
  QuantGrid grid;
  std::size_t col = 0;

  EngineState(Matrix weights, QuantGrid quant_grid);
};

/// Grid for a processing-order weight matrix, with every group whose scales
/// do not depend on compensation (original group order, or fit-from-W0)
/// already fitted from `w0`.
QuantGrid make_grid(const Matrix& w0, const CalibState& calib, const MethodSpec& spec);

/// Fits the scales of `col`'s group if `col` opens it and they are not fitted.
void prepare_column(EngineState& state, const MethodSpec& spec);

/// Quantizes column `state.col`, applies the compensation to columns col..n-1
/// and advances. Returns the applied update (m x (n - col)).
Matrix column_step(EngineState& state, const CalibState& calib, const MethodSpec& spec);

/// Column-by-column run without blocking or row workers. Output in original
/// column order.
Matrix run_layer_naive(const LayerProblem& problem, const MethodSpec& spec);

// ---------------------------------------------------------------------------

struct LayerResult {
  Matrix q;  ///< original column order
  LayerReport report;
};

struct RunOptions {
  bool with_baseline = true;
};

/// Calibrate, reorder, blocked quantize-and-compensate, restore order, report.
LayerResult run_layer(const LayerProblem& problem, const MethodSpec& spec, const RunOptions& options = {});

/// Blocked solver for a slice of rows against a prebuilt calibration, in
/// processing order. `w` holds those rows of W in processing order.
Matrix quantize_rows(const Matrix& w, const CalibState& calib, const MethodSpec& spec);

/// Per-group round-to-nearest of W in original column order, no compensation.
LayerResult rtn_baseline(const LayerProblem& problem, const GridParams& grid);

}  // namespace caeq
