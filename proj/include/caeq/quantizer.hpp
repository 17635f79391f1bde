#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "caeq/linalg.hpp"

namespace caeq {

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Clip ratios tried by the MSE scale search when none are given.
inline const std::vector<double> kDefaultClipGrid{1.00, 0.95, 0.90, 0.85, 0.80};

/// Static description of a per-group symmetric grid.
struct GridParams {
  int bits = 4;
  std::size_t group_size = 128;
  std::vector<double> clip_grid = kDefaultClipGrid;

  /// Throws std::invalid_argument unless bits in [2, 16], group_size > 0 and
  /// the clip grid is a nonempty set of ratios in (0, 1] containing 1.0.
  void validate() const;
};

/// Largest representable level: 2^(bits-1) - 1. The level -2^(bits-1) is unused.
int qmax(int bits);

/// Round half away from zero, clamped to [-qmax, qmax]. A zero scale maps
/// everything to level 0.
std::int32_t quantize_level(double w, double scale, int qmax_level);

/// Per-row scale minimizing the squared round-trip error over the clip grid.
/// `group` holds one row per output channel. Ties go to the larger ratio.
std::vector<double> fit_group_scales(const Matrix& group, int bits, std::span<const double> clip_grid);

struct QuantizedColumn {
  std::vector<std::int32_t> levels;
  std::vector<double> dequant;
};

QuantizedColumn quantize_column(std::span<const double> col, std::span<const double> scales, int bits);

/// Per-(row, group) scales for an m x n weight matrix, populated one group at a
/// time. Once fitted a group's scales are frozen.
class QuantGrid {
 public:
  QuantGrid(GridParams params, std::size_t rows, std::size_t cols);
  /// Groups follow `column_order[col]` (an original column index) instead of
  /// `col`, so a reordered matrix can keep its original group layout.
  QuantGrid(GridParams params, std::size_t rows, std::size_t cols, std::vector<std::size_t> column_order);

  const GridParams& params() const noexcept { return params_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  /// Effective group width (group_size clipped to the column count).
  std::size_t group_width() const noexcept { return width_; }
  std::size_t num_groups() const noexcept { return scales_.size(); }
  std::size_t group_of(std::size_t col) const noexcept {
    return (order_.empty() ? col : order_[col]) / width_;
  }

  bool fitted(std::size_t group) const { return scales_.at(group).has_value(); }
  /// Fits from `group` (rows x width). Throws StateError if already fitted.
  void fit(std::size_t group, const Matrix& group_weights);
  void set_scales(std::size_t group, std::vector<double> scales);
  std::span<const double> scales(std::size_t group) const;

  /// Quantizes column `col` with its group's scales; StateError if not fitted.
  QuantizedColumn quantize(std::size_t col, std::span<const double> values) const;

 private:
  GridParams params_;
  std::size_t rows_;
  std::size_t cols_;
  std::size_t width_;
  std::vector<std::size_t> order_;
  std::vector<std::optional<std::vector<double>>> scales_;
};

}  // namespace caeq
