#include "caeq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace caeq {

void GridParams::validate() const {
  if (bits < 2 || bits > 16) throw std::invalid_argument("bits must be in [2, 16]");
  if (group_size == 0) throw std::invalid_argument("group_size must be positive");
  if (clip_grid.empty()) throw std::invalid_argument("clip_grid is empty");
  bool has_one = false;
  for (double c : clip_grid) {
    if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("clip ratio outside (0, 1]");
    has_one |= (c == 1.0);
  }
  if (!has_one) throw std::invalid_argument("clip_grid must contain 1.0");
}

int qmax(int bits) {
  if (bits < 2 || bits > 16) throw std::invalid_argument("bits must be in [2, 16]");
  return (1 << (bits - 1)) - 1;
}

std::int32_t quantize_level(double w, double scale, int qmax_level) {
  if (scale == 0.0) return 0;
  const double r = std::round(w / scale);
  return static_cast<std::int32_t>(std::clamp(r, -double(qmax_level), double(qmax_level)));
}

std::vector<double> fit_group_scales(const Matrix& group, int bits, std::span<const double> clip_grid) {
  if (group.rows() == 0 || group.cols() == 0) throw ShapeError("empty quantization group");
  if (clip_grid.empty()) throw std::invalid_argument("clip_grid is empty");
  const int qm = qmax(bits);
  std::vector<double> scales(group.rows(), 0.0);
  for (std::size_t r = 0; r < group.rows(); ++r) {
    const auto row = group.row(r);
    double amax = 0.0;
    for (double w : row) amax = std::max(amax, std::abs(w));
    if (amax == 0.0) continue;

    double best_err = 0.0;
    double best_ratio = -1.0;
    for (double ratio : clip_grid) {
      const double s = ratio * amax / qm;
      double err = 0.0;
      for (double w : row) {
        const double d = w - quantize_level(w, s, qm) * s;
        err += d * d;
      }
      if (best_ratio < 0.0 || err < best_err || (err == best_err && ratio > best_ratio)) {
        best_err = err;
        best_ratio = ratio;
        scales[r] = s;
      }
    }
  }
  return scales;
}

QuantizedColumn quantize_column(std::span<const double> col, std::span<const double> scales, int bits) {
  if (col.size() != scales.size()) throw ShapeError("column and scale lengths differ");
  const int qm = qmax(bits);
  QuantizedColumn out;
  out.levels.resize(col.size());
  out.dequant.resize(col.size());
  for (std::size_t r = 0; r < col.size(); ++r) {
    out.levels[r] = quantize_level(col[r], scales[r], qm);
    out.dequant[r] = out.levels[r] * scales[r];
  }
  return out;
}

QuantGrid::QuantGrid(GridParams params, std::size_t rows, std::size_t cols)
    : params_(std::move(params)), rows_(rows), cols_(cols) {
  params_.validate();
  if (cols == 0) throw ShapeError("quantization grid over zero columns");
  width_ = std::min(params_.group_size, cols);
  if (cols % width_ != 0)
    throw ShapeError("group_size " + std::to_string(width_) + " does not divide " +
                     std::to_string(cols) + " columns");
  scales_.resize(cols / width_);
}

QuantGrid::QuantGrid(GridParams params, std::size_t rows, std::size_t cols,
                     std::vector<std::size_t> column_order)
    : QuantGrid(std::move(params), rows, cols) {
  if (column_order.size() != cols) throw ShapeError("column order length differs from column count");
  order_ = std::move(column_order);
}

void QuantGrid::fit(std::size_t group, const Matrix& group_weights) {
  if (group_weights.rows() != rows_) throw ShapeError("group rows differ from grid rows");
  set_scales(group, fit_group_scales(group_weights, params_.bits, params_.clip_grid));
}

void QuantGrid::set_scales(std::size_t group, std::vector<double> scales) {
  auto& slot = scales_.at(group);
  if (slot) throw StateError("group " + std::to_string(group) + " already has frozen scales");
  if (scales.size() != rows_) throw ShapeError("scale count differs from grid rows");
  slot = std::move(scales);
}

std::span<const double> QuantGrid::scales(std::size_t group) const {
  const auto& slot = scales_.at(group);
  if (!slot) throw StateError("scales for group " + std::to_string(group) + " are not fitted");
  return *slot;
}

QuantizedColumn QuantGrid::quantize(std::size_t col, std::span<const double> values) const {
  return quantize_column(values, scales(group_of(col)), params_.bits);
}

}  // namespace caeq
