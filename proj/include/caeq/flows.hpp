#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "caeq/engine.hpp"
#include "caeq/linalg.hpp"

namespace caeq {

enum class Activation { kIdentity, kRelu };

/// Feed-forward stack of linear layers; layer l maps width cols(W_l) to
/// rows(W_l), then applies its activation elementwise.
struct LayerStack {
  std::vector<Matrix> weights;
  std::vector<Activation> activations;

  std::size_t depth() const noexcept { return weights.size(); }
  /// Throws ShapeError on an empty stack, mismatched adjacent widths or a
  /// missing activation.
  void validate() const;
};

/// Activations of both flows at each layer input, plus the output of the last
/// layer at index depth().
struct FlowTrace {
  std::vector<Matrix> quant;  ///< Quant-flow X^l
  std::vector<Matrix> fp;     ///< FP-flow X~^l
  std::vector<double> divergence;  ///< ||X^l - X~^l||_F
};

/// One layer: act(W x).
Matrix forward(const Matrix& w, const Matrix& x, Activation act);

/// FP-flow through the original weights; Quant-flow through `quantized`
/// where provided (else the original weights). `quant_input` overrides the
/// Quant-flow input at layer 0 (defaults to `input`).
FlowTrace propagate(const LayerStack& stack, const Matrix& input,
                    const std::vector<std::optional<Matrix>>& quantized = {},
                    const std::optional<Matrix>& quant_input = std::nullopt);

struct StackResult {
  std::vector<Matrix> quantized;
  std::vector<LayerReport> reports;
};

/// Quantizes layers in order. Layer l is calibrated with X = Quant-flow
/// activation through the already-quantized layers and X~ = FP-flow
/// activation through the original ones.
StackResult quantize_stack(const LayerStack& stack, const Matrix& calibration_input, const MethodSpec& spec,
                           const std::optional<Matrix>& quant_input = std::nullopt,
                           const RunOptions& options = {});

}  // namespace caeq
