#include "caeq/flows.hpp"

#include <algorithm>
#include <cmath>

namespace caeq {

void LayerStack::validate() const {
  if (weights.empty()) throw ShapeError("layer stack is empty");
  if (activations.size() != weights.size()) throw ShapeError("one activation per layer required");
  for (std::size_t l = 0; l + 1 < weights.size(); ++l)
    if (weights[l].rows() != weights[l + 1].cols())
      throw ShapeError("layer " + std::to_string(l) + " output width does not feed layer " + std::to_string(l + 1));
}

Matrix forward(const Matrix& w, const Matrix& x, Activation act) {
  Matrix y = matmul(w, x);
  if (act == Activation::kRelu)
    for (double& v : y.data()) v = std::max(v, 0.0);
  return y;
}

FlowTrace propagate(const LayerStack& stack, const Matrix& input, const std::vector<std::optional<Matrix>>& quantized,
                    const std::optional<Matrix>& quant_input) {
  stack.validate();
  if (input.rows() != stack.weights.front().cols()) throw ShapeError("input width differs from the first layer");
  if (!quantized.empty() && quantized.size() != stack.depth())
    throw ShapeError("quantized weights must cover every layer or none");
  if (quant_input && (quant_input->rows() != input.rows() || quant_input->cols() != input.cols()))
    throw ShapeError("quant-flow input shape differs from input");

  FlowTrace trace;
  trace.quant.push_back(quant_input ? *quant_input : input);
  trace.fp.push_back(input);
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    const Matrix& w = stack.weights[l];
    const bool has_q = !quantized.empty() && quantized[l].has_value();
    if (has_q && (quantized[l]->rows() != w.rows() || quantized[l]->cols() != w.cols()))
      throw ShapeError("quantized layer " + std::to_string(l) + " shape differs from the original");
    trace.fp.push_back(forward(w, trace.fp.back(), stack.activations[l]));
    trace.quant.push_back(forward(has_q ? *quantized[l] : w, trace.quant.back(), stack.activations[l]));
  }
  for (std::size_t l = 0; l < trace.fp.size(); ++l)
    trace.divergence.push_back(std::sqrt(frobenius_sq(trace.quant[l] - trace.fp[l])));
  return trace;
}

StackResult quantize_stack(const LayerStack& stack, const Matrix& calibration_input, const MethodSpec& spec,
                           const std::optional<Matrix>& quant_input, const RunOptions& options) {
  stack.validate();
  if (calibration_input.rows() != stack.weights.front().cols())
    throw ShapeError("calibration input width differs from the first layer");

  StackResult out;
  Matrix x = quant_input ? *quant_input : calibration_input;
  Matrix x_fp = calibration_input;
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    const Matrix& w = stack.weights[l];
    LayerResult res = run_layer(LayerProblem{w, x, x_fp}, spec, options);
    x = forward(res.q, x, stack.activations[l]);
    x_fp = forward(w, x_fp, stack.activations[l]);
    out.quantized.push_back(std::move(res.q));
    out.reports.push_back(res.report);
  }
  return out;
}

}  // namespace caeq
