#include "caeq/report.hpp"

#include <algorithm>
#include <cmath>

#include "caeq/oracle.hpp"

namespace caeq {

using nlohmann::json;

void RunConfig::validate() const {
  if (bits < 2 || bits > 16) throw std::invalid_argument("bits must be in [2, 16]");
  if (group_size == 0) throw std::invalid_argument("group_size must be positive");
  if (block_size == 0) throw std::invalid_argument("block_size must be positive");
  spec().validate();
}

MethodSpec RunConfig::spec() const { return spec(use_P1, use_P2); }

MethodSpec RunConfig::spec(bool p1, bool p2) const {
  MethodSpec s;
  s.use_p1 = p1;
  s.use_p2 = p2;
  s.block_size = block_size;
  s.act_order = act_order;
  s.lambda_frac = lambda_frac;
  s.grid = GridParams{bits, group_size, clip_grid};
  s.workers = workers;
  return s;
}

json RunConfig::to_json() const {
  return {{"use_P1", use_P1},
          {"use_P2", use_P2},
          {"bits", bits},
          {"group_size", group_size},
          {"block_size", block_size},
          {"act_order", act_order},
          {"lambda_frac", lambda_frac},
          {"clip_grid", clip_grid},
          {"seed", seed},
          {"stack", stack},
          {"activation", activation == Activation::kRelu ? "relu" : "identity"}};
}

namespace {

json layer_json(std::size_t index, const LayerReport& r) {
  return {{"layer", index},
          {"sym_err", r.sym_err},
          {"asym_err", r.asym_err},
          {"rtn_sym_err", r.rtn_sym_err},
          {"rtn_asym_err", r.rtn_asym_err},
          {"signal", r.signal},
          {"wall_time_ms", {{"calibrate", r.calibrate_ms}, {"quantize", r.quantize_ms}, {"total", r.total_ms}}}};
}

LayerStack stack_from(const TensorBundle& bundle, Activation act) {
  LayerStack stack;
  for (const auto& l : bundle.layers) {
    stack.weights.push_back(l.w);
    stack.activations.push_back(act);
  }
  // Hidden layers use the chosen activation; the last layer stays linear.
  stack.activations.back() = Activation::kIdentity;
  return stack;
}

}  // namespace

json run_method(const RunConfig& config, const MethodSpec& spec, const TensorBundle& bundle) {
  bundle.validate();
  std::vector<LayerReport> reports;
  if (config.stack) {
    const LayerStack stack = stack_from(bundle, config.activation);
    const BundleLayer& first = bundle.layers.front();
    try {
      StackResult res = quantize_stack(stack, first.x_fp ? *first.x_fp : first.x, spec, first.x);
      reports = std::move(res.reports);
    } catch (const ShapeError& e) {
      throw LayerError(0, std::string("stack: ") + e.what());
    }
  } else {
    for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
      try {
        reports.push_back(run_layer(bundle.layers[l].problem(), spec).report);
      } catch (const std::exception& e) {
        throw LayerError(l, e.what());
      }
    }
  }

  json layers = json::array();
  double sym = 0.0;
  double asym = 0.0;
  for (std::size_t l = 0; l < reports.size(); ++l) {
    layers.push_back(layer_json(l, reports[l]));
    sym += reports[l].sym_err;
    asym += reports[l].asym_err;
  }
  return {{"method", spec.name()},
          {"use_P1", spec.use_p1},
          {"use_P2", spec.use_p2},
          {"layers", layers},
          {"total_sym_err", sym},
          {"total_asym_err", asym},
          {"final_asym_err", reports.back().asym_err}};
}

json run_command(const RunConfig& config, const TensorBundle& bundle) {
  config.validate();
  return {{"schema", kReportSchema},
          {"library_version", kLibraryVersion},
          {"command", "run"},
          {"config", config.to_json()},
          {"methods", json::array({run_method(config, config.spec(), bundle)})}};
}

json compare_command(const RunConfig& config, const TensorBundle& bundle, const std::vector<MethodSpec>& specs) {
  config.validate();
  if (specs.empty()) throw std::invalid_argument("compare needs at least one method");
  json methods = json::array();
  std::vector<std::pair<double, std::string>> order;
  for (const MethodSpec& s : specs) {
    json m = run_method(config, s, bundle);
    order.emplace_back(m["total_asym_err"].get<double>(), s.name());
    methods.push_back(std::move(m));
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  json ordering = json::array();
  for (const auto& [err, name] : order) ordering.push_back(name);
  return {{"schema", kReportSchema},
          {"library_version", kLibraryVersion},
          {"command", "compare"},
          {"config", config.to_json()},
          {"methods", methods},
          {"ordering_by_asym_err", ordering}};
}

json oracle_check_command(const RunConfig& config, const TensorBundle& bundle, double tolerance) {
  config.validate();
  bundle.validate();
  json checks = json::array();
  bool pass = true;
  for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
    const LayerProblem problem = bundle.layers[l].problem();
    if (problem.n() > oracle::kGreedyMaxWidth) {
      checks.push_back({{"layer", l}, {"skipped", "width exceeds the oracle size guard"}});
      continue;
    }
    for (const auto& [p1, p2] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
      const MethodSpec spec = config.spec(p1, p2);
      Matrix engine_q;
      Matrix oracle_q;
      try {
        engine_q = run_layer(problem, spec, {.with_baseline = false}).q;
        oracle_q = oracle::greedy_oracle_run(problem, spec);
      } catch (const std::exception& e) {
        throw LayerError(l, e.what());
      }
      const double rel = relative_diff(engine_q, oracle_q, 1e-300);
      const bool ok = rel <= tolerance;
      pass = pass && ok;
      checks.push_back({{"layer", l}, {"method", spec.name()}, {"relative_diff", rel}, {"pass", ok}});
    }
  }
  return {{"schema", kReportSchema},
          {"library_version", kLibraryVersion},
          {"command", "oracle-check"},
          {"config", config.to_json()},
          {"tolerance", tolerance},
          {"checks", checks},
          {"pass", pass}};
}

}  // namespace caeq
