// caeq: quantize linear layers from a tensor bundle and report errors.
//
//   caeq gen --seed 42 --m 8 --n 16 --k 64 --noise_level 0.05 --output layer.qbnd
//   caeq run --bundle layer.qbnd --use_P1 --use_P2 --bits 3 --group_size 8
//   caeq compare --bundle layer.qbnd --bits 3 --group_size 8 --output report.json
//   caeq oracle-check --bundle layer.qbnd --bits 3 --group_size 8

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "caeq/bundle.hpp"
#include "caeq/report.hpp"

namespace {

namespace fs = std::filesystem;

void add_method_flags(CLI::App* cmd, caeq::RunConfig& cfg) {
  cmd->add_flag("--use_P1", cfg.use_P1, "asymmetric calibration term (GPTAQ)");
  cmd->add_flag("--use_P2", cfg.use_P2, "compensation-aware error term");
  cmd->add_option("--bits", cfg.bits, "weight bits")->check(CLI::Range(2, 16));
  cmd->add_option("--group_size", cfg.group_size, "columns per quantization group")->check(CLI::PositiveNumber);
  cmd->add_option("--block_size", cfg.block_size, "lazy-update block width")->check(CLI::PositiveNumber);
  cmd->add_flag("--act_order", cfg.act_order, "process columns by descending Hessian diagonal");
  cmd->add_option("--lambda_frac", cfg.lambda_frac, "damping as a fraction of mean diag(H)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--clip_grid", cfg.clip_grid, "clip ratios searched for each group scale")->delimiter(',');
  cmd->add_option("--workers", cfg.workers, "row workers (0 = hardware concurrency)");
  cmd->add_flag("--stack", cfg.stack, "treat the bundle's layers as one feed-forward stack");
  cmd->add_option("--activation", cfg.activation, "hidden-layer activation in stack mode")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, caeq::Activation>{{"identity", caeq::Activation::kIdentity},
                                                  {"relu", caeq::Activation::kRelu}},
          CLI::ignore_case));
}

// Writes to a sibling temp file and renames, so a failed run never leaves a
// partial report behind.
void emit(const nlohmann::json& report, const std::string& output) {
  const std::string text = report.dump(2) + "\n";
  if (output.empty()) {
    std::cout << text;
    return;
  }
  const fs::path target(output);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::vector<caeq::MethodSpec> parse_methods(const caeq::RunConfig& cfg, const std::vector<std::string>& names) {
  std::vector<caeq::MethodSpec> specs;
  for (const auto& name : names) {
    if (name == "gptq") specs.push_back(cfg.spec(false, false));
    else if (name == "gptaq") specs.push_back(cfg.spec(true, false));
    else if (name == "gptq+cae") specs.push_back(cfg.spec(false, true));
    else if (name == "gptaq+cae") specs.push_back(cfg.spec(true, true));
    else throw std::invalid_argument("unknown method '" + name + "'");
  }
  return specs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compensation-based post-training quantization of linear layers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", caeq::kLibraryVersion);

  caeq::RunConfig cfg;
  std::string bundle_path;

  std::size_t m = 8, n = 16, k = 64, layers = 1;
  double noise_level = 0.0;
  auto* gen = app.add_subcommand("gen", "write a seeded synthetic bundle");
  gen->add_option("--seed", cfg.seed);
  gen->add_option("--m", m)->check(CLI::PositiveNumber);
  gen->add_option("--n", n)->check(CLI::PositiveNumber);
  gen->add_option("--k", k)->check(CLI::PositiveNumber);
  gen->add_option("--noise_level", noise_level)->check(CLI::NonNegativeNumber);
  gen->add_option("--layers", layers, "layer count; layers after the first are m x m, for stack runs")
      ->check(CLI::PositiveNumber);
  gen->add_option("--output", cfg.output)->required();

  auto* run = app.add_subcommand("run", "quantize with one method");
  auto* compare = app.add_subcommand("compare", "quantize with several methods");
  auto* check = app.add_subcommand("oracle-check", "compare the engine against the brute-force oracle");
  std::vector<std::string> methods{"gptq", "gptaq", "gptq+cae", "gptaq+cae"};
  double tolerance = 1e-6;
  for (auto* cmd : {run, compare, check}) {
    cmd->add_option("--bundle", bundle_path)->required()->check(CLI::ExistingFile);
    cmd->add_option("--output", cfg.output, "report path (default: stdout)");
    cmd->add_option("--seed", cfg.seed, "recorded in the report");
    add_method_flags(cmd, cfg);
  }
  compare->add_option("--methods", methods, "gptq, gptaq, gptq+cae, gptaq+cae")->delimiter(',');
  check->add_option("--tolerance", tolerance)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      caeq::TensorBundle bundle = caeq::gen_synthetic(cfg.seed, m, n, k, noise_level);
      // Later layers are m x m weights; their inputs are recomputed in stack
      // mode, so X is a placeholder draw of the right shape.
      for (std::size_t l = 1; l < layers; ++l) {
        caeq::TensorBundle next = caeq::gen_synthetic(cfg.seed + l, m, m, k, 0.0);
        next.layers[0].x_fp.reset();
        bundle.layers.push_back(std::move(next.layers[0]));
      }
      caeq::save_bundle(bundle, cfg.output);
      std::cout << "wrote " << cfg.output << " checksum " << std::hex << caeq::bundle_checksum(bundle) << "\n";
      return 0;
    }
    const caeq::TensorBundle bundle = caeq::load_bundle(bundle_path);
    nlohmann::json report;
    if (*run) report = caeq::run_command(cfg, bundle);
    else if (*compare) report = caeq::compare_command(cfg, bundle, parse_methods(cfg, methods));
    else report = caeq::oracle_check_command(cfg, bundle, tolerance);
    emit(report, cfg.output);
    if (*check && !report["pass"].get<bool>()) return 3;
    return 0;
  } catch (const caeq::BundleError& e) {
    std::cerr << "bundle error (" << static_cast<int>(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
