#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caeq/bundle.hpp"
#include "caeq/engine.hpp"
#include "caeq/flows.hpp"
#include "json.hpp"

namespace caeq {

inline constexpr int kReportSchema = 1;
inline constexpr const char* kLibraryVersion = "0.1.0";

/// Knobs shared by every CLI verb. Field names are the CLI flag names.
struct RunConfig {
  bool use_P1 = false;
  bool use_P2 = false;
  int bits = 4;
  std::size_t group_size = 128;
  std::size_t block_size = 128;
  bool act_order = false;
  double lambda_frac = 0.01;
  std::vector<double> clip_grid = kDefaultClipGrid;
  std::uint64_t seed = 0;
  std::string output;
  std::size_t workers = 0;
  /// Quantize the bundle's layers as one feed-forward stack instead of as
  /// independent layers.
  bool stack = false;
  Activation activation = Activation::kIdentity;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
  MethodSpec spec() const;
  MethodSpec spec(bool p1, bool p2) const;
  nlohmann::json to_json() const;
};

/// Runs one method over every layer of the bundle.
nlohmann::json run_method(const RunConfig& config, const MethodSpec& spec, const TensorBundle& bundle);

/// The `run` report: one method, from config.use_P1 / use_P2.
nlohmann::json run_command(const RunConfig& config, const TensorBundle& bundle);

/// The `compare` report: every listed method on the same bundle, plus the
/// methods ordered by their summed asymmetric error.
nlohmann::json compare_command(const RunConfig& config, const TensorBundle& bundle,
                               const std::vector<MethodSpec>& specs);

/// Engine-vs-greedy-oracle agreement for every layer (width <= 64) and every
/// method. "pass" is true when all relative differences are within `tolerance`.
nlohmann::json oracle_check_command(const RunConfig& config, const TensorBundle& bundle, double tolerance = 1e-6);

/// Error raised while processing one layer; carries its index.
class LayerError : public std::runtime_error {
 public:
  LayerError(std::size_t layer, const std::string& what)
      : std::runtime_error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

}  // namespace caeq
