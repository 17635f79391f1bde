#pragma once

// Tensor bundle file:
//
//   "QBND1"                       5 bytes, ASCII
//   manifest length               u64, little-endian
//   manifest                      UTF-8 JSON:
//     {"tensors": [{"layer": 0, "role": "W", "rows": m, "cols": n}, ...]}
//   payload                       one block per manifest entry, in order:
//                                 rows*cols float32 little-endian, row-major
//
// Roles are "W", "X" and "Xtilde". Every layer needs W and X; a layer without
// Xtilde uses X for both flows.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "caeq/linalg.hpp"
#include "caeq/problem.hpp"

namespace caeq {

enum class BundleErrc {
  kIo = 1,
  kBadMagic,
  kTruncated,
  kBadManifest,
  kShape,
};

class BundleError : public std::runtime_error {
 public:
  BundleError(BundleErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  BundleErrc code() const noexcept { return code_; }

 private:
  BundleErrc code_;
};

struct BundleLayer {
  Matrix w;
  Matrix x;
  std::optional<Matrix> x_fp;

  LayerProblem problem() const { return {w, x, x_fp ? *x_fp : x}; }

  friend bool operator==(const BundleLayer&, const BundleLayer&) = default;
};

struct TensorBundle {
  std::vector<BundleLayer> layers;

  /// Checks every layer's shapes; BundleError(kShape) on failure.
  void validate() const;

  friend bool operator==(const TensorBundle&, const TensorBundle&) = default;
};

inline constexpr char kBundleMagic[] = "QBND1";

std::vector<std::uint8_t> serialize_bundle(const TensorBundle& bundle);
TensorBundle parse_bundle(const std::vector<std::uint8_t>& bytes);

void save_bundle(const TensorBundle& bundle, const std::filesystem::path& path);
TensorBundle load_bundle(const std::filesystem::path& path);

/// Single-layer bundle: W (m x n) and X (n x k) standard normal,
/// Xtilde = X + noise_level * standard normal. Values are rounded to float32
/// so the in-memory bundle equals its reloaded file. Deterministic per seed on
/// every platform.
TensorBundle gen_synthetic(std::uint64_t seed, std::size_t m, std::size_t n, std::size_t k, double noise_level);

/// FNV-1a over the serialized bytes.
std::uint64_t bundle_checksum(const TensorBundle& bundle);

/// Seeded standard normal stream: Box-Muller over mt19937_64, so the sequence
/// does not depend on the library's std::normal_distribution.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed);
  double next();
  Matrix matrix(std::size_t rows, std::size_t cols, double scale = 1.0);

 private:
  std::mt19937_64 rng_;
  std::optional<double> spare_;
};

}  // namespace caeq
