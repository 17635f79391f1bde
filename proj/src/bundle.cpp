#include "caeq/bundle.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "json.hpp"

namespace caeq {

namespace {

using nlohmann::json;

constexpr std::size_t kMagicLen = sizeof(kBundleMagic) - 1;

const char* role_name(int role) {
  static constexpr const char* kNames[] = {"W", "X", "Xtilde"};
  return kNames[role];
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

void check_layer(const BundleLayer& l, std::size_t index) {
  const std::string where = "layer " + std::to_string(index) + ": ";
  if (l.w.rows() == 0 || l.w.cols() == 0) throw BundleError(BundleErrc::kShape, where + "empty W");
  if (l.x.rows() != l.w.cols()) throw BundleError(BundleErrc::kShape, where + "X rows differ from W columns");
  if (l.x.cols() == 0) throw BundleError(BundleErrc::kShape, where + "X has no samples");
  if (l.x_fp && (l.x_fp->rows() != l.x.rows() || l.x_fp->cols() != l.x.cols()))
    throw BundleError(BundleErrc::kShape, where + "Xtilde shape differs from X");
}

}  // namespace

void TensorBundle::validate() const {
  if (layers.empty()) throw BundleError(BundleErrc::kShape, "bundle has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) check_layer(layers[i], i);
}

std::vector<std::uint8_t> serialize_bundle(const TensorBundle& bundle) {
  bundle.validate();
  json entries = json::array();
  std::vector<const Matrix*> blocks;
  for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
    const BundleLayer& layer = bundle.layers[l];
    const Matrix* mats[] = {&layer.w, &layer.x, layer.x_fp ? &*layer.x_fp : nullptr};
    for (int role = 0; role < 3; ++role) {
      if (!mats[role]) continue;
      entries.push_back({{"layer", l}, {"role", role_name(role)}, {"rows", mats[role]->rows()},
                         {"cols", mats[role]->cols()}});
      blocks.push_back(mats[role]);
    }
  }
  const std::string manifest = json{{"tensors", entries}}.dump();

  std::vector<std::uint8_t> out(kBundleMagic, kBundleMagic + kMagicLen);
  put_u64(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (const Matrix* m : blocks)
    for (double v : m->data()) put_f32(out, static_cast<float>(v));
  return out;
}

TensorBundle parse_bundle(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kBundleMagic, kMagicLen) != 0)
    throw BundleError(BundleErrc::kBadMagic, "not a tensor bundle (bad magic)");
  std::size_t pos = kMagicLen;
  if (bytes.size() < pos + 8) throw BundleError(BundleErrc::kTruncated, "truncated before manifest length");
  std::uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) mlen |= std::uint64_t(bytes[pos + i]) << (8 * i);
  pos += 8;
  if (bytes.size() - pos < mlen) throw BundleError(BundleErrc::kTruncated, "truncated inside manifest");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + mlen));
  } catch (const json::exception& e) {
    throw BundleError(BundleErrc::kBadManifest, std::string("manifest is not valid JSON: ") + e.what());
  }
  pos += mlen;

  struct Entry {
    std::size_t layer;
    int role;
    std::size_t rows;
    std::size_t cols;
  };
  std::vector<Entry> entries;
  try {
    for (const auto& e : manifest.at("tensors")) {
      const std::string role = e.at("role").get<std::string>();
      int r = role == "W" ? 0 : role == "X" ? 1 : role == "Xtilde" ? 2 : -1;
      if (r < 0) throw BundleError(BundleErrc::kBadManifest, "unknown tensor role '" + role + "'");
      entries.push_back({e.at("layer").get<std::size_t>(), r, e.at("rows").get<std::size_t>(),
                         e.at("cols").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw BundleError(BundleErrc::kBadManifest, std::string("malformed manifest: ") + e.what());
  }

  std::size_t num_layers = 0;
  for (const Entry& e : entries) num_layers = std::max(num_layers, e.layer + 1);
  std::vector<std::optional<Matrix>> slots(num_layers * 3);

  for (const Entry& e : entries) {
    const std::size_t count = e.rows * e.cols;
    if (e.rows != 0 && count / e.rows != e.cols) throw BundleError(BundleErrc::kBadManifest, "tensor too large");
    if ((bytes.size() - pos) / 4 < count) throw BundleError(BundleErrc::kTruncated, "truncated tensor payload");
    std::vector<double> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = get_f32(bytes.data() + pos + 4 * i);
    pos += 4 * count;
    auto& slot = slots[e.layer * 3 + std::size_t(e.role)];
    if (slot)
      throw BundleError(BundleErrc::kBadManifest, "duplicate " + std::string(role_name(e.role)) + " for layer " +
                                                      std::to_string(e.layer));
    try {
      slot = Matrix(e.rows, e.cols, std::move(data));
    } catch (const std::domain_error&) {
      throw BundleError(BundleErrc::kBadManifest, "tensor contains a non-finite value");
    }
  }
  if (pos != bytes.size()) throw BundleError(BundleErrc::kBadManifest, "trailing bytes after payload");

  TensorBundle bundle;
  for (std::size_t l = 0; l < num_layers; ++l) {
    if (!slots[l * 3] || !slots[l * 3 + 1])
      throw BundleError(BundleErrc::kShape, "layer " + std::to_string(l) + " lacks W or X");
    bundle.layers.push_back({std::move(*slots[l * 3]), std::move(*slots[l * 3 + 1]), std::move(slots[l * 3 + 2])});
  }
  bundle.validate();
  return bundle;
}

void save_bundle(const TensorBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize_bundle(bundle);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw BundleError(BundleErrc::kIo, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw BundleError(BundleErrc::kIo, "write failed for " + path.string());
}

TensorBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw BundleError(BundleErrc::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_bundle(bytes);
}

NormalStream::NormalStream(std::uint64_t seed) : rng_(seed) {}

double NormalStream::next() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  // 53-bit uniforms in (0, 1]; u1 > 0 keeps the log finite.
  constexpr double kScale = 1.0 / 9007199254740992.0;
  const double u1 = double((rng_() >> 11) + 1) * kScale;
  const double u2 = double(rng_() >> 11) * kScale;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

Matrix NormalStream::matrix(std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * next();
  return m;
}

TensorBundle gen_synthetic(std::uint64_t seed, std::size_t m, std::size_t n, std::size_t k, double noise_level) {
  if (m == 0 || n == 0 || k == 0) throw std::invalid_argument("synthetic dimensions must be positive");
  NormalStream rng(seed);
  auto to_f32 = [](Matrix mat) {
    for (double& v : mat.data()) v = static_cast<float>(v);
    return mat;
  };
  Matrix w = to_f32(rng.matrix(m, n));
  Matrix x = to_f32(rng.matrix(n, k));
  Matrix noise = rng.matrix(n, k, noise_level);
  Matrix x_fp = to_f32(x + noise);
  return TensorBundle{{BundleLayer{std::move(w), std::move(x), std::move(x_fp)}}};
}

std::uint64_t bundle_checksum(const TensorBundle& bundle) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : serialize_bundle(bundle)) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace caeq
