#pragma once

// A ground-truth stand-in for generator + assessor. Latents are standard
// normal (optionally truncated per component) and their score is
// sigmoid(v.x + bias) + N(0, sigma^2), clipped to [0, 1]. Because v is known,
// direction recovery and edit monotonicity can be checked directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "memedit/dataset.hpp"
#include "memedit/error.hpp"
#include "memedit/hyperplane_fit.hpp"
#include "memedit/matrix.hpp"
#include "memedit/rng.hpp"

namespace memedit {

namespace stream_tag {
inline constexpr std::uint64_t direction = 1;
inline constexpr std::uint64_t sampling = 2;
inline constexpr std::uint64_t noise = 3;
}  // namespace stream_tag

struct SyntheticWorld {
  std::size_t dim = 0;
  std::vector<double> true_direction;
  double true_bias = 0.0;
  double noise_sigma = 0.0;
  std::optional<double> truncation_psi;
  std::uint64_t seed = 0;
  std::optional<LayerStructure> layer_structure;
  std::optional<std::size_t> sparse_layer;  // v supported on this layer block only
};

struct SamplerConfig {
  SamplerConfig() = default;
  SamplerConfig(std::size_t n_, std::optional<double> psi = std::nullopt,
                std::uint64_t stream_ = 0)
      : n(n_), truncation_psi(psi), stream(stream_) {}

  std::size_t n = 0;
  std::optional<double> truncation_psi;  // falls back to the world's psi
  std::uint64_t stream = 0;              // independent draws from one world

  void validate() const {
    require(n >= 1, "sampler: n must be >= 1");
    if (truncation_psi) require(*truncation_psi > 0.0, "sampler: psi must be positive");
  }
};

inline SyntheticWorld make_world(std::size_t dim, std::uint64_t seed, double noise_sigma,
                                 std::optional<double> truncation_psi = std::nullopt,
                                 std::optional<LayerStructure> layer_structure = std::nullopt,
                                 std::optional<std::size_t> sparse_layer = std::nullopt) {
  require(dim >= 2, "make_world: dim must be >= 2, got " + std::to_string(dim));
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "make_world: sigma must be >= 0");
  if (truncation_psi) require(*truncation_psi > 0.0, "make_world: psi must be positive");
  if (layer_structure)
    require(layer_structure->dim() == dim, "make_world: layer structure " +
                                               layer_structure->to_string() +
                                               " does not match dim " + std::to_string(dim));
  if (sparse_layer) {
    require(layer_structure.has_value(), "make_world: sparse layer needs a layer structure");
    require(*sparse_layer < layer_structure->layers, "make_world: sparse layer out of range");
    require(layer_structure->per_layer_dim >= 1, "make_world: empty layer");
  }

  SyntheticWorld w;
  w.dim = dim;
  w.noise_sigma = noise_sigma;
  w.truncation_psi = truncation_psi;
  w.seed = seed;
  w.layer_structure = layer_structure;
  w.sparse_layer = sparse_layer;

  std::size_t lo = 0, hi = dim;
  if (sparse_layer) {
    lo = *sparse_layer * layer_structure->per_layer_dim;
    hi = lo + layer_structure->per_layer_dim;
  }
  Xoshiro256 rng(derive_seed(seed, stream_tag::direction));
  std::vector<double> v(dim, 0.0);
  for (std::size_t j = lo; j < hi; ++j) v[j] = rng.normal();
  w.true_direction = normalized(v);
  return w;
}

/// Row-major n x dim draws; a component with |value| > psi is redrawn.
inline Matrix sample_latents(const SyntheticWorld& world, const SamplerConfig& config) {
  config.validate();
  const auto psi = config.truncation_psi ? config.truncation_psi : world.truncation_psi;
  Xoshiro256 rng(derive_seed(derive_seed(world.seed, stream_tag::sampling), config.stream));
  Matrix x(config.n, world.dim);
  for (double& v : x.data()) {
    v = rng.normal();
    if (psi)
      while (std::abs(v) > *psi) v = rng.normal();
  }
  return x;
}

inline double noiseless_score(const SyntheticWorld& world, std::span<const double> x) {
  return detail::sigmoid(dot(world.true_direction, x) + world.true_bias);
}

/// Noise for row i comes from one stream per (world, noise_stream), consumed
/// in row order.
inline std::vector<double> score(const SyntheticWorld& world, const Matrix& x,
                                 bool noiseless = false, std::uint64_t noise_stream = 0) {
  require(x.cols() == world.dim, "score: latent dim " + std::to_string(x.cols()) +
                                     " vs world dim " + std::to_string(world.dim));
  std::vector<double> out(x.rows());
  Xoshiro256 rng(derive_seed(derive_seed(world.seed, stream_tag::noise), noise_stream));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = noiseless_score(world, x.row(i));
    if (!noiseless && world.noise_sigma > 0.0) s += world.noise_sigma * rng.normal();
    out[i] = std::clamp(s, 0.0, 1.0);
  }
  return out;
}

/// Lossy plain-space view of extended latents: the per-column mean of the L
/// layer rows, giving an n x D matrix.
inline Matrix collapse_layers(const Matrix& w, const LayerStructure& ls) {
  require(w.cols() == ls.dim(), "collapse_layers: dim mismatch");
  Matrix z(w.rows(), ls.per_layer_dim);
  const double inv = 1.0 / static_cast<double>(ls.layers);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto src = w.row(i);
    auto dst = z.row(i);
    for (std::size_t l = 0; l < ls.layers; ++l)
      for (std::size_t j = 0; j < ls.per_layer_dim; ++j)
        dst[j] += src[l * ls.per_layer_dim + j];
    for (double& v : dst) v *= inv;
  }
  return z;
}

/// The true direction as an edit-ready hyperplane.
inline Hyperplane true_hyperplane(const SyntheticWorld& world) {
  Hyperplane h;
  h.normal = world.true_direction;
  h.bias = world.true_bias;
  h.layer_structure = world.layer_structure;
  h.space_tag = world.layer_structure ? "w+" : "z";
  return h;
}

inline nlohmann::json to_json(const SyntheticWorld& w) {
  nlohmann::json j = {{"dim", w.dim},
                      {"seed", w.seed},
                      {"true_bias", w.true_bias},
                      {"noise_sigma", w.noise_sigma},
                      {"truncation_psi", nullptr},
                      {"layer_structure", nullptr},
                      {"sparse_layer", nullptr},
                      {"true_direction", w.true_direction}};
  if (w.truncation_psi) j["truncation_psi"] = *w.truncation_psi;
  if (w.layer_structure) j["layer_structure"] = w.layer_structure->to_string();
  if (w.sparse_layer) j["sparse_layer"] = *w.sparse_layer;
  return j;
}

inline SyntheticWorld world_from_json(const nlohmann::json& j) {
  SyntheticWorld w;
  try {
    w.dim = j.at("dim").get<std::size_t>();
    w.seed = j.at("seed").get<std::uint64_t>();
    w.true_bias = j.at("true_bias").get<double>();
    w.noise_sigma = j.at("noise_sigma").get<double>();
    if (!j.at("truncation_psi").is_null()) w.truncation_psi = j["truncation_psi"].get<double>();
    if (!j.at("layer_structure").is_null())
      w.layer_structure = parse_layer_structure(j["layer_structure"].get<std::string>());
    if (!j.at("sparse_layer").is_null()) w.sparse_layer = j["sparse_layer"].get<std::size_t>();
    w.true_direction = j.at("true_direction").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("world JSON: ") + e.what());
  }
  require(w.true_direction.size() == w.dim, "world JSON: direction length != dim");
  double sq = 0.0;
  for (double v : w.true_direction) sq += v * v;
  require(std::abs(std::sqrt(sq) - 1.0) <= 1e-9, "world JSON: direction is not unit length");
  return w;
}

inline void save_world(const SyntheticWorld& w, const std::string& path) {
  detail::write_file(path, to_json(w).dump(2) + "\n");
}

inline SyntheticWorld load_world(const std::string& path) {
  try {
    return world_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, "'" + path + "': " + e.what());
  }
}

}  // namespace memedit
