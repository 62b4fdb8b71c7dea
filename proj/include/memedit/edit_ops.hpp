#pragma once

// Latent editing along a hyperplane normal: x + alpha * n moves the Eq. 1
// distance n.x by exactly alpha when |n| = 1.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "memedit/dataset.hpp"
#include "memedit/error.hpp"
#include "memedit/hyperplane_fit.hpp"
#include "memedit/matrix.hpp"

namespace memedit {

inline constexpr double kDependenceTolerance = 1e-8;

namespace detail {

inline void check_unit(const Hyperplane& h) {
  double sq = 0.0;
  for (double v : h.normal) sq += v * v;
  require(std::abs(std::sqrt(sq) - 1.0) <= kUnitNormTolerance,
          "edit: hyperplane normal is not unit length");
}

}  // namespace detail

inline std::vector<double> edit(std::span<const double> x, const Hyperplane& h,
                                double alpha) {
  require(x.size() == h.dim(), "edit: latent dim " + std::to_string(x.size()) +
                                   " vs hyperplane dim " + std::to_string(h.dim()));
  detail::check_unit(h);
  std::vector<double> out(x.begin(), x.end());
  if (alpha == 0.0) return out;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += alpha * h.normal[j];
  return out;
}

/// Modified Gram-Schmidt; vectors whose residual norm drops below 1e-8 are
/// skipped as linearly dependent on the ones before them.
inline std::vector<std::vector<double>> orthonormalize(
    std::span<const std::vector<double>> vectors) {
  std::vector<std::vector<double>> basis;
  for (const auto& v : vectors) {
    std::vector<double> r = v;
    for (const auto& q : basis) {
      const double c = dot(q, r);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] -= c * q[j];
    }
    const double nr = norm2(r);
    if (nr < kDependenceTolerance) continue;
    for (double& x : r) x /= nr;
    basis.push_back(std::move(r));
  }
  return basis;
}

/// Removes the components of the normal that lie in span(attrs) and
/// renormalizes. The result keeps attrs' projections fixed under edit().
inline Hyperplane condition_direction(const Hyperplane& h,
                                      std::span<const std::vector<double>> attrs) {
  const std::size_t d = h.dim();
  require(!attrs.empty(), "condition: attribute list is empty");
  require(attrs.size() < d, "condition: need fewer attribute directions than dimensions");
  for (const auto& a : attrs)
    require(a.size() == d, "condition: attribute dim " + std::to_string(a.size()) +
                               " vs hyperplane dim " + std::to_string(d));
  const auto basis = orthonormalize(attrs);
  require(!basis.empty(), "condition: all attribute directions are zero");

  std::vector<double> n = h.normal;
  for (const auto& q : basis) {
    const double c = dot(q, n);
    for (std::size_t j = 0; j < d; ++j) n[j] -= c * q[j];
  }
  if (norm2(n) < kDependenceTolerance)
    fail(ErrorKind::degenerate,
         "condition: normal lies inside the attribute subspace; nothing left to edit");

  Hyperplane out = h;
  out.normal = normalized(n);
  out.bias = 0.0;
  out.meta["conditioned_on"] = std::to_string(basis.size());
  out.meta["bias_note"] = "reset to 0 after conditioning; use for editing only";
  return out;
}

/// Adds alpha * normal[l*D:(l+1)*D] to each selected row l of an L x D latent.
inline Matrix layerwise_edit(const Matrix& w, const Hyperplane& h, double alpha,
                             const std::set<std::size_t>& layers) {
  require(w.ndim() == 2, "layerwise_edit: latent must be an L x D matrix");
  const std::size_t L = w.rows(), D = w.cols();
  require(h.dim() == L * D, "layerwise_edit: hyperplane dim " + std::to_string(h.dim()) +
                                " vs latent " + std::to_string(L) + "x" + std::to_string(D));
  detail::check_unit(h);
  for (auto l : layers)
    require(l < L, "layerwise_edit: layer " + std::to_string(l) + " out of range [0, " +
                       std::to_string(L) + ")");
  Matrix out = w;
  for (auto l : layers) {
    auto row = out.row(l);
    for (std::size_t j = 0; j < D; ++j) row[j] += alpha * h.normal[l * D + j];
  }
  return out;
}

struct EditSpec {
  double alpha = 0.0;
  std::optional<std::set<std::size_t>> layer_mask;
  std::optional<LayerStructure> layer_structure;  // needed with layer_mask
  std::vector<std::vector<double>> conditions;
};

struct EditTrajectory {
  std::vector<double> alphas;
  std::vector<std::vector<double>> latents;
};

namespace detail {

/// Direction actually used by an EditSpec: conditions applied once.
inline Hyperplane resolve_direction(const Hyperplane& h, const EditSpec& spec) {
  if (spec.conditions.empty()) return h;
  return condition_direction(h, spec.conditions);
}

inline std::vector<double> apply_resolved(std::span<const double> x, const Hyperplane& dir,
                                          double alpha, const EditSpec& spec) {
  if (!spec.layer_mask) return edit(x, dir, alpha);
  const auto ls = spec.layer_structure ? spec.layer_structure : dir.layer_structure;
  require(ls.has_value(), "edit: a layer mask needs a layer structure");
  require(ls->dim() == x.size(), "edit: layer structure " + ls->to_string() +
                                     " does not match latent dim " + std::to_string(x.size()));
  Matrix w({ls->layers, ls->per_layer_dim}, std::vector<double>(x.begin(), x.end()));
  auto out = layerwise_edit(w, dir, alpha, *spec.layer_mask);
  return {out.data().begin(), out.data().end()};
}

}  // namespace detail

/// Single edit honoring the spec's mask and conditions.
inline std::vector<double> apply_edit(std::span<const double> x, const Hyperplane& h,
                                      const EditSpec& spec) {
  return detail::apply_resolved(x, detail::resolve_direction(h, spec), spec.alpha, spec);
}

inline EditTrajectory sweep(std::span<const double> x, const Hyperplane& h,
                            std::span<const double> alphas, const EditSpec& spec = {}) {
  require(!alphas.empty(), "sweep: alpha list is empty");
  const Hyperplane dir = detail::resolve_direction(h, spec);
  EditTrajectory t;
  t.alphas.assign(alphas.begin(), alphas.end());
  t.latents.reserve(alphas.size());
  for (double a : alphas) t.latents.push_back(detail::apply_resolved(x, dir, a, spec));
  return t;
}

}  // namespace memedit
