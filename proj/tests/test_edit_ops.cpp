#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <numeric>

#include "memedit/edit_ops.hpp"
#include "memedit/rng.hpp"

using namespace memedit;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected memedit::Error";
  return ErrorKind::io;
}

std::vector<double> random_vector(Xoshiro256& rng, std::size_t d, double scale = 1.0) {
  std::vector<double> v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

Hyperplane random_unit(Xoshiro256& rng, std::size_t d) {
  Hyperplane h;
  h.normal = normalized(random_vector(rng, d));
  return h;
}

/// Reference dot product accumulated back to front.
double dot_reversed(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t j = a.size(); j-- > 0;) s += a[j] * b[j];
  return s;
}

}  // namespace

TEST(Edit, ZeroAlphaIsBitwiseIdentity) {
  Xoshiro256 rng(1);
  const auto x = random_vector(rng, 512);
  const auto h = random_unit(rng, 512);
  const auto y = edit(x, h, 0.0);
  for (std::size_t j = 0; j < x.size(); ++j)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(y[j]), std::bit_cast<std::uint64_t>(x[j]));
}

TEST(Edit, MovesOriginAlongAxis) {
  Hyperplane h;
  h.normal = {1, 0, 0};
  EXPECT_EQ(direction_score(h, edit(std::vector<double>(3, 0.0), h, 2.0)), 2.0);
}

TEST(Edit, ScoreShiftEqualsAlpha) {
  Xoshiro256 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto x = random_vector(rng, 512);
    const auto h = random_unit(rng, 512);
    const auto y = edit(x, h, 1.7);
    EXPECT_NEAR(dot_reversed(h.normal, y) - dot_reversed(h.normal, x), 1.7, 1e-6);
    EXPECT_NEAR(direction_score(h, y) - direction_score(h, x) - 1.7, 0.0, 1e-10);
  }
}

TEST(Edit, ComposesAdditively) {
  Xoshiro256 rng(3);
  const auto x = random_vector(rng, 64);
  const auto h = random_unit(rng, 64);
  const auto twice = edit(edit(x, h, 0.75), h, -2.5);
  const auto once = edit(x, h, -1.75);
  for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(twice[j], once[j], 1e-12);
}

TEST(Edit, Errors) {
  Hyperplane h;
  h.normal = {1, 0, 0};
  EXPECT_EQ(kind_of([&] { edit(std::vector<double>{1, 2}, h, 1.0); }), ErrorKind::validation);
  h.normal = {1, 1, 0};
  EXPECT_EQ(kind_of([&] { edit(std::vector<double>{1, 2, 3}, h, 1.0); }),
            ErrorKind::validation);
}

TEST(Orthonormalize, DropsDependentVectors) {
  const std::vector<std::vector<double>> v{{1, 0, 0}, {2, 0, 0}, {1, 1, 0}, {0, 0, 0}};
  const auto q = orthonormalize(v);
  ASSERT_EQ(q.size(), 2u);
  EXPECT_NEAR(dot(q[0], q[1]), 0.0, 1e-15);
  EXPECT_EQ(q[1], (std::vector<double>{0, 1, 0}));
}

TEST(ConditionDirection, HandProjection) {
  Hyperplane h;
  const double r = 1.0 / std::sqrt(2.0);
  h.normal = {r, r, 0};
  h.bias = 0.4;
  const std::vector<std::vector<double>> attrs{{0, 1, 0}};
  const auto c = condition_direction(h, attrs);
  EXPECT_EQ(c.normal, (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(c.bias, 0.0);
  EXPECT_EQ(c.meta.at("conditioned_on"), "1");
}

TEST(ConditionDirection, OrthogonalToRandomOrthonormalAttributes) {
  Xoshiro256 rng(4);
  std::vector<std::vector<double>> raw;
  for (int i = 0; i < 3; ++i) raw.push_back(random_vector(rng, 512));
  const auto attrs = orthonormalize(raw);
  const auto c = condition_direction(random_unit(rng, 512), attrs);
  for (const auto& a : attrs) EXPECT_LE(std::abs(dot(c.normal, a)), 1e-6);
  EXPECT_NEAR(norm2(c.normal), 1.0, 1e-12);
}

TEST(ConditionDirection, NonOrthonormalAttributesAreOrthonormalizedFirst) {
  Xoshiro256 rng(5);
  std::vector<std::vector<double>> attrs{random_vector(rng, 32, 3.0), random_vector(rng, 32)};
  attrs.push_back(attrs[0]);  // exact duplicate is dropped
  for (std::size_t j = 0; j < 32; ++j) attrs[1][j] += 0.5 * attrs[0][j];
  const auto c = condition_direction(random_unit(rng, 32), attrs);
  for (const auto& a : attrs) EXPECT_LE(std::abs(dot(c.normal, a)), 1e-12 * norm2(a) * 32);
  EXPECT_EQ(c.meta.at("conditioned_on"), "2");
}

TEST(ConditionDirection, Errors) {
  Xoshiro256 rng(6);
  const auto h = random_unit(rng, 8);
  const std::vector<std::vector<double>> same{h.normal};
  EXPECT_EQ(kind_of([&] { condition_direction(h, same); }), ErrorKind::degenerate);
  EXPECT_EQ(kind_of([&] { condition_direction(h, std::vector<std::vector<double>>{}); }),
            ErrorKind::validation);
  EXPECT_EQ(kind_of([&] {
              condition_direction(h, std::vector<std::vector<double>>{{1, 0}});
            }),
            ErrorKind::validation);
  std::vector<std::vector<double>> too_many(8, std::vector<double>(8, 1.0));
  EXPECT_EQ(kind_of([&] { condition_direction(h, too_many); }), ErrorKind::validation);
}

TEST(LayerwiseEdit, EmptyMaskLeavesMatrixUnchanged) {
  Xoshiro256 rng(7);
  Matrix w({18, 512}, random_vector(rng, 18 * 512));
  const auto h = random_unit(rng, 18 * 512);
  EXPECT_EQ(layerwise_edit(w, h, 3.0, {}), w);
}

TEST(LayerwiseEdit, SingleLayerTouchesExactlyOneRow) {
  Xoshiro256 rng(8);
  Matrix w({18, 512}, random_vector(rng, 18 * 512));
  const auto h = random_unit(rng, 18 * 512);
  const auto out = layerwise_edit(w, h, 1.0, {6});
  std::size_t changed = 0;
  for (std::size_t l = 0; l < 18; ++l)
    for (std::size_t j = 0; j < 512; ++j) {
      const bool differs = out(l, j) != w(l, j);
      changed += differs;
      if (l != 6) {
        ASSERT_FALSE(differs);
      }
    }
  EXPECT_EQ(changed, 512u);
}

TEST(LayerwiseEdit, FullMaskEqualsFlatEdit) {
  Xoshiro256 rng(9);
  const auto flat = random_vector(rng, 18 * 64);
  Matrix w({18, 64}, flat);
  const auto h = random_unit(rng, 18 * 64);
  std::set<std::size_t> all;
  for (std::size_t l = 0; l < 18; ++l) all.insert(l);
  const auto a = layerwise_edit(w, h, -1.3, all);
  const auto b = edit(flat, h, -1.3);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(a.data()[i], b[i], 1e-12);
}

TEST(LayerwiseEdit, Errors) {
  Xoshiro256 rng(10);
  Matrix w(4, 3);
  const auto h = random_unit(rng, 12);
  EXPECT_EQ(kind_of([&] { layerwise_edit(w, h, 1.0, {4}); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([&] { layerwise_edit(Matrix(4, 4), h, 1.0, {0}); }),
            ErrorKind::validation);
}

TEST(Sweep, ZeroAlphaReturnsInput) {
  Xoshiro256 rng(11);
  const auto x = random_vector(rng, 16);
  const auto t = sweep(x, random_unit(rng, 16), std::vector<double>{0.0});
  ASSERT_EQ(t.latents.size(), 1u);
  EXPECT_EQ(t.latents[0], x);
}

TEST(Sweep, ScoresStepByAlpha) {
  Xoshiro256 rng(12);
  const auto x = random_vector(rng, 128);
  const auto h = random_unit(rng, 128);
  const std::vector<double> alphas{-1, 0, 1};
  const auto t = sweep(x, h, alphas);
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    const double step = direction_score(h, t.latents[i]) - direction_score(h, t.latents[i - 1]);
    EXPECT_GT(step, 0.0);
    EXPECT_NEAR(step, 1.0, 1e-10);
  }
}

TEST(Sweep, ConditionedSweepKeepsAttributeProjection) {
  Xoshiro256 rng(13);
  const auto x = random_vector(rng, 64);
  const auto h = random_unit(rng, 64);
  EditSpec spec;
  spec.conditions = {random_vector(rng, 64)};
  const std::vector<double> alphas{-3, -1.5, 0, 2, 4.5};
  const auto t = sweep(x, h, alphas, spec);
  const double base = dot(spec.conditions[0], x);
  for (const auto& y : t.latents) EXPECT_NEAR(dot(spec.conditions[0], y), base, 1e-5);
}

TEST(Sweep, LayerMaskUsesHyperplaneLayerStructure) {
  Xoshiro256 rng(14);
  const auto x = random_vector(rng, 4 * 8);
  auto h = random_unit(rng, 4 * 8);
  h.layer_structure = LayerStructure{4, 8};
  EditSpec spec;
  spec.layer_mask = std::set<std::size_t>{1};
  const auto t = sweep(x, h, std::vector<double>{2.0}, spec);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j >= 8 && j < 16) {
      EXPECT_NEAR(t.latents[0][j], x[j] + 2.0 * h.normal[j], 1e-15);
    } else {
      EXPECT_EQ(t.latents[0][j], x[j]);
    }
  }
  h.layer_structure.reset();
  EXPECT_EQ(kind_of([&] { sweep(x, h, std::vector<double>{2.0}, spec); }),
            ErrorKind::validation);
}

TEST(Sweep, EmptyAlphaListIsAnError) {
  Xoshiro256 rng(15);
  EXPECT_EQ(kind_of([&] {
              sweep(random_vector(rng, 4), random_unit(rng, 4), std::vector<double>{});
            }),
            ErrorKind::validation);
}

TEST(ApplyEdit, HonorsConditionsAndAlpha) {
  Hyperplane h;
  const double r = 1.0 / std::sqrt(2.0);
  h.normal = {r, r, 0};
  EditSpec spec;
  spec.alpha = 2.0;
  spec.conditions = {{0, 1, 0}};
  EXPECT_EQ(apply_edit(std::vector<double>{0, 5, 1}, h, spec), (std::vector<double>{2, 5, 1}));
}
