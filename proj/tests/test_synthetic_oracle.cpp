#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "memedit/synthetic_oracle.hpp"

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

}  // namespace

TEST(MakeWorld, SeededUnitDirection) {
  const auto a = make_world(64, 7, 0.05), b = make_world(64, 7, 0.05), c = make_world(64, 8, 0.05);
  EXPECT_EQ(a.true_direction, b.true_direction);
  EXPECT_NE(a.true_direction, c.true_direction);
  EXPECT_NEAR(norm2(a.true_direction), 1.0, 1e-9);
  EXPECT_EQ(a.true_bias, 0.0);
}

TEST(MakeWorld, LayerSparseDirectionLivesInOneBlock) {
  const auto w = make_world(18 * 512, 3, 0.05, std::nullopt, LayerStructure{18, 512}, 5);
  for (std::size_t j = 0; j < w.dim; ++j) {
    if (j < 2560 || j >= 3072) {
      ASSERT_EQ(w.true_direction[j], 0.0) << j;
    }
  }
  double in_block = 0;
  for (std::size_t j = 2560; j < 3072; ++j) in_block += w.true_direction[j] * w.true_direction[j];
  EXPECT_NEAR(in_block, 1.0, 1e-12);
}

TEST(MakeWorld, Errors) {
  EXPECT_EQ(kind_of([] { make_world(1, 0, 0.1); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { make_world(4, 0, -0.1); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { make_world(8, 0, 0.1, std::nullopt, LayerStructure{2, 4}, 2); }),
            ErrorKind::validation);
  EXPECT_EQ(kind_of([] { make_world(8, 0, 0.1, std::nullopt, std::nullopt, 0); }),
            ErrorKind::validation);
}

TEST(SampleLatents, TruncationBoundsEveryComponent) {
  const auto w = make_world(32, 1, 0.0);
  SamplerConfig cfg{5000, 2.0};
  const auto x = sample_latents(w, cfg);
  for (double v : x.data()) ASSERT_LE(std::abs(v), 2.0);
  EXPECT_EQ(x.rows(), 5000u);
  EXPECT_EQ(x.cols(), 32u);
}

TEST(SampleLatents, WorldPsiIsTheDefault) {
  const auto w = make_world(8, 1, 0.0, 1.5);
  for (double v : sample_latents(w, {2000}).data()) ASSERT_LE(std::abs(v), 1.5);
}

TEST(SampleLatents, StandardNormalMoments) {
  const auto w = make_world(6, 11, 0.0);
  const auto x = sample_latents(w, {50000});
  for (std::size_t j = 0; j < 6; ++j) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      s += x(i, j);
      s2 += x(i, j) * x(i, j);
    }
    const double mean = s / 50000.0, var = s2 / 50000.0 - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02) << "component " << j;
    EXPECT_NEAR(var, 1.0, 0.03) << "component " << j;
  }
}

TEST(SampleLatents, DeterministicPerStream) {
  const auto w = make_world(16, 2, 0.0, 2.5);
  EXPECT_EQ(sample_latents(w, {100}), sample_latents(w, {100}));
  SamplerConfig other{100};
  other.stream = 1;
  EXPECT_NE(sample_latents(w, {100}), sample_latents(w, other));
  EXPECT_EQ(kind_of([&] { sample_latents(w, {0}); }), ErrorKind::validation);
}

TEST(Score, SigmoidAtZeroIsHalf) {
  const auto w = make_world(4, 5, 0.1);
  Matrix x(1, 4);
  EXPECT_EQ(score(w, x, true)[0], 0.5);
}

TEST(Score, StrictlyIncreasingAlongTrueDirection) {
  const auto w = make_world(16, 6, 0.1);
  auto x = sample_latents(w, {1});
  Matrix path(7, 16);
  for (int a = -3; a <= 3; ++a)
    for (std::size_t j = 0; j < 16; ++j)
      path(static_cast<std::size_t>(a + 3), j) = x(0, j) + a * w.true_direction[j];
  const auto s = score(w, path, true);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[i], s[i - 1]);
}

TEST(Score, NoiseMagnitudeMatchesHalfNormalMean) {
  const auto w = make_world(16, 7, 0.05);
  const auto x = sample_latents(w, {10000});
  const auto noisy = score(w, x), clean = score(w, x, true);
  double total = 0;
  for (std::size_t i = 0; i < noisy.size(); ++i) total += std::abs(noisy[i] - clean[i]);
  EXPECT_LE(total / 10000.0, 0.05 * std::sqrt(2.0 / std::numbers::pi) * 1.2);
  for (double v : noisy) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Score, DimensionMismatchIsAnError) {
  const auto w = make_world(4, 5, 0.1);
  EXPECT_EQ(kind_of([&] { score(w, Matrix(2, 3)); }), ErrorKind::validation);
}

TEST(CollapseLayers, AveragesLayerRows) {
  Matrix w({1, 6}, {1, 2, 3, 5, 5, 7});
  const auto z = collapse_layers(w, {3, 2});
  ASSERT_EQ(z.shape(), (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(z(0, 0), 3.0, 1e-15);
  EXPECT_NEAR(z(0, 1), 14.0 / 3.0, 1e-15);
}

TEST(WorldJson, RoundTrip) {
  const auto w = make_world(12, 9, 0.07, 2.0, LayerStructure{3, 4}, 1);
  const auto back = world_from_json(nlohmann::json::parse(to_json(w).dump()));
  EXPECT_EQ(back.true_direction, w.true_direction);
  EXPECT_EQ(back.seed, w.seed);
  EXPECT_EQ(back.truncation_psi, w.truncation_psi);
  EXPECT_EQ(back.layer_structure, w.layer_structure);
  EXPECT_EQ(back.sparse_layer, w.sparse_layer);
  EXPECT_EQ(back.noise_sigma, w.noise_sigma);
  EXPECT_EQ(sample_latents(back, {10}), sample_latents(w, {10}));
}
