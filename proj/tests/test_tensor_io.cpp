#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>

#include "memedit/rng.hpp"
#include "memedit/tensor_io.hpp"

using namespace memedit;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "memedit_tensor_io";
  fs::create_directories(dir);
  return dir / name;
}

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

TEST(Ltm1, HeaderLayoutAndSize) {
  Matrix m({1, 2}, {1.0, 2.0});
  const auto bytes = encode_matrix(m);
  ASSERT_EQ(bytes.size(), 38u);  // 4 magic + 1 dtype + 1 ndim + 2*8 dims + 2*8 payload
  EXPECT_EQ(bytes.substr(0, 4), "LTM1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1u);   // dim 0 = 1, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[14]), 2u);  // dim 1 = 2
  // 1.0 = 0x3ff0000000000000 little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[22 + 7]), 0x3fu);
  EXPECT_EQ(static_cast<unsigned char>(bytes[22 + 6]), 0xf0u);
}

TEST(Ltm1, RandomF32RoundTripIsBitExact) {
  Xoshiro256 rng(17);
  Matrix m({18, 512}, DType::f32);
  for (double& v : m.data()) v = static_cast<float>(rng.normal());
  const auto path = temp_path("w.ltm").string();
  save_matrix(m, path);
  const Matrix back = load_matrix(path);
  EXPECT_EQ(back.shape(), m.shape());
  EXPECT_EQ(back.dtype(), DType::f32);
  for (std::size_t i = 0; i < m.size(); ++i)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(back.data()[i]),
              std::bit_cast<std::uint64_t>(m.data()[i]));
  EXPECT_EQ(encode_matrix(back), encode_matrix(m));
}

TEST(Ltm1, ThreeDimensionalF64RoundTrip) {
  Xoshiro256 rng(2);
  Matrix m({3, 4, 5});
  for (double& v : m.data()) v = rng.normal() * 1e300;
  EXPECT_EQ(decode_matrix(encode_matrix(m)), m);
  EXPECT_EQ(m.rows(), 3u);
  EXPECT_EQ(m.cols(), 20u);
}

TEST(Ltm1, EmptyShapeIsRejected) {
  EXPECT_EQ(kind_of([] { Matrix m(std::vector<std::size_t>{}); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { encode_matrix(Matrix{}); }), ErrorKind::validation);
}

TEST(Ltm1, NonFiniteIsRejectedOnSave) {
  Matrix m({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_EQ(kind_of([&] { encode_matrix(m); }), ErrorKind::validation);
}

TEST(Ltm1, LoadErrors) {
  const auto good = encode_matrix(Matrix({2, 2}, {1, 2, 3, 4}));

  auto bad_magic = good;
  bad_magic.replace(0, 4, "XXXX");
  EXPECT_EQ(kind_of([&] { decode_matrix(bad_magic); }), ErrorKind::format);

  EXPECT_EQ(kind_of([&] { decode_matrix(good.substr(0, good.size() - 1)); }),
            ErrorKind::format);

  auto bad_dtype = good;
  bad_dtype[4] = 3;
  EXPECT_EQ(kind_of([&] { decode_matrix(bad_dtype); }), ErrorKind::format);

  auto zero_dims = good.substr(0, 6);
  zero_dims[5] = 0;
  EXPECT_EQ(kind_of([&] { decode_matrix(zero_dims); }), ErrorKind::format);

  EXPECT_EQ(kind_of([&] { decode_matrix(good + "x"); }), ErrorKind::format);
  EXPECT_EQ(kind_of([] { load_matrix("/nonexistent/dir/m.ltm"); }), ErrorKind::io);
}

TEST(Ltm1, NonFiniteOnLoadNeedsAllowFlag) {
  auto bytes = encode_matrix(Matrix(std::vector<std::size_t>{1}, std::vector<double>{1.0}));
  const auto inf = std::bit_cast<std::uint64_t>(std::numeric_limits<double>::infinity());
  for (int i = 0; i < 8; ++i) bytes[14 + i] = static_cast<char>((inf >> (8 * i)) & 0xff);
  EXPECT_EQ(kind_of([&] { decode_matrix(bytes); }), ErrorKind::validation);
  EXPECT_TRUE(std::isinf(decode_matrix(bytes, true).data()[0]));
}

TEST(Scores, ParsesWellFormedCsv) {
  EXPECT_EQ(decode_scores("id,score\n0,0.5\n1,0.7"), (std::vector<double>{0.5, 0.7}));
  EXPECT_EQ(decode_scores("id,score\r\n0,1e-3\r\n1,-2\r\n"), (std::vector<double>{1e-3, -2}));
}

TEST(Scores, RejectsMalformedInput) {
  EXPECT_EQ(kind_of([] { decode_scores("0,0.5\n1,0.7"); }), ErrorKind::format);
  EXPECT_EQ(kind_of([] { decode_scores("id,score\n0,abc"); }), ErrorKind::format);
  EXPECT_EQ(kind_of([] { decode_scores("id,score\n0,0.1\n2,0.3"); }), ErrorKind::format);
  EXPECT_EQ(kind_of([] { decode_scores("id,score\n0,0.1,3"); }), ErrorKind::format);
  EXPECT_EQ(kind_of([] { decode_scores("id,score\n0,nan"); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { decode_scores("id,score\n"); }), ErrorKind::format);
}

TEST(Scores, RoundTripIsExact) {
  Xoshiro256 rng(4);
  std::vector<double> s(257);
  for (double& v : s) v = rng.uniform() * std::pow(10.0, rng.normal() * 5);
  EXPECT_EQ(decode_scores(encode_scores(s)), s);
}

TEST(HyperplaneJson, RoundTripPreservesValues) {
  HyperplaneRecord h{3, {1, 0, 0}, 0.0, {{"space", "z"}}};
  const auto path = temp_path("h.json").string();
  save_hyperplane(h, path);
  EXPECT_EQ(load_hyperplane(path), h);

  Xoshiro256 rng(8);
  std::vector<double> v(64);
  for (double& x : v) x = rng.normal();
  double n = 0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  HyperplaneRecord r{64, v, -0.123456789012345678, {{"threshold", "mean"}}};
  EXPECT_EQ(hyperplane_from_json(to_json(r)), r);
  EXPECT_EQ(hyperplane_from_json(nlohmann::json::parse(to_json(r).dump())), r);
}

TEST(HyperplaneJson, ValidationErrors) {
  EXPECT_EQ(kind_of([] { validate(HyperplaneRecord{3, {1, 1, 0}, 0, {}}); }),
            ErrorKind::validation);
  EXPECT_EQ(kind_of([] { validate(HyperplaneRecord{2, {1, 0, 0}, 0, {}}); }),
            ErrorKind::validation);
  EXPECT_EQ(kind_of([] {
              hyperplane_from_json(nlohmann::json::parse(R"({"dim":2,"normal":[1,0]})"));
            }),
            ErrorKind::format);
}
