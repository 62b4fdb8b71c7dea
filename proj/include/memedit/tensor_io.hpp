#pragma once

// Interchange formats shared with external GAN / assessor pipelines:
//
//   LTM1 matrix   "LTM1" | u8 dtype (1=f32, 2=f64) | u8 ndim | ndim x u64 dims
//                 | row-major payload; all integers and floats little-endian
//   scores CSV    header "id,score", then "i,value" for i = 0..n-1
//   hyperplane    JSON {"dim", "normal", "bias", "meta": {string: string}}

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "memedit/error.hpp"
#include "memedit/matrix.hpp"

namespace memedit {

inline constexpr std::array<char, 4> kMatrixMagic{'L', 'T', 'M', '1'};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::io, "read error on '" + path + "'");
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorKind::io, "write error on '" + path + "'");
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LTM1 matrices

inline std::string encode_matrix(const Matrix& m) {
  require(!m.empty(), "cannot encode a matrix with an empty shape");
  if (!m.all_finite()) fail(ErrorKind::validation, "matrix contains non-finite values");
  std::string out;
  out.reserve(6 + 8 * m.ndim() + 8 * m.size());
  out.append(kMatrixMagic.begin(), kMatrixMagic.end());
  out.push_back(static_cast<char>(m.dtype()));
  out.push_back(static_cast<char>(m.ndim()));
  for (auto d : m.shape()) detail::put_u64_le(out, d);
  if (m.dtype() == DType::f32) {
    for (double v : m.data())
      detail::put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : m.data()) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Matrix decode_matrix(std::string_view bytes, bool allow_nonfinite = false) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 6) fail(ErrorKind::format, "LTM1: truncated header");
  if (std::string_view(bytes.data(), 4) != std::string_view(kMatrixMagic.data(), 4))
    fail(ErrorKind::format, "LTM1: bad magic");
  const auto code = p[4];
  if (code != 1 && code != 2)
    fail(ErrorKind::format, "LTM1: unknown dtype code " + std::to_string(code));
  const DType dtype = static_cast<DType>(code);
  const std::size_t ndim = p[5];
  if (ndim < 1 || ndim > 3)
    fail(ErrorKind::format, "LTM1: ndim must be 1..3, got " + std::to_string(ndim));
  if (n < 6 + 8 * ndim) fail(ErrorKind::format, "LTM1: truncated header");

  std::vector<std::size_t> shape(ndim);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = detail::get_u64_le(p + 6 + 8 * i);
    if (d != 0 && count > (std::uint64_t{1} << 48) / d)
      fail(ErrorKind::format, "LTM1: shape too large");
    count *= d;
    shape[i] = static_cast<std::size_t>(d);
  }
  const std::size_t width = dtype == DType::f32 ? 4 : 8;
  const std::size_t offset = 6 + 8 * ndim;
  const std::size_t expected = offset + width * static_cast<std::size_t>(count);
  if (n < expected) fail(ErrorKind::format, "LTM1: truncated payload");
  if (n > expected) fail(ErrorKind::format, "LTM1: trailing bytes after payload");

  std::vector<double> data(static_cast<std::size_t>(count));
  const unsigned char* q = p + offset;
  for (std::size_t i = 0; i < data.size(); ++i, q += width) {
    data[i] = dtype == DType::f32
                  ? static_cast<double>(std::bit_cast<float>(detail::get_u32_le(q)))
                  : std::bit_cast<double>(detail::get_u64_le(q));
    if (!allow_nonfinite && !std::isfinite(data[i]))
      fail(ErrorKind::validation,
           "LTM1: non-finite element at flat index " + std::to_string(i));
  }
  return Matrix(std::move(shape), std::move(data), dtype);
}

inline void save_matrix(const Matrix& m, const std::string& path) {
  detail::write_file(path, encode_matrix(m));
}

inline Matrix load_matrix(const std::string& path, bool allow_nonfinite = false) {
  return decode_matrix(detail::read_file(path), allow_nonfinite);
}

// ---------------------------------------------------------------------------
// Score CSV

inline std::string encode_scores(std::span<const double> scores) {
  std::string out = "id,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      fail(ErrorKind::validation, "scores: non-finite value at id " + std::to_string(i));
    out += std::to_string(i);
    out += ',';
    out += detail::format_double(scores[i]);
    out += '\n';
  }
  return out;
}

inline std::vector<double> decode_scores(std::string_view text) {
  std::vector<double> scores;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!saw_header) {
      if (line != "id,score")
        fail(ErrorKind::format, "scores: expected header 'id,score' on line 1");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
      fail(ErrorKind::format, "scores: malformed row on line " + std::to_string(line_no));
    std::size_t id = 0;
    const auto id_text = line.substr(0, comma);
    auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc() || ptr != id_text.data() + id_text.size())
      fail(ErrorKind::format, "scores: bad id on line " + std::to_string(line_no));
    if (id != scores.size())
      fail(ErrorKind::format, "scores: ids must be contiguous from 0; got " +
                                  std::to_string(id) + " on line " + std::to_string(line_no));
    double v = 0.0;
    if (!detail::parse_double(line.substr(comma + 1), v))
      fail(ErrorKind::format, "scores: cannot parse score on line " + std::to_string(line_no));
    if (!std::isfinite(v))
      fail(ErrorKind::validation, "scores: non-finite score on line " + std::to_string(line_no));
    scores.push_back(v);
  }
  if (!saw_header) fail(ErrorKind::format, "scores: empty file");
  if (scores.empty()) fail(ErrorKind::format, "scores: no rows");
  return scores;
}

inline void save_scores(std::span<const double> scores, const std::string& path) {
  detail::write_file(path, encode_scores(scores));
}

inline std::vector<double> load_scores(const std::string& path) {
  return decode_scores(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Hyperplane JSON

struct HyperplaneRecord {
  std::size_t dim = 0;
  std::vector<double> normal;
  double bias = 0.0;
  std::map<std::string, std::string> meta;

  friend bool operator==(const HyperplaneRecord&, const HyperplaneRecord&) = default;
};

inline constexpr double kUnitNormTolerance = 1e-6;

inline void validate(const HyperplaneRecord& h) {
  if (h.dim == 0) fail(ErrorKind::validation, "hyperplane: dim must be positive");
  if (h.normal.size() != h.dim)
    fail(ErrorKind::validation, "hyperplane: dim " + std::to_string(h.dim) +
                                    " does not match normal length " +
                                    std::to_string(h.normal.size()));
  for (double v : h.normal)
    if (!std::isfinite(v)) fail(ErrorKind::validation, "hyperplane: non-finite normal");
  if (!std::isfinite(h.bias)) fail(ErrorKind::validation, "hyperplane: non-finite bias");
  double sq = 0.0;
  for (double v : h.normal) sq += v * v;
  if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance)
    fail(ErrorKind::validation, "hyperplane: normal is not unit length (norm " +
                                    detail::format_double(std::sqrt(sq)) + ")");
}

inline nlohmann::json to_json(const HyperplaneRecord& h) {
  nlohmann::json meta = nlohmann::json::object();
  for (const auto& [k, v] : h.meta) meta[k] = v;
  return {{"dim", h.dim}, {"normal", h.normal}, {"bias", h.bias}, {"meta", meta}};
}

inline HyperplaneRecord hyperplane_from_json(const nlohmann::json& j) {
  HyperplaneRecord h;
  try {
    h.dim = j.at("dim").get<std::size_t>();
    h.normal = j.at("normal").get<std::vector<double>>();
    h.bias = j.at("bias").get<double>();
    if (j.contains("meta"))
      h.meta = j.at("meta").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("hyperplane JSON: ") + e.what());
  }
  validate(h);
  return h;
}

inline void save_hyperplane(const HyperplaneRecord& h, const std::string& path) {
  validate(h);
  detail::write_file(path, to_json(h).dump(2) + "\n");
}

inline HyperplaneRecord load_hyperplane(const std::string& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "'" + path + "': " + e.what());
  }
  return hyperplane_from_json(j);
}

}  // namespace memedit
