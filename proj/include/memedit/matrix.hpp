#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "memedit/error.hpp"

namespace memedit {

/// On-disk element type. Values are always held in memory as double; an f32
/// matrix only promises that every element is representable as float.
enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

/// Dense row-major array with 1 to 3 dimensions. The first dimension counts
/// rows; any remaining dimensions are flattened into columns, so an n x 18 x 512
/// batch of extended latents reads as n rows of 9216 columns.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::vector<std::size_t> shape, DType dtype = DType::f64)
      : shape_(std::move(shape)), dtype_(dtype) {
    check_shape(shape_);
    data_.assign(element_count(shape_), 0.0);
  }

  Matrix(std::size_t rows, std::size_t cols, DType dtype = DType::f64)
      : Matrix(std::vector<std::size_t>{rows, cols}, dtype) {}

  Matrix(std::vector<std::size_t> shape, std::vector<double> data,
         DType dtype = DType::f64)
      : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
    check_shape(shape_);
    require(data_.size() == element_count(shape_),
            "matrix data length does not match shape");
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  DType dtype() const { return dtype_; }
  void set_dtype(DType dtype) { dtype_ = dtype; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }

  std::size_t rows() const { return shape_.size() == 1 ? 1 : shape_.at(0); }
  std::size_t cols() const {
    if (shape_.empty()) return 0;
    if (shape_.size() == 1) return shape_[0];
    return data_.size() / std::max<std::size_t>(shape_[0], 1);
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::span<double> row(std::size_t i) {
    return std::span<double>(data_).subspan(i * cols(), cols());
  }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols(), cols());
  }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols() + j];
  }

  /// Same elements under a new shape with equal element count.
  Matrix reshaped(std::vector<std::size_t> shape) const {
    return Matrix(std::move(shape), data_, dtype_);
  }

  /// Rows selected by index, as a 2-D matrix.
  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols(), dtype_);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto src = row(idx[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  static void check_shape(const std::vector<std::size_t>& shape) {
    require(!shape.empty() && shape.size() <= 3,
            "matrix must have between 1 and 3 dimensions");
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  DType dtype_ = DType::f64;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Euclidean norm with max-abs scaling, so a vector with a single nonzero
/// entry normalizes to exactly +-1 in that entry.
inline double norm2(std::span<const double> v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) {
    const double y = x / scale;
    s += y * y;
  }
  return scale * std::sqrt(s);
}

inline std::vector<double> normalized(std::span<const double> v) {
  const double n = norm2(v);
  require(n > 0.0, "cannot normalize a zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

}  // namespace memedit
