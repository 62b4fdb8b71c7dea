#pragma once

// Evaluation: rank correlations, FID/KID realness measures and alpha-sweep
// score statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "memedit/error.hpp"
#include "memedit/matrix.hpp"
#include "memedit/rng.hpp"

namespace memedit {

// ---------------------------------------------------------------------------
// Rank correlation

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b,
                       const char* what) {
  require(a.size() == b.size(), std::string(what) + ": length mismatch");
  require(a.size() >= 2, std::string(what) + ": need at least 2 samples");
}

/// Pairs tied within runs of equal values of a sorted sequence.
template <class It, class Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  for (It i = first; i != last;) {
    It j = i;
    std::int64_t run = 0;
    while (j != last && eq(*i, *j)) ++j, ++run;
    total += run * (run - 1) / 2;
    i = j;
  }
  return total;
}

/// Merge sort that returns the number of inversions (strictly greater before).
inline std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf,
                                     std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace detail

/// Kendall tau-b in O(n log n) (Knight's algorithm).
inline double kendall_tau(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b, "kendall_tau");
  const std::size_t n = a.size();
  std::vector<std::pair<double, double>> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = {a[i], b[i]};
  std::sort(p.begin(), p.end());

  const std::int64_t n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t ties_a =
      detail::tied_pairs(p.begin(), p.end(), [](auto& x, auto& y) { return x.first == y.first; });
  const std::int64_t ties_ab = detail::tied_pairs(p.begin(), p.end(), [](auto& x, auto& y) {
    return x.first == y.first && x.second == y.second;
  });

  std::vector<double> seq(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) seq[i] = p[i].second;
  const std::int64_t swaps = detail::count_inversions(seq, buf, 0, n);
  const std::int64_t ties_b =
      detail::tied_pairs(seq.begin(), seq.end(), [](double x, double y) { return x == y; });

  if (ties_a == n0 || ties_b == n0)
    fail(ErrorKind::degenerate, "kendall_tau: one input is constant");
  // concordant - discordant
  const std::int64_t s = n0 - ties_a - ties_b + ties_ab - 2 * swaps;
  return static_cast<double>(s) /
         std::sqrt(static_cast<double>(n0 - ties_a) * static_cast<double>(n0 - ties_b));
}

/// 1-based ranks with ties sharing the average rank.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j + 1);  // mean of i+1..j
    for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
    i = j;
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b, "pearson");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) fail(ErrorKind::degenerate, "correlation: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b, "spearman_rho");
  const auto ra = fractional_ranks(a);
  const auto rb = fractional_ranks(b);
  return pearson(ra, rb);
}

// ---------------------------------------------------------------------------
// Gaussian moments and FID

struct GaussianMoments {
  std::vector<double> mean;
  Matrix cov;  // d x d

  std::size_t dim() const { return mean.size(); }
};

/// Sample mean and unbiased covariance, accumulated in one pass (Welford).
inline GaussianMoments moments(const Matrix& features) {
  const std::size_t n = features.rows(), d = features.cols();
  require(n >= 2, "moments: need at least 2 feature vectors");
  require(d >= 1, "moments: feature dimension must be >= 1");
  std::vector<double> mean(d, 0.0), delta(d);
  Matrix m2(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.row(i);
    const double k = static_cast<double>(i + 1);
    for (std::size_t j = 0; j < d; ++j) {
      delta[j] = x[j] - mean[j];
      mean[j] += delta[j] / k;
    }
    // m2 += delta_old * (x - mean_new)^T
    for (std::size_t r = 0; r < d; ++r) {
      auto row = m2.row(r);
      for (std::size_t c = 0; c < d; ++c) row[c] += delta[r] * (x[c] - mean[c]);
    }
  }
  const double denom = static_cast<double>(n - 1);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) {
      const double v = 0.5 * (m2(r, c) + m2(c, r)) / denom;
      m2(r, c) = v;
      m2(c, r) = v;
    }
  return {std::move(mean), std::move(m2)};
}

namespace detail {

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

inline void check_covariance(const Matrix& cov, std::size_t d, const char* name) {
  require(cov.ndim() == 2 && cov.rows() == d && cov.cols() == d,
          std::string("fid: ") + name + " covariance has the wrong shape");
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r + 1; c < d; ++c)
      require(std::abs(cov(r, c) - cov(c, r)) <= 1e-8,
              std::string("fid: ") + name + " covariance is not symmetric");
}

}  // namespace detail

inline constexpr double kEigenClamp = 1e-12;

/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)). The cross term is evaluated
/// as sum sqrt(eig(S1^(1/2) S2 S1^(1/2))), which shares its spectrum with S1 S2.
inline double fid_from_moments(const GaussianMoments& p, const GaussianMoments& q) {
  const std::size_t d = p.dim();
  require(d >= 1 && q.dim() == d, "fid: dimension mismatch");
  detail::check_covariance(p.cov, d, "first");
  detail::check_covariance(q.cov, d, "second");

  double mean_term = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = p.mean[j] - q.mean[j];
    mean_term += diff * diff;
  }
  const Eigen::MatrixXd s1 = detail::to_eigen(p.cov);
  const Eigen::MatrixXd s2 = detail::to_eigen(q.cov);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
  if (e1.info() != Eigen::Success) fail(ErrorKind::numeric, "fid: eigendecomposition failed");
  Eigen::VectorXd sqrt_vals = e1.eigenvalues();
  for (Eigen::Index i = 0; i < sqrt_vals.size(); ++i)
    sqrt_vals[i] = sqrt_vals[i] < kEigenClamp ? 0.0 : std::sqrt(sqrt_vals[i]);
  const Eigen::MatrixXd s1_half =
      e1.eigenvectors() * sqrt_vals.asDiagonal() * e1.eigenvectors().transpose();

  Eigen::MatrixXd inner = s1_half * s2 * s1_half;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(inner, Eigen::EigenvaluesOnly);
  if (e2.info() != Eigen::Success) fail(ErrorKind::numeric, "fid: eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < e2.eigenvalues().size(); ++i) {
    const double v = e2.eigenvalues()[i];
    if (v >= kEigenClamp) tr_sqrt += std::sqrt(v);
  }
  const double fid = mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(fid, 0.0);
}

inline double fid(const Matrix& f1, const Matrix& f2) {
  require(f1.cols() == f2.cols(), "fid: feature dimension mismatch");
  return fid_from_moments(moments(f1), moments(f2));
}

// ---------------------------------------------------------------------------
// KID

/// Cubic polynomial kernel (x.y / d + 1)^3.
inline double poly_kernel(std::span<const double> x, std::span<const double> y) {
  const double t = dot(x, y) / static_cast<double>(x.size()) + 1.0;
  return t * t * t;
}

namespace detail {

inline double kernel_block_sum(const Matrix& a, std::span<const std::size_t> ia,
                               const Matrix& b, std::span<const std::size_t> ib,
                               bool skip_diagonal) {
  double s = 0.0;
  for (std::size_t i = 0; i < ia.size(); ++i)
    for (std::size_t j = 0; j < ib.size(); ++j) {
      if (skip_diagonal && i == j) continue;
      s += poly_kernel(a.row(ia[i]), b.row(ib[j]));
    }
  return s;
}

inline std::vector<std::size_t> all_rows(const Matrix& m) {
  std::vector<std::size_t> idx(m.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace detail

/// Unbiased MMD^2: within-set sums skip the diagonal; needs >= 2 rows per set.
inline double mmd2_unbiased(const Matrix& x, std::span<const std::size_t> ix,
                            const Matrix& y, std::span<const std::size_t> iy) {
  const double m = static_cast<double>(ix.size()), n = static_cast<double>(iy.size());
  require(ix.size() >= 2 && iy.size() >= 2, "mmd2_unbiased: need at least 2 samples per set");
  return detail::kernel_block_sum(x, ix, x, ix, true) / (m * (m - 1)) +
         detail::kernel_block_sum(y, iy, y, iy, true) / (n * (n - 1)) -
         2.0 * detail::kernel_block_sum(x, ix, y, iy, false) / (m * n);
}

/// Biased (V-statistic) MMD^2 over whole sets, diagonal included.
inline double mmd2_biased(const Matrix& x, const Matrix& y) {
  require(x.cols() == y.cols(), "mmd2_biased: feature dimension mismatch");
  const auto ix = detail::all_rows(x), iy = detail::all_rows(y);
  const double m = static_cast<double>(ix.size()), n = static_cast<double>(iy.size());
  return detail::kernel_block_sum(x, ix, x, ix, false) / (m * m) +
         detail::kernel_block_sum(y, iy, y, iy, false) / (n * n) -
         2.0 * detail::kernel_block_sum(x, ix, y, iy, false) / (m * n);
}

struct KidResult {
  double mean = 0.0;
  double std = 0.0;  // population std over subsets
  std::vector<double> per_subset;
};

struct KidConfig {
  std::size_t subset_size = 1000;
  std::size_t num_subsets = 10;
  std::uint64_t seed = 0;
};

/// Each subset s draws its own indices from xoshiro256**(derive_seed(seed, s)),
/// so results do not depend on evaluation order.
inline KidResult kid(const Matrix& f1, const Matrix& f2, const KidConfig& config = {}) {
  require(f1.cols() == f2.cols(), "kid: feature dimension mismatch");
  require(config.num_subsets >= 1, "kid: num_subsets must be >= 1");
  require(config.subset_size >= 2, "kid: subset_size must be >= 2");
  require(config.subset_size <= std::min(f1.rows(), f2.rows()),
          "kid: subset_size " + std::to_string(config.subset_size) +
              " exceeds the smaller feature set (" +
              std::to_string(std::min(f1.rows(), f2.rows())) + ")");
  KidResult r;
  r.per_subset.resize(config.num_subsets);
  for (std::size_t s = 0; s < config.num_subsets; ++s) {
    Xoshiro256 rng(derive_seed(config.seed, s));
    const auto i1 = sample_without_replacement(f1.rows(), config.subset_size, rng);
    const auto i2 = sample_without_replacement(f2.rows(), config.subset_size, rng);
    r.per_subset[s] = mmd2_unbiased(f1, i1, f2, i2);
  }
  const double k = static_cast<double>(config.num_subsets);
  r.mean = std::accumulate(r.per_subset.begin(), r.per_subset.end(), 0.0) / k;
  double var = 0.0;
  for (double v : r.per_subset) var += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(var / k);
  return r;
}

struct RealnessRatio {
  double fid_modified = 0.0;
  double fid_baseline = 0.0;
  double kid_modified = 0.0;
  double kid_baseline = 0.0;
  double fid_ratio = 0.0;
  double kid_ratio = 0.0;
};

/// FID and KID of `modified` against `reference`, each divided by the same
/// metric for `baseline`. A ratio near one means realness is unchanged.
inline RealnessRatio realness_ratio(const Matrix& modified, const Matrix& baseline,
                                    const Matrix& reference, const KidConfig& kid_config) {
  require(modified.cols() == baseline.cols() && baseline.cols() == reference.cols(),
          "realness_ratio: feature dimensions differ");
  const auto ref = moments(reference);
  RealnessRatio r;
  r.fid_modified = fid_from_moments(moments(modified), ref);
  r.fid_baseline = fid_from_moments(moments(baseline), ref);
  r.kid_modified = kid(modified, reference, kid_config).mean;
  r.kid_baseline = kid(baseline, reference, kid_config).mean;
  if (!(r.fid_baseline > 0.0))
    fail(ErrorKind::degenerate, "realness_ratio: baseline FID is zero");
  if (!(r.kid_baseline > 0.0))
    fail(ErrorKind::degenerate, "realness_ratio: baseline KID is not positive");
  r.fid_ratio = r.fid_modified / r.fid_baseline;
  r.kid_ratio = r.kid_modified / r.kid_baseline;
  return r;
}

// ---------------------------------------------------------------------------
// Sweep statistics

inline constexpr std::size_t kHistogramBins = 50;

struct SweepEntry {
  double alpha = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population std
  std::vector<std::size_t> counts;
};

struct SweepReport {
  std::vector<double> bin_edges;  // kHistogramBins + 1 edges over the global range
  std::vector<SweepEntry> entries;
};

inline SweepReport sweep_report(
    std::span<const std::pair<double, std::vector<double>>> scores_per_alpha) {
  require(!scores_per_alpha.empty(), "sweep_report: no entries");
  const std::size_t n = scores_per_alpha.front().second.size();
  require(n >= 1, "sweep_report: empty score vector");
  double lo = scores_per_alpha.front().second.front(), hi = lo;
  for (const auto& [alpha, s] : scores_per_alpha) {
    require(s.size() == n, "sweep_report: score vectors differ in length");
    for (double v : s) {
      require(std::isfinite(v), "sweep_report: non-finite score");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  SweepReport rep;
  rep.bin_edges.resize(kHistogramBins + 1);
  const double width = (hi - lo) / static_cast<double>(kHistogramBins);
  for (std::size_t k = 0; k <= kHistogramBins; ++k)
    rep.bin_edges[k] = lo + width * static_cast<double>(k);
  rep.bin_edges.back() = hi;

  for (const auto& [alpha, s] : scores_per_alpha) {
    SweepEntry e;
    e.alpha = alpha;
    e.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : s) var += (v - e.mean) * (v - e.mean);
    e.std = std::sqrt(var / static_cast<double>(n));
    e.counts.assign(kHistogramBins, 0);
    for (double v : s) {
      auto k = static_cast<std::size_t>((v - lo) / width);
      e.counts[std::min(k, kHistogramBins - 1)]++;
    }
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

}  // namespace memedit
