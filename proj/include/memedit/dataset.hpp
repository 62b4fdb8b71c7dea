#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memedit/error.hpp"
#include "memedit/matrix.hpp"
#include "memedit/rng.hpp"

namespace memedit {

/// Row layout of a flattened extended latent: `layers` rows of `per_layer_dim`.
struct LayerStructure {
  std::size_t layers = 0;
  std::size_t per_layer_dim = 0;

  std::size_t dim() const { return layers * per_layer_dim; }
  std::string to_string() const {
    return std::to_string(layers) + "x" + std::to_string(per_layer_dim);
  }
  friend bool operator==(const LayerStructure&, const LayerStructure&) = default;
};

/// Parses "18x512".
inline LayerStructure parse_layer_structure(const std::string& text) {
  const auto x = text.find('x');
  require(x != std::string::npos, "layer structure must look like LxD, got '" + text + "'");
  try {
    std::size_t p1 = 0, p2 = 0;
    const auto l = std::stoull(text.substr(0, x), &p1);
    const auto d = std::stoull(text.substr(x + 1), &p2);
    require(p1 == x && p2 == text.size() - x - 1 && l > 0 && d > 0,
            "bad layer structure '" + text + "'");
    return {static_cast<std::size_t>(l), static_cast<std::size_t>(d)};
  } catch (const std::logic_error&) {
    fail(ErrorKind::validation, "bad layer structure '" + text + "'");
  }
}

enum class ThresholdKind { mean, median };

inline const char* to_string(ThresholdKind k) {
  return k == ThresholdKind::mean ? "mean" : "median";
}

inline ThresholdKind parse_threshold_kind(const std::string& s) {
  if (s == "mean") return ThresholdKind::mean;
  if (s == "median") return ThresholdKind::median;
  fail(ErrorKind::validation, "threshold must be 'mean' or 'median', got '" + s + "'");
}

struct Labeling {
  std::vector<std::uint8_t> labels;
  double threshold = 0.0;
};

/// Label 1 iff score > threshold. Ties with the threshold go to the low class.
inline Labeling label_by_threshold(std::span<const double> scores, ThresholdKind kind) {
  const std::size_t n = scores.size();
  require(n >= 2, "labeling needs at least 2 scores");
  Labeling out;
  if (kind == ThresholdKind::mean) {
    double s = 0.0;
    for (double v : scores) s += v;
    out.threshold = s / static_cast<double>(n);
  } else {
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    out.threshold = n % 2 == 1 ? sorted[n / 2]
                               : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  out.labels.resize(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = scores[i] > out.threshold ? 1 : 0;
    positives += out.labels[i];
  }
  if (positives == 0 || positives == n)
    fail(ErrorKind::degenerate, std::string("degenerate labeling: ") +
                                    (positives == 0 ? "no" : "no negative") +
                                    " samples on the high side of the " +
                                    to_string(kind) + " threshold");
  return out;
}

class LabeledDataset {
 public:
  LabeledDataset() = default;

  /// Latents are read as rows x cols; a 3-D n x L x D input is taken as n rows.
  LabeledDataset(Matrix latents, std::vector<double> scores,
                 std::vector<std::uint8_t> labels,
                 std::optional<LayerStructure> layers = std::nullopt)
      : latents_(std::move(latents)),
        scores_(std::move(scores)),
        labels_(std::move(labels)),
        layers_(layers) {
    if (latents_.ndim() != 2) latents_ = latents_.reshaped({latents_.rows(), latents_.cols()});
    require(scores_.size() == latents_.rows() && labels_.size() == latents_.rows(),
            "dataset: latents, scores and labels disagree on sample count (" +
                std::to_string(latents_.rows()) + ", " + std::to_string(scores_.size()) +
                ", " + std::to_string(labels_.size()) + ")");
    for (auto l : labels_) require(l <= 1, "dataset: labels must be 0 or 1");
    if (layers_)
      require(layers_->dim() == latents_.cols(),
              "dataset: layer structure " + layers_->to_string() +
                  " does not match latent dimension " + std::to_string(latents_.cols()));
  }

  /// Scores are labeled with `kind`; the resulting threshold is kept.
  static LabeledDataset from_scores(Matrix latents, std::vector<double> scores,
                                    ThresholdKind kind,
                                    std::optional<LayerStructure> layers = std::nullopt) {
    auto lab = label_by_threshold(scores, kind);
    LabeledDataset ds(std::move(latents), std::move(scores), std::move(lab.labels), layers);
    ds.threshold_ = lab.threshold;
    return ds;
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return latents_.cols(); }
  const Matrix& latents() const { return latents_; }
  const std::vector<double>& scores() const { return scores_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::optional<LayerStructure>& layer_structure() const { return layers_; }
  std::optional<double> threshold() const { return threshold_; }

  LabeledDataset subset(std::span<const std::size_t> idx) const {
    std::vector<double> s;
    std::vector<std::uint8_t> l;
    s.reserve(idx.size());
    l.reserve(idx.size());
    for (auto i : idx) {
      s.push_back(scores_[i]);
      l.push_back(labels_[i]);
    }
    LabeledDataset out(latents_.select_rows(idx), std::move(s), std::move(l), layers_);
    out.threshold_ = threshold_;
    return out;
  }

 private:
  Matrix latents_;
  std::vector<double> scores_;
  std::vector<std::uint8_t> labels_;
  std::optional<LayerStructure> layers_;
  std::optional<double> threshold_;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Fisher-Yates over xoshiro256** seeded by splitmix64(seed); the first
/// ceil(train_fraction * n) permuted indices form the training side.
inline SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  require(n >= 10, "split needs at least 10 samples, got " + std::to_string(n));
  require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
          "train_fraction must be in (0, 1)");
  Xoshiro256 rng(spec.seed);
  auto perm = permutation(n, rng);
  const auto n_train =
      static_cast<std::size_t>(std::ceil(spec.train_fraction * static_cast<double>(n)));
  require(n_train < n, "split leaves the validation side empty");
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return out;
}

inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                       const SplitSpec& spec) {
  const auto idx = split_indices(ds.size(), spec);
  return {ds.subset(idx.train), ds.subset(idx.val)};
}

}  // namespace memedit
