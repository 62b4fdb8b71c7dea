#pragma once

// L2-regularized logistic regression fitted by full-batch gradient descent
// with backtracking, exported as a unit-normal separating hyperplane.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "memedit/dataset.hpp"
#include "memedit/error.hpp"
#include "memedit/matrix.hpp"
#include "memedit/tensor_io.hpp"

namespace memedit {

struct FitConfig {
  double l2_lambda = 1e-4;
  int max_iters = 500;
  double tol = 1e-6;           // stop once the gradient norm falls below this
  double learning_rate = 0.1;  // initial step of every backtracking search
  bool standardize = true;
  unsigned threads = 1;

  void validate() const {
    require(l2_lambda >= 0.0 && std::isfinite(l2_lambda), "l2_lambda must be >= 0");
    require(max_iters > 0, "max_iters must be positive");
    require(tol > 0.0, "tol must be positive");
    require(learning_rate > 0.0 && std::isfinite(learning_rate),
            "learning_rate must be positive");
    require(threads >= 1, "threads must be >= 1");
  }
};

/// Separating hyperplane {x : normal . x + bias = 0} with a unit normal. The
/// normal is the edit direction; `bias` only matters for classification.
struct Hyperplane {
  std::vector<double> normal;
  double bias = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::string space_tag = "z";  // "z" or "w+"
  std::optional<LayerStructure> layer_structure;
  std::map<std::string, std::string> meta;

  std::size_t dim() const { return normal.size(); }
};

inline HyperplaneRecord to_record(const Hyperplane& h) {
  HyperplaneRecord r{h.dim(), h.normal, h.bias, h.meta};
  r.meta["space"] = h.space_tag;
  r.meta["train_accuracy"] = detail::format_double(h.train_accuracy);
  r.meta["val_accuracy"] = detail::format_double(h.val_accuracy);
  if (h.layer_structure) r.meta["layer_structure"] = h.layer_structure->to_string();
  return r;
}

inline Hyperplane from_record(const HyperplaneRecord& r) {
  validate(r);
  Hyperplane h;
  h.normal = r.normal;
  h.bias = r.bias;
  h.meta = r.meta;
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = h.meta.find(key);
    if (it == h.meta.end()) return std::nullopt;
    std::string v = it->second;
    h.meta.erase(it);
    return v;
  };
  if (auto s = take("space")) h.space_tag = *s;
  if (auto s = take("train_accuracy")) detail::parse_double(*s, h.train_accuracy);
  if (auto s = take("val_accuracy")) detail::parse_double(*s, h.val_accuracy);
  if (auto s = take("layer_structure")) {
    h.layer_structure = parse_layer_structure(*s);
    require(h.layer_structure->dim() == h.dim(),
            "hyperplane: layer_structure does not match dim");
  }
  return h;
}

/// Eq. 1 distance: normal . x, deliberately without the bias.
inline double direction_score(const Hyperplane& h, std::span<const double> x) {
  return dot(h.normal, x);
}

inline bool predict(const Hyperplane& h, std::span<const double> x) {
  return dot(h.normal, x) + h.bias > 0.0;
}

inline double accuracy(const Hyperplane& h, const LabeledDataset& data) {
  require(h.dim() == data.dim(), "accuracy: hyperplane dim " + std::to_string(h.dim()) +
                                     " vs data dim " + std::to_string(data.dim()));
  require(data.size() > 0, "accuracy: empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    hits += predict(h, data.latents().row(i)) == (data.labels()[i] == 1);
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace detail {

inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Runs body(chunk, begin, end) over `chunks` contiguous row blocks.
template <class Body>
void for_each_chunk(std::size_t n, unsigned chunks, Body&& body) {
  chunks = static_cast<unsigned>(std::clamp<std::size_t>(chunks, 1, std::max<std::size_t>(n, 1)));
  if (chunks == 1) {
    body(0u, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (unsigned c = 0; c < chunks; ++c)
    pool.emplace_back([&, c] { body(c, n * c / chunks, n * (c + 1) / chunks); });
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Mean logistic loss plus a ridge term over a fixed design matrix. The
/// bias is not regularized. Partial sums are combined in chunk order, so the
/// result is bit-identical for a given thread count.
class LogisticObjective {
 public:
  /// `penalty_weights`, when given, scales the ridge term per coordinate:
  /// (lambda/2) sum c_j w_j^2.
  LogisticObjective(const Matrix& x, std::span<const std::uint8_t> labels, double lambda,
                    unsigned threads = 1, std::vector<double> penalty_weights = {})
      : x_(x),
        labels_(labels),
        lambda_(lambda),
        threads_(threads),
        penalty_(std::move(penalty_weights)) {
    require(x.rows() == labels.size(), "objective: row/label count mismatch");
    if (penalty_.empty()) penalty_.assign(x.cols(), 1.0);
    require(penalty_.size() == x.cols(), "objective: penalty weight count mismatch");
  }

  std::size_t dim() const { return x_.cols(); }
  std::size_t size() const { return x_.rows(); }

  void logits(std::span<const double> w, double b, std::vector<double>& out) const {
    out.resize(size());
    detail::for_each_chunk(size(), threads_, [&](unsigned, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const auto row = x_.row(i);
        double s = b;
        for (std::size_t j = 0; j < row.size(); ++j) s += w[j] * row[j];
        out[i] = s;
      }
    });
  }

  double loss_from_logits(std::span<const double> w, std::span<const double> z) const {
    double reg = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) reg += penalty_[j] * w[j] * w[j];
    return data_loss_from_logits(z) + 0.5 * lambda_ * reg;
  }

  void gradient_from_logits(std::span<const double> w, std::span<const double> z,
                            std::vector<double>& grad_w, double& grad_b) const {
    const std::size_t d = dim();
    std::vector<std::vector<double>> partial(threads_, std::vector<double>(d, 0.0));
    std::vector<double> partial_b(threads_, 0.0);
    detail::for_each_chunk(size(), threads_, [&](unsigned c, std::size_t lo, std::size_t hi) {
      auto& g = partial[c];
      double gb = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const double r = detail::sigmoid(z[i]) - (labels_[i] ? 1.0 : 0.0);
        const auto row = x_.row(i);
        for (std::size_t j = 0; j < d; ++j) g[j] += r * row[j];
        gb += r;
      }
      partial_b[c] = gb;
    });
    const double inv_n = 1.0 / static_cast<double>(size());
    grad_w.assign(d, 0.0);
    grad_b = 0.0;
    for (std::size_t c = 0; c < partial.size(); ++c) {
      for (std::size_t j = 0; j < d; ++j) grad_w[j] += partial[c][j];
      grad_b += partial_b[c];
    }
    for (std::size_t j = 0; j < d; ++j) grad_w[j] = grad_w[j] * inv_n + lambda_ * penalty_[j] * w[j];
    grad_b *= inv_n;
  }

  /// Mean logistic loss only, without the ridge term.
  double data_loss_from_logits(std::span<const double> z) const {
    std::vector<double> partial(threads_, 0.0);
    detail::for_each_chunk(size(), threads_, [&](unsigned c, std::size_t lo, std::size_t hi) {
      double s = 0.0;
      for (std::size_t i = lo; i < hi; ++i)
        s += detail::softplus(z[i]) - (labels_[i] ? z[i] : 0.0);
      partial[c] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total / static_cast<double>(size());
  }

  double lambda() const { return lambda_; }
  std::span<const double> penalty_weights() const { return penalty_; }

  double loss(std::span<const double> w, double b) const {
    std::vector<double> z;
    logits(w, b, z);
    return loss_from_logits(w, z);
  }

  void gradient(std::span<const double> w, double b, std::vector<double>& grad_w,
                double& grad_b) const {
    std::vector<double> z;
    logits(w, b, z);
    gradient_from_logits(w, z, grad_w, grad_b);
  }

 private:
  const Matrix& x_;
  std::span<const std::uint8_t> labels_;
  double lambda_;
  unsigned threads_;
  std::vector<double> penalty_;
};

struct FitResult {
  Hyperplane hyperplane;
  std::vector<double> loss_history;  // entry 0 is the loss at the zero start
  int iterations = 0;
  bool converged = false;            // gradient norm reached tol
  std::vector<double> raw_weights;   // pre-normalization, original coordinates
  double raw_bias = 0.0;
};

inline FitResult fit(const LabeledDataset& train, const FitConfig& config = {}) {
  config.validate();
  const std::size_t n = train.size();
  const std::size_t d = train.dim();
  require(d >= 1, "fit: latent dimension must be >= 1");
  std::size_t positives = 0;
  for (auto l : train.labels()) positives += l;
  if (positives == 0 || positives == n)
    fail(ErrorKind::degenerate, "fit: training data contains a single class");

  // Per-feature standardization with training statistics.
  std::vector<double> mu(d, 0.0), sd(d, 1.0);
  const Matrix& raw = train.latents();
  if (config.standardize) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = raw.row(i);
      for (std::size_t j = 0; j < d; ++j) mu[j] += row[j];
    }
    for (double& m : mu) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = raw.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double c = row[j] - mu[j];
        var[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double s = std::sqrt(var[j] / static_cast<double>(n));
      sd[j] = s > 0.0 ? s : 1.0;
    }
  }
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = raw.row(i);
    auto dst = x.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] = (src[j] - mu[j]) / sd[j];
  }

  // The ridge term is on the raw-coordinate weights w_j / sd_j, so
  // standardization only preconditions the descent and never changes the
  // minimizer.
  std::vector<double> penalty(d);
  for (std::size_t j = 0; j < d; ++j) penalty[j] = 1.0 / (sd[j] * sd[j]);
  LogisticObjective obj(x, train.labels(), config.l2_lambda, config.threads, std::move(penalty));
  std::vector<double> w(d, 0.0), w_try(d), grad, z, z_try;
  double b = 0.0, grad_b = 0.0;
  obj.logits(w, b, z);
  double loss = obj.loss_from_logits(w, z);
  if (!std::isfinite(loss)) fail(ErrorKind::numeric, "fit: initial loss is not finite");

  FitResult result;
  result.loss_history.push_back(loss);
  constexpr double kSufficientDecrease = 1e-4;
  constexpr int kMaxHalvings = 60;
  const auto pen = obj.penalty_weights();
  const double lambda = config.l2_lambda;

  for (int it = 0; it < config.max_iters; ++it) {
    obj.gradient_from_logits(w, z, grad, grad_b);
    double g2 = grad_b * grad_b;
    for (double g : grad) g2 += g * g;
    if (!std::isfinite(g2)) fail(ErrorKind::numeric, "fit: gradient diverged");
    if (std::sqrt(g2) <= config.tol) {
      result.converged = true;
      break;
    }
    // Step on the logistic term, then the exact proximal map of the ridge
    // term; a stiff penalty on low-variance features cannot force tiny steps.
    double step = config.learning_rate;
    bool accepted = false;
    double loss_try = loss;
    bool saw_finite = false;
    for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
      double moved = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double data_grad = grad[j] - lambda * pen[j] * w[j];
        w_try[j] = (w[j] - step * data_grad) / (1.0 + step * lambda * pen[j]);
        moved += (w_try[j] - w[j]) * (w_try[j] - w[j]);
      }
      const double b_try = b - step * grad_b;
      moved += (b_try - b) * (b_try - b);
      obj.logits(w_try, b_try, z_try);
      loss_try = obj.loss_from_logits(w_try, z_try);
      if (!std::isfinite(loss_try)) continue;
      saw_finite = true;
      if (loss_try <= loss - kSufficientDecrease * moved / step) {
        std::swap(w, w_try);
        std::swap(z, z_try);
        b = b_try;
        accepted = true;
        break;
      }
    }
    if (!saw_finite) fail(ErrorKind::numeric, "fit: loss became non-finite");
    if (!accepted) break;  // no representable decrease left
    loss = loss_try;
    result.loss_history.push_back(loss);
    result.iterations = it + 1;
  }

  // Fold standardization back into raw coordinates: w.(x-mu)/sd + b.
  std::vector<double> theta(d);
  double bias = b;
  for (std::size_t j = 0; j < d; ++j) {
    theta[j] = w[j] / sd[j];
    bias -= theta[j] * mu[j];
  }
  const double norm = norm2(theta);
  if (!(norm > 0.0) || !std::isfinite(norm))
    fail(ErrorKind::degenerate, "fit: weight vector is zero at convergence");

  Hyperplane& h = result.hyperplane;
  h.normal.resize(d);
  for (std::size_t j = 0; j < d; ++j) h.normal[j] = theta[j] / norm;
  h.bias = bias / norm;
  h.layer_structure = train.layer_structure();
  h.space_tag = h.layer_structure ? "w+" : "z";
  h.train_accuracy = accuracy(h, train);
  h.meta["l2_lambda"] = detail::format_double(config.l2_lambda);
  h.meta["iterations"] = std::to_string(result.iterations);
  h.meta["final_loss"] = detail::format_double(loss);
  h.meta["converged"] = result.converged ? "true" : "false";
  h.meta["standardize"] = config.standardize ? "true" : "false";
  if (train.threshold()) h.meta["threshold_value"] = detail::format_double(*train.threshold());
  result.raw_weights = std::move(theta);
  result.raw_bias = bias;
  return result;
}

/// Fits on `train` and records held-out accuracy on `val`.
inline FitResult fit_and_evaluate(const LabeledDataset& train, const LabeledDataset& val,
                                  const FitConfig& config = {}) {
  auto r = fit(train, config);
  r.hyperplane.val_accuracy = accuracy(r.hyperplane, val);
  return r;
}

struct SpaceComparison {
  Hyperplane z_hyperplane;
  Hyperplane w_hyperplane;
  double z_val_accuracy = 0.0;
  double w_val_accuracy = 0.0;
  double difference = 0.0;  // w+ minus z
};

/// Fits plain and extended latents of the same samples on an identical split.
inline SpaceComparison compare_spaces(const LabeledDataset& z_data,
                                      const LabeledDataset& w_data,
                                      const FitConfig& config = {},
                                      const SplitSpec& split_spec = {}) {
  require(z_data.size() == w_data.size(), "compare_spaces: sample counts differ");
  require(z_data.labels() == w_data.labels(), "compare_spaces: labels differ between spaces");
  const auto idx = split_indices(z_data.size(), split_spec);
  auto z = fit_and_evaluate(z_data.subset(idx.train), z_data.subset(idx.val), config);
  auto w = fit_and_evaluate(w_data.subset(idx.train), w_data.subset(idx.val), config);
  SpaceComparison out;
  out.z_val_accuracy = z.hyperplane.val_accuracy;
  out.w_val_accuracy = w.hyperplane.val_accuracy;
  out.difference = out.w_val_accuracy - out.z_val_accuracy;
  out.z_hyperplane = std::move(z.hyperplane);
  out.z_hyperplane.space_tag = "z";
  out.w_hyperplane = std::move(w.hyperplane);
  out.w_hyperplane.space_tag = "w+";
  return out;
}

}  // namespace memedit
