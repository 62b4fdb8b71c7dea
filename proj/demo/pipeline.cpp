// End-to-end library use: synthesize a world, fit the direction, edit along it
// and summarize how the oracle scores move.

#include <cstdio>
#include <vector>

#include "memedit/memedit.hpp"

int main() {
  using namespace memedit;

  const auto world = make_world(64, 42, 0.05);
  Matrix x = sample_latents(world, SamplerConfig(4000));
  auto s = score(world, x);
  const auto data = LabeledDataset::from_scores(std::move(x), std::move(s), ThresholdKind::mean);
  const auto [train, val] = split(data, {0.8, 42});
  const Hyperplane h = fit_and_evaluate(train, val).hyperplane;
  std::printf("val accuracy %.4f, cos to true direction %.4f\n", h.val_accuracy,
              dot(h.normal, world.true_direction));

  const Matrix probe = sample_latents(world, SamplerConfig(200, std::nullopt, 1));
  std::vector<std::pair<double, std::vector<double>>> per_alpha;
  for (double alpha : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < probe.rows(); ++i)
      scores.push_back(noiseless_score(world, edit(probe.row(i), h, alpha)));
    per_alpha.emplace_back(alpha, std::move(scores));
  }
  for (const auto& e : sweep_report(per_alpha).entries)
    std::printf("alpha %+.1f  mean %.4f  std %.4f\n", e.alpha, e.mean, e.std);

  const auto k = kendall_tau(per_alpha.front().second, per_alpha.back().second);
  std::printf("rank agreement between alpha=-2 and alpha=+2: tau %.4f\n", k);
}
