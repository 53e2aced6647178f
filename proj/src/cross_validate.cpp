#include "cmf/cross_validate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmf/rng.hpp"

namespace cmf {

std::vector<int> cv_folds(Index n_entries, Index folds, std::uint64_t seed) {
  // Balanced assignment: shuffle [0,1,...,folds-1,0,1,...] by a seeded
  // Fisher-Yates pass.
  std::vector<int> fold_of(n_entries);
  for (Index t = 0; t < n_entries; ++t) fold_of[t] = static_cast<int>(t % folds);
  Rng rng(mix_seed(seed, "cv_folds"));
  for (Index t = n_entries - 1; t > 0; --t) {
    const Index s = static_cast<Index>(rng.below(static_cast<std::uint64_t>(t) + 1));
    std::swap(fold_of[t], fold_of[s]);
  }
  return fold_of;
}

NaturalParamMatrix solve_backend(const ObservedMatrix& obs, double lambda,
                                 const CvOptions& opts) {
  if (opts.backend == SolveBackend::Convex)
    return solve_convex(obs, lambda, opts.solver);
  Index k = opts.k;
  if (k <= 0) k = std::min({obs.rows(), obs.cols(), Index{20}});
  return solve_nonconvex(obs, k, lambda, opts.solver).product();
}

CvResult cross_validate(const ObservedMatrix& obs,
                        const std::vector<double>& lambda_grid, Index folds,
                        const CvOptions& opts) {
  if (lambda_grid.empty())
    throw std::invalid_argument("cross_validate: empty lambda grid");
  if (folds < 2) throw std::invalid_argument("cross_validate: folds must be >= 2");
  if (obs.n_observed() < folds)
    throw std::invalid_argument("cross_validate: fewer entries than folds");

  const auto fold_of = cv_folds(obs.n_observed(), folds, opts.solver.seed);

  CvResult result;
  result.lambda_grid = lambda_grid;
  result.heldout_mean.assign(lambda_grid.size(), 0.0);
  result.heldout_sd.assign(lambda_grid.size(), 0.0);

  std::vector<std::vector<double>> per_fold(lambda_grid.size(),
                                            std::vector<double>(folds, 0.0));
  for (Index f = 0; f < folds; ++f) {
    std::vector<char> keep(obs.n_observed());
    for (Index t = 0; t < obs.n_observed(); ++t) keep[t] = fold_of[t] != f;
    const ObservedMatrix train = obs.subset(keep);
    if (train.n_observed() == 0)
      throw std::invalid_argument("cross_validate: a fold holds every entry");

    for (Index i = 0; i < obs.rows() && !result.fold_coverage_warning; ++i)
      if (train.row_span(i).first == train.row_span(i).second)
        result.fold_coverage_warning = true;
    for (Index j = 0; j < obs.cols() && !result.fold_coverage_warning; ++j)
      if (train.col_span(j).first == train.col_span(j).second)
        result.fold_coverage_warning = true;

    for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
      const NaturalParamMatrix phi = solve_backend(train, lambda_grid[g], opts);
      double loss_sum = 0.0;
      Index held = 0;
      for (Index t = 0; t < obs.n_observed(); ++t) {
        if (fold_of[t] != f) continue;
        const Entry& e = obs.entries()[t];
        loss_sum += loss_value(obs.col_loss(e.col), e.value, phi(e.row, e.col));
        ++held;
      }
      per_fold[g][f] = held > 0 ? loss_sum / static_cast<double>(held) : 0.0;
    }
  }

  for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
    double mean = 0.0;
    for (Index f = 0; f < folds; ++f) mean += per_fold[g][f];
    mean /= static_cast<double>(folds);
    double var = 0.0;
    for (Index f = 0; f < folds; ++f) {
      const double d = per_fold[g][f] - mean;
      var += d * d;
    }
    var /= static_cast<double>(std::max<Index>(folds - 1, 1));
    result.heldout_mean[g] = mean;
    result.heldout_sd[g] = std::sqrt(var);
    if (!std::isfinite(mean))
      throw std::runtime_error("cross_validate: non-finite held-out loss");
  }

  // Minimal mean loss; ties resolved toward the larger lambda.
  std::size_t best = 0;
  for (std::size_t g = 1; g < lambda_grid.size(); ++g) {
    const bool better = result.heldout_mean[g] < result.heldout_mean[best];
    const bool tie = result.heldout_mean[g] == result.heldout_mean[best] &&
                     lambda_grid[g] > lambda_grid[best];
    if (better || tie) best = g;
  }
  result.chosen_lambda = lambda_grid[best];

  const NaturalParamMatrix full = solve_backend(obs, result.chosen_lambda, opts);
  result.chosen_rank = effective_rank(full, opts.rank_threshold);
  return result;
}

}  // namespace cmf
