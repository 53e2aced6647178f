#pragma once

#include <vector>

#include "cmf/observed.hpp"
#include "cmf/solver.hpp"

namespace cmf {

enum class SolveBackend { Convex, Nonconvex };

struct CvOptions {
  SolverOptions solver;
  SolveBackend backend = SolveBackend::Convex;
  Index k = 0;  // nonconvex factor rank; 0 means min(N, p, 20)
  double rank_threshold = 1e-7;
};

struct CvResult {
  std::vector<double> lambda_grid;
  std::vector<double> heldout_mean;  // per lambda, mean over folds
  std::vector<double> heldout_sd;    // per lambda, sd over folds
  double chosen_lambda = 0.0;
  Index chosen_rank = 0;
  /// True when some training fold left a row or column with no observations.
  bool fold_coverage_warning = false;
};

/// Partition of the canonical entry list into `folds` groups, uniform at
/// random given the seed; fold_of[t] in [0, folds).
std::vector<int> cv_folds(Index n_entries, Index folds, std::uint64_t seed);

/// Entry-holdout cross-validation over the lambda grid. Held-out loss is the
/// mean per-entry negative log-likelihood at the trained estimate; the
/// winning lambda minimizes the mean held-out loss with ties broken toward
/// the larger lambda. chosen_rank is the effective rank of the full-data
/// solution at the winner.
CvResult cross_validate(const ObservedMatrix& obs,
                        const std::vector<double>& lambda_grid, Index folds,
                        const CvOptions& opts);

/// Full-data solve at one lambda under the configured backend; the natural
/// parameter estimate in both cases.
NaturalParamMatrix solve_backend(const ObservedMatrix& obs, double lambda,
                                 const CvOptions& opts);

}  // namespace cmf
