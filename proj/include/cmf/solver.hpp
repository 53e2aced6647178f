#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cmf/observed.hpp"
#include "cmf/types.hpp"

namespace cmf {

struct SolverOptions {
  Index max_iters = 500;
  double rel_tol = 1e-6;           // relative objective decrease
  double backtracking_shrink = 0.5;
  double initial_step = 1.0;
  std::uint64_t seed = 0;
};

/// Per-iteration record of a solver run; objectives are the full regularized
/// objective after each accepted step.
struct SolveTrace {
  std::vector<double> objectives;
  bool converged = false;
  Index newton_fallbacks = 0;
};

/// Thrown when an iterate produces a non-finite objective (bad step size or
/// invalid data).
struct DivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Smallest lambda for which the convex problem's solution is exactly zero:
/// the spectral norm of the data-term gradient at phi = 0.
double lambda_max(const ObservedMatrix& obs);

/// Log-spaced lambda grid from lambda_max(obs) down across `decades`.
std::vector<double> default_lambda_grid(const ObservedMatrix& obs,
                                        Index size = 20, double decades = 4.0);

/// Nuclear-norm regularized M-estimation by monotone proximal gradient with
/// backtracking line search. Returns the last iterate; throws DivergedError
/// on a non-finite objective.
NaturalParamMatrix solve_convex(const ObservedMatrix& obs, double lambda,
                                const SolverOptions& opts,
                                SolveTrace* trace = nullptr);

/// Factorized formulation at rank k: the same scaled data term plus
/// (lambda/2)(|U|_F^2 + |V|_F^2), minimized by alternating per-row damped
/// Newton fits (bisection fallback on the gradient when a Newton step fails
/// to descend). Deterministic given opts.seed.
FactorPair solve_nonconvex(const ObservedMatrix& obs, Index k, double lambda,
                           const SolverOptions& opts,
                           SolveTrace* trace = nullptr);

/// Objective of the factorized formulation, comparable to objective() at the
/// same lambda.
double nonconvex_objective(const ObservedMatrix& obs, const FactorPair& f,
                           double lambda);

/// Top left singular vectors, sign-fixed so each column's first
/// non-negligible entry is positive.
struct ConfounderBasis {
  Matrix u;                  // N x r_hat, orthonormal columns
  bool rank_warning = false; // r_hat exceeded the numerical rank of phi_hat
};

ConfounderBasis extract_confounders(const NaturalParamMatrix& phi_hat,
                                    Index r_hat);

/// Number of singular values above rel_threshold * sigma_1; 0 for the zero
/// matrix. rel_threshold must lie in (0,1).
Index effective_rank(const NaturalParamMatrix& phi_hat, double rel_threshold);

/// Regularization level suggested by sub-exponential theory,
/// 2 c0 sigma' sqrt(Np) sqrt(r Nbar log Nbar / |Omega|) with Nbar = max(N,p).
/// The leading constant is not identified; callers must supply c0.
double theory_lambda(double c0, double sigma_prime, Index n, Index p, Index r,
                     Index n_observed);

}  // namespace cmf
