#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>

#include "cmf/causal.hpp"
#include "cmf/types.hpp"

namespace cmf {

/// Least squares of Y on [intercept, T, covariates]; tau_hat is T's
/// coefficient. Throws on rank deficiency, naming the collinear columns.
AteReport ols_ate(const CausalDataset& data);

/// Coefficients of a penalized linear outcome model, mapped back to the
/// original covariate scale so predictions are intercept + b*T + x'coefs.
struct LinearFit {
  double intercept = 0.0;
  double treatment_coef = 0.0;
  Vector covariate_coefs;
};

/// Ridge on standardized covariates; intercept and treatment unpenalized.
/// penalty = 0 reproduces ols_ate.
AteReport ridge_ate(const CausalDataset& data, double penalty);
LinearFit ridge_fit(const CausalDataset& data, double penalty);

/// Lasso by cyclic coordinate descent (objective (1/2N)|r|^2 + penalty*|c|_1
/// on standardized covariates; intercept and treatment unpenalized,
/// tolerance 1e-8 on coefficient change).
AteReport lasso_ate(const CausalDataset& data, double penalty);
LinearFit lasso_fit(const CausalDataset& data, double penalty);

/// Smallest lasso penalty that zeroes every covariate coefficient.
double lasso_penalty_max(const CausalDataset& data);

/// Thrown by logistic fits when the data are perfectly separated; carries the
/// separating direction (unit vector over [intercept, covariates]).
struct SeparationError : std::runtime_error {
  explicit SeparationError(Vector dir)
      : std::runtime_error("logistic regression: perfect separation"),
        direction(std::move(dir)) {}
  Vector direction;
};

/// Propensity scores by logistic regression (IRLS with damping, mean-gradient
/// norm tolerance 1e-8). Intercept included; covariates may have 0 columns.
Vector logistic_propensity(const Matrix& covariates, const Vector& treatment);

/// Logistic-model coefficients [intercept, covariates] behind
/// logistic_propensity; exposed for outcome modelling on binary outcomes.
Vector logistic_fit(const Matrix& covariates, const Vector& labels01);

/// Hajek inverse-propensity estimator; propensities are clipped to
/// [clip.first, clip.second] and the clip count is reported.
AteReport ipw_ate(const CausalDataset& data, const Vector& propensities,
                  std::pair<double, double> clip = {0.01, 0.99});

/// AIPW: per-arm linear outcome models plus inverse-propensity residual
/// correction. Equals the regression-imputation estimate when residuals
/// vanish, whatever the propensities.
AteReport doubly_robust_ate(const CausalDataset& data, const Vector& propensities);

/// 1-nearest-neighbor matching with replacement on Mahalanobis distance
/// (pooled covariate covariance); every unit is matched to the nearest
/// opposite-arm unit, ties to the lowest index.
AteReport mahalanobis_match_ate(const CausalDataset& data);

/// Same matching estimator with distance |e_i - e_j| on propensity scores.
AteReport propensity_match_ate(const CausalDataset& data, const Vector& propensities);

/// Risk-difference ATE from a logistic outcome model on [1, T, covariates]:
/// mean over units of p(T=1, x) - p(T=0, x). Used for binary outcomes where
/// a linear model would leave the probability scale.
AteReport logistic_ate(const CausalDataset& data);

/// Population moments entering the asymptotic-bias formula.
struct UtMoments {
  Vector t_u;    // E[T_i U_i], r
  Matrix u_u;    // E[U_i U_i'], r x r
  double t_sq = 0.0;  // E[T_i^2]
  Vector t_u_se;      // Monte Carlo standard errors (empty if exact)
  double t_sq_se = 0.0;
};

/// Monte Carlo moments of (T, U) for U_ij ~ N(0,1), T|U ~
/// Bernoulli(sigmoid(beta'U)); standard errors reported per component.
UtMoments monte_carlo_moments(const Vector& beta, Index draws = 1'000'000,
                              std::uint64_t seed = 0);

/// Closed-form asymptotic bias of least squares on the noisy covariates
/// under the additive measurement model with loadings v and noise sd
/// sigma_w. Throws on singular moment matrices.
double bias_oracle(const GenerativeSpec& spec, const UtMoments& moments);

/// Confounder estimate with known loadings: X v (v'v)^{-1}.
Matrix known_v_estimate(const Matrix& x, const Matrix& v);

}  // namespace cmf
