#pragma once

#include <map>
#include <optional>
#include <string>

#include "cmf/types.hpp"

namespace cmf {

/// Aligned covariates / treatment / outcome records, optionally carrying the
/// generative ground truth for synthetic experiments.
struct CausalDataset {
  Matrix covariates;  // N x d (raw proxies, recovered confounders, or truth)
  Vector treatment;   // N, values in {0,1}
  Vector outcome;     // N
  std::optional<Matrix> true_confounders;          // N x r
  std::optional<std::pair<Vector, Vector>> potential_outcomes;  // (Y(0), Y(1))

  Index n() const { return treatment.size(); }

  /// Throws std::invalid_argument unless lengths agree, treatment is binary
  /// and both arms are non-empty.
  void validate_for_ate() const;
};

struct AteReport {
  std::string method;
  double tau_hat = 0.0;
  Index n_used = 0;
  std::map<std::string, double> diagnostics;
};

/// Parameters of the linear structural model used throughout the synthetic
/// experiments: U_ij ~ N(0,1), T|U ~ Bernoulli(sigmoid(beta'U)),
/// Y = alpha'U + tau*T + N(0, outcome_noise_sd^2), and covariates whose
/// natural parameters are rows of U V'.
struct GenerativeSpec {
  Index r = 5;
  Vector alpha;             // r
  Vector beta;              // r
  double tau = 2.0;
  double outcome_noise_sd = 1.0;
  enum class Noise { Gaussian, Bernoulli } noise = Noise::Gaussian;
  double noise_sd = 2.2360679774997896;  // sqrt(5), additive-Gaussian default
  Matrix loadings;          // p x r; empty means "draw per seed"

  /// alpha = [-2, 3, -2, -3, -2], beta = [1, 2, 2, 2, 2], tau = 2, r = 5
  /// (repeated cyclically when r != 5).
  static GenerativeSpec defaults(Index r = 5);

  void validate() const;
};

}  // namespace cmf
