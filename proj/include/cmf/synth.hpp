#pragma once

#include <cstdint>
#include <vector>

#include "cmf/causal.hpp"
#include "cmf/observed.hpp"
#include "cmf/types.hpp"

namespace cmf {

/// Output of the linear structural model generator: the causal records, the
/// covariate matrix as an (initially fully) observed matrix, and the loading
/// matrix actually used.
struct ScmDraw {
  CausalDataset data;
  ObservedMatrix observed;
  Matrix loadings;  // p x r
};

/// p x r loading matrix with i.i.d. standard normal entries. Kept separate
/// from gen_linear_scm so an experiment can hold V fixed across replications.
Matrix draw_loadings(Index p, Index r, std::uint64_t seed);

/// Linear structural model: U_ij ~ N(0,1); T|U ~ Bernoulli(sigmoid(beta'U));
/// Y ~ N(alpha'U + tau T, outcome_noise_sd^2); covariates X_ij either
/// N(U_i'V_j, noise_sd^2) or +/-1 Bernoulli(sigmoid(U_i'V_j)). Deterministic
/// per seed. If spec.loadings is empty, V is drawn from a dedicated
/// sub-stream of the seed.
ScmDraw gen_linear_scm(Index n, Index p, const GenerativeSpec& spec,
                       std::uint64_t seed);

/// Remove each observed entry independently with probability prob. The
/// per-entry coin is addressed by (seed, i, j), so the result is independent
/// of entry storage order.
ObservedMatrix inject_mcar(const ObservedMatrix& obs, double prob,
                           std::uint64_t seed);

/// One twin pair: gestation-bucket confounder, weights and per-twin first-year
/// mortality outcomes.
struct TwinsRecord {
  Index pair_id = 0;
  int gestat10 = 0;  // 0..9
  double weight_lighter = 0.0;
  double weight_heavier = 0.0;
  int mortality_lighter = 0;
  int mortality_heavier = 0;
};

struct TwinsDraw {
  CausalDataset data;       // covariates = proxy columns, outcome = observed mortality
  ObservedMatrix observed;  // same proxies as an observed matrix (post-MCAR if any)
};

/// Semi-synthetic twins protocol: treatment T|U ~
/// Bernoulli(sigmoid(5(U/10 - 0.1))) with U = GESTAT10; the heavier twin's
/// outcome is observed iff T = 1. Proxies are p copies of GESTAT10, each
/// entry independently perturbed with probability perturb_prob to a uniform
/// draw from {0..9}; missing_prob applies MCAR afterwards.
TwinsDraw twins_semi_synth(const std::vector<TwinsRecord>& records, Index p,
                           std::uint64_t seed, double perturb_prob = 0.5,
                           double missing_prob = 0.0);

/// Desk-scale stand-in for the real twins registry: U uniform on {0..9},
/// mortality risks sigmoid(a_t + b U) decreasing in gestation, heavier-twin
/// effect a_1 < a_0.
std::vector<TwinsRecord> synth_twins_standin(Index n_pairs, std::uint64_t seed);

/// Exact ATE of the stand-in's generative law (average of the risk
/// differences over the uniform confounder grid).
double standin_true_ate();

/// Sample ATE of a concrete record set: mean(mortality_heavier - mortality_lighter).
double records_sample_ate(const std::vector<TwinsRecord>& records);

}  // namespace cmf
