#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cmf/causal.hpp"
#include "cmf/cross_validate.hpp"
#include "cmf/estimators.hpp"
#include "cmf/synth.hpp"

namespace cmf {

enum class Scenario { LinearGaussian, LinearBernoulli, Twins };

std::string scenario_name(Scenario s);

/// Knobs shared by every pipeline invocation inside one experiment.
struct PipelineOptions {
  CvOptions mf;                     // matrix-factorization backend + solver
  Index mf_grid_size = 8;
  double mf_grid_decades = 3.0;
  Index mf_folds = 5;
  Index penalty_folds = 5;          // ridge/lasso penalty selection
  Index penalty_grid_size = 10;
  std::pair<double, double> clip = {0.01, 0.99};
  std::uint64_t seed = 0;           // stream for fold draws inside pipelines
};

/// One replication grid: scenario x (N, p) schedule x missingness probs x
/// estimator list, `replications` times each.
struct ExperimentConfig {
  Scenario scenario = Scenario::LinearGaussian;
  std::vector<std::pair<Index, Index>> schedule;  // (N, p)
  std::vector<double> missing_probs = {0.0};
  std::vector<std::string> estimators;
  Index replications = 50;
  std::uint64_t seed = 0;
  GenerativeSpec generative = GenerativeSpec::defaults();
  Index twins_pairs = 3000;
  PipelineOptions pipeline;

  void validate() const;

  /// Parse the documented JSON schema; CONFOUND_MF_SEED in the environment
  /// overrides the config seed.
  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
};

struct ResultRow {
  std::string scenario;
  Index n = 0;
  Index p = 0;
  double missing_prob = 0.0;
  std::string estimator;
  Index replications = 0;
  Index failures = 0;
  double tau_true = 0.0;
  double tau_mean = 0.0;
  double rmse = 0.0;
  double rmse_rel = 0.0;
  double band_rel = 0.0;  // 2-sd band of rmse_rel (delta method)
  std::vector<double> taus;  // successful replication estimates, in rep order
};

/// Everything one replication needs: the drawn records plus the ground truth.
struct ReplicationData {
  CausalDataset data;
  ObservedMatrix observed;
  double tau_true = 0.0;
};

/// Deterministic per-(cell, replication) data draw; exposed so tests can
/// reproduce exactly what run_experiment feeds each estimator.
ReplicationData draw_replication(const ExperimentConfig& config, Index n, Index p,
                                 double missing_prob, Index rep);

/// Estimator dispatch. Known names: oracle, ols, ridge, lasso, mf, mode_ols,
/// lr, dr, match, psmatch, mf_lr, mf_dr, mf_match, mf_psmatch, mode_lr,
/// mode_dr. Throws std::invalid_argument for an unknown name and
/// std::runtime_error when a complete-data estimator meets missing entries.
AteReport estimator_pipeline(const std::string& name, const CausalDataset& data,
                             const ObservedMatrix& observed,
                             const PipelineOptions& options);

/// Run the whole grid. Replications are independent tasks executed by a
/// work queue with `jobs` workers; results are merged by replication index,
/// so the output is identical for any job count. A failed replication is
/// recorded in the row's failure count, never aborting the sweep.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, Index jobs = 1);

/// CSV with a leading '#' header comment documenting the band formula;
/// deterministic byte-for-byte given identical rows.
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);

}  // namespace cmf
