// Command-line front end: matrix completion, diagnostics, ATE estimation,
// synthetic data generation and the replication harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "cmf/cross_validate.hpp"
#include "cmf/estimators.hpp"
#include "cmf/harness.hpp"
#include "cmf/ingest.hpp"
#include "cmf/solver.hpp"
#include "cmf/subspace.hpp"
#include "cmf/synth.hpp"

namespace {

using namespace cmf;

struct CompleteArgs {
  std::string input;
  std::string schema;
  std::string loss = "auto";
  double lambda = -1.0;
  bool use_cv = false;
  Index folds = 5;
  double rank_threshold = 1e-7;
  std::uint64_t seed = 0;
  std::string output = "phi.csv";
  std::string confounders = "U.csv";
  std::string formulation = "convex";
  Index k = 0;
  Index grid_size = 20;
  double grid_decades = 4.0;
  Index max_iters = 500;
  double rel_tol = 1e-6;
};

int run_complete(const CompleteArgs& args) {
  if (!args.use_cv && args.lambda < 0.0)
    throw CLI::ValidationError("complete needs --lambda <v> or --cv");
  ColumnSchema schema;
  if (!args.schema.empty()) schema = read_schema_json(args.schema);
  ObservedMatrix obs = read_csv_matrix(args.input, schema);
  if (args.loss != "auto") {
    // Force one family on every column.
    std::vector<LossKind> losses(obs.cols(), [&] {
      if (args.loss == "gaussian") return LossKind::gaussian();
      if (args.loss == "bernoulli") return LossKind::bernoulli();
      if (args.loss == "poisson") return LossKind::poisson();
      throw CLI::ValidationError("--loss must be auto|gaussian|bernoulli|poisson");
    }());
    obs = ObservedMatrix(obs.rows(), obs.cols(), obs.entries(), losses, obs.na_policy());
  }

  CvOptions opts;
  opts.backend =
      args.formulation == "nonconvex" ? SolveBackend::Nonconvex : SolveBackend::Convex;
  opts.k = args.k;
  opts.rank_threshold = args.rank_threshold;
  opts.solver.seed = args.seed;
  opts.solver.max_iters = args.max_iters;
  opts.solver.rel_tol = args.rel_tol;

  try {
    double lambda = args.lambda;
    Index rank = 0;
    if (args.use_cv) {
      const auto grid = default_lambda_grid(obs, args.grid_size, args.grid_decades);
      const CvResult cv = cross_validate(obs, grid, args.folds, opts);
      lambda = cv.chosen_lambda;
      rank = cv.chosen_rank;
      std::cerr << "cv: chosen lambda " << lambda << ", rank " << rank;
      if (cv.fold_coverage_warning) std::cerr << " (fold coverage warning)";
      std::cerr << '\n';
    }
    const NaturalParamMatrix phi = solve_backend(obs, lambda, opts);
    if (rank == 0) rank = effective_rank(phi, args.rank_threshold);
    write_dense_csv(args.output, phi);
    if (rank >= 1) {
      const ConfounderBasis basis = extract_confounders(phi, rank);
      if (basis.rank_warning)
        std::cerr << "warning: requested rank exceeds the numerical rank\n";
      write_dense_csv(args.confounders, basis.u);
    } else {
      std::cerr << "warning: estimate has rank 0; no confounders written\n";
    }
  } catch (const DivergedError& err) {
    std::cerr << "diverged: " << err.what() << '\n';
    return 2;
  }
  return 0;
}

nlohmann::json report_to_json(const AteReport& report) {
  nlohmann::json j;
  j["method"] = report.method;
  j["tau_hat"] = report.tau_hat;
  j["n_used"] = report.n_used;
  j["diagnostics"] = report.diagnostics;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-confounder recovery by exponential-family matrix "
               "completion, with downstream treatment-effect estimators"};
  app.require_subcommand(1);

  // ---- complete ----
  CompleteArgs ca;
  auto* complete = app.add_subcommand(
      "complete", "Complete a partially observed matrix and extract confounders");
  complete->add_option("--input", ca.input, "covariate CSV (NA = missing)")->required();
  complete->add_option("--schema", ca.schema, "JSON column->loss sidecar");
  complete->add_option("--loss", ca.loss, "auto|gaussian|bernoulli|poisson");
  auto* lambda_opt = complete->add_option("--lambda", ca.lambda, "fixed lambda");
  auto* cv_flag = complete->add_flag("--cv", ca.use_cv, "choose lambda by CV");
  lambda_opt->excludes(cv_flag);
  cv_flag->excludes(lambda_opt);
  complete->add_option("--folds", ca.folds, "CV folds (default 5)");
  complete->add_option("--rank-threshold", ca.rank_threshold,
                       "relative singular value cutoff (default 1e-7)");
  complete->add_option("--seed", ca.seed, "RNG seed");
  complete->add_option("--output", ca.output, "natural-parameter CSV out");
  complete->add_option("--confounders", ca.confounders, "confounder CSV out");
  complete->add_option("--formulation", ca.formulation, "convex|nonconvex");
  complete->add_option("--k", ca.k, "factor rank for the nonconvex formulation");
  complete->add_option("--grid-size", ca.grid_size, "CV lambda grid size");
  complete->add_option("--grid-decades", ca.grid_decades, "CV lambda grid span");
  complete->add_option("--max-iters", ca.max_iters, "solver iteration cap");
  complete->add_option("--rel-tol", ca.rel_tol, "relative objective tolerance");

  // ---- diagnose ----
  std::string d_u_true, d_u_hat, d_phi, d_treatment;
  auto* diagnose = app.add_subcommand("diagnose", "Subspace and matrix diagnostics");
  diagnose->add_option("--u-true", d_u_true, "true basis CSV")->required();
  diagnose->add_option("--u-hat", d_u_hat, "estimated basis CSV")->required();
  diagnose->add_option("--phi", d_phi, "natural-parameter CSV")->required();
  diagnose->add_option("--treatment", d_treatment,
                       "treatment CSV (enables residual_energy)");

  // ---- ate ----
  std::string a_data, a_cov, a_method = "ols", a_output = "report.json";
  double a_penalty = 0.0;
  std::vector<double> a_clip = {0.01, 0.99};
  auto* ate = app.add_subcommand("ate", "Estimate the average treatment effect");
  ate->add_option("--data", a_data, "CSV with columns treatment,outcome")->required();
  ate->add_option("--covariates", a_cov, "covariate CSV")->required();
  ate->add_option("--method", a_method, "ols|ridge|lasso|ipw|dr|match|psmatch|lr");
  ate->add_option("--penalty", a_penalty, "ridge/lasso penalty");
  ate->add_option("--clip", a_clip, "propensity clip bounds lo,hi")
      ->delimiter(',')
      ->expected(2);
  ate->add_option("--output", a_output, "JSON report path");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate synthetic datasets");
  synth->require_subcommand(1);
  Index s_n = 200, s_p = 100, s_r = 5;
  std::string s_noise = "gaussian", s_outdir = ".";
  std::uint64_t s_seed = 0;
  double s_tau = 2.0;
  auto* linear = synth->add_subcommand("linear", "linear structural model");
  linear->add_option("--n", s_n, "rows");
  linear->add_option("--p", s_p, "covariates");
  linear->add_option("--r", s_r, "latent rank");
  linear->add_option("--tau", s_tau, "treatment effect");
  linear->add_option("--noise", s_noise, "gaussian|bernoulli");
  linear->add_option("--seed", s_seed, "seed");
  linear->add_option("--out-dir", s_outdir, "output directory");
  Index t_pairs = 3000;
  std::uint64_t t_seed = 0;
  std::string t_out = "twins.csv";
  auto* standin = synth->add_subcommand("twins-standin", "twins registry stand-in");
  standin->add_option("--pairs", t_pairs, "number of twin pairs");
  standin->add_option("--seed", t_seed, "seed");
  standin->add_option("--out", t_out, "records CSV path");

  // ---- experiment ----
  std::string e_config, e_out = "results.csv";
  Index e_jobs = 1;
  auto* experiment = app.add_subcommand("experiment", "Run a replication grid");
  experiment->add_option("--config", e_config, "JSON config")->required();
  experiment->add_option("--out", e_out, "results CSV path");
  experiment->add_option("--jobs", e_jobs, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (complete->parsed()) return run_complete(ca);

    if (diagnose->parsed()) {
      const Matrix u_true = orthonormalize(read_dense_csv(d_u_true));
      const Matrix u_hat = orthonormalize(read_dense_csv(d_u_hat));
      const Matrix phi = read_dense_csv(d_phi);
      nlohmann::json out;
      out["angle"] = principal_angle(u_true, u_hat);
      out["projection_distance"] = projection_distance(u_true, u_hat);
      out["spikiness"] = spikiness_ratio(phi);
      if (!d_treatment.empty()) {
        const Matrix t = read_dense_csv(d_treatment);
        out["residual_energy"] = residual_treatment_energy(t.col(0), u_hat);
      }
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (ate->parsed()) {
      const Matrix table = read_dense_csv(a_data);
      if (table.cols() < 2)
        throw std::runtime_error("--data CSV needs treatment,outcome columns");
      CausalDataset data;
      data.treatment = table.col(0);
      data.outcome = table.col(1);
      data.covariates = read_dense_csv(a_cov);

      AteReport report;
      const std::pair<double, double> clip{a_clip[0], a_clip[1]};
      if (a_method == "ols") report = ols_ate(data);
      else if (a_method == "ridge") report = ridge_ate(data, a_penalty);
      else if (a_method == "lasso") report = lasso_ate(data, a_penalty);
      else if (a_method == "lr") report = logistic_ate(data);
      else if (a_method == "match") report = mahalanobis_match_ate(data);
      else if (a_method == "ipw" || a_method == "dr" || a_method == "psmatch") {
        const Vector e = logistic_propensity(data.covariates, data.treatment);
        if (a_method == "ipw") report = ipw_ate(data, e, clip);
        else if (a_method == "dr") report = doubly_robust_ate(data, e);
        else report = propensity_match_ate(data, e);
      } else {
        throw std::runtime_error("unknown --method '" + a_method + "'");
      }
      std::ofstream out(a_output);
      out << report_to_json(report).dump(2) << '\n';
      std::cout << report.method << " tau_hat = " << report.tau_hat << '\n';
      return 0;
    }

    if (linear->parsed()) {
      GenerativeSpec spec = GenerativeSpec::defaults(s_r);
      spec.tau = s_tau;
      spec.noise = s_noise == "bernoulli" ? GenerativeSpec::Noise::Bernoulli
                                          : GenerativeSpec::Noise::Gaussian;
      const ScmDraw draw = gen_linear_scm(s_n, s_p, spec, s_seed);
      const std::filesystem::path dir(s_outdir);
      std::filesystem::create_directories(dir);
      write_csv_matrix(dir / "X.csv", draw.observed);
      write_dense_csv(dir / "U.csv", *draw.data.true_confounders);
      write_dense_csv(dir / "V.csv", draw.loadings);
      Matrix ty(s_n, 2);
      ty.col(0) = draw.data.treatment;
      ty.col(1) = draw.data.outcome;
      write_dense_csv(dir / "data.csv", ty, {"treatment", "outcome"});
      nlohmann::json schema;
      for (Index j = 0; j < s_p; ++j)
        schema["c" + std::to_string(j)] =
            spec.noise == GenerativeSpec::Noise::Bernoulli
                ? nlohmann::json("bernoulli")
                : nlohmann::json{{"kind", "gaussian"},
                                 {"variance", spec.noise_sd * spec.noise_sd}};
      std::ofstream schema_out(dir / "cols.json");
      schema_out << schema.dump(2) << '\n';
      std::cout << "wrote X.csv, U.csv, V.csv, data.csv, cols.json to " << s_outdir
                << '\n';
      return 0;
    }

    if (standin->parsed()) {
      write_twins_csv(t_out, synth_twins_standin(t_pairs, t_seed));
      std::cout << "wrote " << t_pairs << " pairs to " << t_out
                << " (generative ATE " << standin_true_ate() << ")\n";
      return 0;
    }

    if (experiment->parsed()) {
      const ExperimentConfig config = ExperimentConfig::from_json_file(e_config);
      const auto rows = run_experiment(config, e_jobs);
      std::ofstream out(e_out);
      write_results_csv(out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << e_out << '\n';
      return 0;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
