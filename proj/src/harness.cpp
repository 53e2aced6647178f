#include "cmf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cmf/ingest.hpp"
#include "cmf/rng.hpp"
#include "cmf/subspace.hpp"

namespace cmf {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::LinearGaussian: return "linear_gaussian";
    case Scenario::LinearBernoulli: return "linear_bernoulli";
    case Scenario::Twins: return "twins";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  if (replications < 1)
    throw std::invalid_argument("config: replications must be >= 1");
  if (schedule.empty()) throw std::invalid_argument("config: empty schedule");
  if (estimators.empty()) throw std::invalid_argument("config: empty estimator list");
  for (const auto& [n, p] : schedule)
    if (n < 1 || p < 1) throw std::invalid_argument("config: schedule entries must be positive");
  for (double m : missing_probs)
    if (!(m >= 0.0 && m <= 1.0))
      throw std::invalid_argument("config: missing probs must be in [0,1]");
  if (scenario != Scenario::Twins) generative.validate();
}

namespace {

Scenario parse_scenario(const std::string& s) {
  if (s == "linear_gaussian") return Scenario::LinearGaussian;
  if (s == "linear_bernoulli") return Scenario::LinearBernoulli;
  if (s == "twins") return Scenario::Twins;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

Vector to_vector(const nlohmann::json& j) {
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig config;
  config.scenario = parse_scenario(j.at("scenario").get<std::string>());

  for (const auto& item : j.at("schedule")) {
    if (item.is_array())
      config.schedule.emplace_back(item.at(0).get<Index>(), item.at(1).get<Index>());
    else
      config.schedule.emplace_back(item.at("n").get<Index>(), item.at("p").get<Index>());
  }
  if (j.contains("missing_probs"))
    config.missing_probs = j.at("missing_probs").get<std::vector<double>>();
  config.estimators = j.at("estimators").get<std::vector<std::string>>();
  config.replications = j.value("replications",
                                config.scenario == Scenario::Twins ? Index{20} : Index{50});
  config.seed = j.value("seed", std::uint64_t{0});
  config.twins_pairs = j.value("twins_pairs", Index{3000});

  if (j.contains("generative")) {
    const auto& g = j.at("generative");
    const Index r = g.value("r", Index{5});
    config.generative = GenerativeSpec::defaults(r);
    if (g.contains("alpha")) config.generative.alpha = to_vector(g.at("alpha"));
    if (g.contains("beta")) config.generative.beta = to_vector(g.at("beta"));
    config.generative.tau = g.value("tau", 2.0);
    config.generative.outcome_noise_sd = g.value("outcome_noise_sd", 1.0);
    config.generative.noise_sd = g.value("noise_sd", config.generative.noise_sd);
  }
  config.generative.noise = config.scenario == Scenario::LinearBernoulli
                                ? GenerativeSpec::Noise::Bernoulli
                                : GenerativeSpec::Noise::Gaussian;

  if (j.contains("mf")) {
    const auto& m = j.at("mf");
    const std::string backend = m.value("backend", std::string("nonconvex"));
    if (backend == "convex")
      config.pipeline.mf.backend = SolveBackend::Convex;
    else if (backend == "nonconvex")
      config.pipeline.mf.backend = SolveBackend::Nonconvex;
    else
      throw std::invalid_argument("unknown mf backend '" + backend + "'");
    config.pipeline.mf.k = m.value("k", Index{0});
    config.pipeline.mf.rank_threshold = m.value("rank_threshold", 1e-3);
    config.pipeline.mf_folds = m.value("folds", Index{5});
    config.pipeline.mf_grid_size = m.value("grid_size", Index{8});
    config.pipeline.mf_grid_decades = m.value("grid_decades", 3.0);
    config.pipeline.mf.solver.max_iters = m.value("max_iters", Index{500});
    config.pipeline.mf.solver.rel_tol = m.value("rel_tol", 1e-7);
  } else {
    config.pipeline.mf.backend = SolveBackend::Nonconvex;
    config.pipeline.mf.rank_threshold = 1e-3;
    config.pipeline.mf.solver.rel_tol = 1e-7;
  }
  if (j.contains("penalty")) {
    config.pipeline.penalty_folds = j.at("penalty").value("folds", Index{5});
    config.pipeline.penalty_grid_size = j.at("penalty").value("grid_size", Index{10});
  }
  if (j.contains("clip")) {
    config.pipeline.clip = {j.at("clip").at(0).get<double>(),
                            j.at("clip").at(1).get<double>()};
  }

  if (const char* env = std::getenv("CONFOUND_MF_SEED")) {
    config.seed = std::strtoull(env, nullptr, 10);
  }
  config.validate();
  return config;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

ReplicationData draw_replication(const ExperimentConfig& config, Index n, Index p,
                                 double missing_prob, Index rep) {
  const std::uint64_t cell_seed =
      mix_seed(mix_seed(mix_seed(config.seed, "cell"), static_cast<std::uint64_t>(n)),
               static_cast<std::uint64_t>(p));
  const std::uint64_t rep_seed = mix_seed(cell_seed, static_cast<std::uint64_t>(rep));

  if (config.scenario == Scenario::Twins) {
    // One record set per experiment, mirroring a fixed registry; treatment,
    // proxies and the mask are re-simulated each replication.
    const auto records =
        synth_twins_standin(config.twins_pairs, mix_seed(config.seed, "twins_records"));
    TwinsDraw draw = twins_semi_synth(records, p, rep_seed, 0.5, missing_prob);
    return {std::move(draw.data), std::move(draw.observed),
            records_sample_ate(records)};
  }

  GenerativeSpec spec = config.generative;
  spec.loadings = draw_loadings(p, spec.r, mix_seed(cell_seed, "loadings"));
  ScmDraw draw = gen_linear_scm(n, p, spec, rep_seed);
  ObservedMatrix observed = missing_prob > 0.0
                                ? inject_mcar(draw.observed, missing_prob,
                                              mix_seed(rep_seed, "mcar"))
                                : std::move(draw.observed);
  return {std::move(draw.data), std::move(observed), spec.tau};
}

namespace {

CausalDataset with_covariates(const CausalDataset& base, Matrix covariates) {
  CausalDataset out = base;
  out.covariates = std::move(covariates);
  return out;
}

void require_complete(const ObservedMatrix& observed, const std::string& name) {
  if (observed.n_observed() !=
      static_cast<Index>(observed.rows()) * observed.cols())
    throw std::runtime_error("estimator '" + name +
                             "' needs complete data; preprocess missing values "
                             "(mode_* or mf_* pipelines)");
}

Matrix mf_confounders(const ObservedMatrix& observed, const PipelineOptions& opt) {
  CvOptions cv_opt = opt.mf;
  cv_opt.solver.seed = mix_seed(opt.seed, "mf_solver");
  const auto grid =
      default_lambda_grid(observed, opt.mf_grid_size, opt.mf_grid_decades);
  const CvResult cv = cross_validate(observed, grid, opt.mf_folds, cv_opt);
  if (cv.chosen_rank < 1)
    throw std::runtime_error("mf pipeline: cross-validation selected rank 0");
  const NaturalParamMatrix phi = solve_backend(observed, cv.chosen_lambda, cv_opt);
  return extract_confounders(phi, cv.chosen_rank).u;
}

std::vector<double> logspace(double top, double decades, Index size) {
  std::vector<double> grid(size);
  for (Index i = 0; i < size; ++i)
    grid[i] = top * std::pow(10.0, -decades * static_cast<double>(i) /
                                       std::max<Index>(size - 1, 1));
  return grid;
}

CausalDataset subset_rows(const CausalDataset& data, const std::vector<char>& take) {
  Index m = 0;
  for (char c : take) m += c != 0;
  CausalDataset out;
  out.covariates.resize(m, data.covariates.cols());
  out.treatment.resize(m);
  out.outcome.resize(m);
  Index w = 0;
  for (Index i = 0; i < data.n(); ++i) {
    if (!take[i]) continue;
    out.covariates.row(w) = data.covariates.row(i);
    out.treatment(w) = data.treatment(i);
    out.outcome(w) = data.outcome(i);
    ++w;
  }
  return out;
}

/// Pick the ridge/lasso penalty by k-fold prediction error over rows.
double cv_penalty(const CausalDataset& data, bool lasso, const PipelineOptions& opt) {
  const Index folds = opt.penalty_folds;
  const std::vector<double> grid =
      lasso ? logspace(lasso_penalty_max(data), 4.0, opt.penalty_grid_size)
            : logspace(10.0 * static_cast<double>(data.n()), 7.0,
                       opt.penalty_grid_size);
  const auto fold_of =
      cv_folds(data.n(), folds, mix_seed(opt.seed, lasso ? "lasso_cv" : "ridge_cv"));

  std::vector<double> mse(grid.size(), 0.0);
  std::vector<Index> used(grid.size(), 0);
  for (Index f = 0; f < folds; ++f) {
    std::vector<char> train(data.n()), test(data.n());
    for (Index i = 0; i < data.n(); ++i) {
      train[i] = fold_of[i] != f;
      test[i] = fold_of[i] == f;
    }
    CausalDataset tr = subset_rows(data, train);
    CausalDataset te = subset_rows(data, test);
    if (te.n() == 0) continue;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      LinearFit fit;
      try {
        fit = lasso ? lasso_fit(tr, grid[g]) : ridge_fit(tr, grid[g]);
      } catch (const std::exception&) {
        mse[g] += std::numeric_limits<double>::infinity();
        ++used[g];
        continue;
      }
      const Vector pred = Vector::Constant(te.n(), fit.intercept) +
                          fit.treatment_coef * te.treatment +
                          te.covariates * fit.covariate_coefs;
      mse[g] += (te.outcome - pred).squaredNorm() / static_cast<double>(te.n());
      ++used[g];
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const double a = used[g] ? mse[g] / used[g] : std::numeric_limits<double>::infinity();
    const double b = used[best] ? mse[best] / used[best]
                                : std::numeric_limits<double>::infinity();
    if (a < b || (a == b && grid[g] > grid[best])) best = g;
  }
  return grid[best];
}

Vector clipped_propensity(const Matrix& covariates, const Vector& treatment,
                          std::pair<double, double> clip) {
  Vector e = logistic_propensity(covariates, treatment);
  for (Index i = 0; i < e.size(); ++i) e(i) = std::clamp(e(i), clip.first, clip.second);
  return e;
}

}  // namespace

AteReport estimator_pipeline(const std::string& name, const CausalDataset& data,
                             const ObservedMatrix& observed,
                             const PipelineOptions& options) {
  auto tagged = [&name](AteReport r) {
    r.method = name;
    return r;
  };

  if (name == "oracle") {
    if (!data.true_confounders)
      throw std::runtime_error("oracle pipeline needs true confounders");
    return tagged(ols_ate(with_covariates(data, *data.true_confounders)));
  }
  if (name == "ols") {
    require_complete(observed, name);
    return tagged(ols_ate(data));
  }
  if (name == "ridge" || name == "lasso") {
    require_complete(observed, name);
    const bool lasso = name == "lasso";
    const double penalty = cv_penalty(data, lasso, options);
    return tagged(lasso ? lasso_ate(data, penalty) : ridge_ate(data, penalty));
  }
  if (name == "mf") {
    return tagged(ols_ate(with_covariates(data, mf_confounders(observed, options))));
  }
  if (name == "mode_ols") {
    return tagged(ols_ate(with_covariates(data, mode_impute(observed))));
  }
  if (name == "ipw") {
    require_complete(observed, name);
    return tagged(ipw_ate(data, logistic_propensity(data.covariates, data.treatment),
                          options.clip));
  }
  if (name == "lr" || name == "dr" || name == "match" || name == "psmatch") {
    require_complete(observed, name);
    if (name == "lr") return tagged(logistic_ate(data));
    if (name == "match") return tagged(mahalanobis_match_ate(data));
    const Vector e =
        clipped_propensity(data.covariates, data.treatment, options.clip);
    return tagged(name == "dr" ? doubly_robust_ate(data, e)
                               : propensity_match_ate(data, e));
  }

  const auto run_on = [&](const Matrix& covariates,
                          const std::string& est) -> AteReport {
    const CausalDataset d = with_covariates(data, covariates);
    if (est == "lr") return logistic_ate(d);
    if (est == "ols") return ols_ate(d);
    if (est == "match") return mahalanobis_match_ate(d);
    const Vector e = clipped_propensity(d.covariates, d.treatment, options.clip);
    if (est == "dr") return doubly_robust_ate(d, e);
    if (est == "psmatch") return propensity_match_ate(d, e);
    if (est == "ipw") return ipw_ate(d, e, options.clip);
    throw std::invalid_argument("unknown estimator pipeline '" + name + "'");
  };

  if (name.rfind("mf_", 0) == 0)
    return tagged(run_on(mf_confounders(observed, options), name.substr(3)));
  if (name.rfind("mode_", 0) == 0)
    return tagged(run_on(mode_impute(observed), name.substr(5)));
  throw std::invalid_argument("unknown estimator pipeline '" + name + "'");
}

namespace {

void for_each_task(Index count, Index jobs, const std::function<void(Index)>& fn) {
  jobs = std::max<Index>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (Index t = 0; t < count; ++t) fn(t);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (Index w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const Index t = next.fetch_add(1);
        if (t >= count) return;
        fn(t);
      }
    });
  }
  for (auto& th : workers) th.join();
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, Index jobs) {
  config.validate();

  struct Cell {
    Index n, p;
    double missing;
  };
  std::vector<Cell> cells;
  for (const auto& [n, p] : config.schedule)
    for (double m : config.missing_probs) cells.push_back({n, p, m});

  const Index n_est = static_cast<Index>(config.estimators.size());
  const Index tasks = static_cast<Index>(cells.size()) * config.replications;

  struct TaskOut {
    std::vector<double> tau;   // per estimator; NaN on failure
    double tau_true = 0.0;
  };
  std::vector<TaskOut> outs(tasks);

  for_each_task(tasks, jobs, [&](Index t) {
    const Index c = t / config.replications;
    const Index rep = t % config.replications;
    const Cell& cell = cells[c];

    TaskOut out;
    out.tau.assign(n_est, std::numeric_limits<double>::quiet_NaN());
    std::optional<ReplicationData> draw;
    try {
      draw.emplace(draw_replication(config, cell.n, cell.p, cell.missing, rep));
    } catch (const std::exception&) {
      outs[t] = std::move(out);  // whole replication failed
      return;
    }
    out.tau_true = draw->tau_true;

    PipelineOptions opts = config.pipeline;
    opts.seed = mix_seed(
        mix_seed(mix_seed(mix_seed(config.seed, "pipeline"), cell.n), cell.p),
        static_cast<std::uint64_t>(rep));

    for (Index e = 0; e < n_est; ++e) {
      try {
        out.tau[e] = estimator_pipeline(config.estimators[e], draw->data,
                                        draw->observed, opts)
                         .tau_hat;
      } catch (const std::exception&) {
        // recorded as a failure for this row; the sweep continues
      }
    }
    outs[t] = std::move(out);
  });

  std::vector<ResultRow> rows;
  rows.reserve(cells.size() * n_est);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (Index e = 0; e < n_est; ++e) {
      ResultRow row;
      row.scenario = scenario_name(config.scenario);
      row.n = cells[c].n;
      row.p = cells[c].p;
      row.missing_prob = cells[c].missing;
      row.estimator = config.estimators[e];
      row.replications = config.replications;

      double tau_true = 0.0;
      std::vector<double> sq_errors;
      for (Index rep = 0; rep < config.replications; ++rep) {
        const TaskOut& out = outs[c * config.replications + rep];
        tau_true = out.tau_true;
        const double tau = out.tau[e];
        if (std::isnan(tau)) {
          ++row.failures;
          continue;
        }
        row.taus.push_back(tau);
        const double err = tau - out.tau_true;
        sq_errors.push_back(err * err);
      }
      row.tau_true = tau_true;

      const Index m = static_cast<Index>(row.taus.size());
      if (m > 0) {
        double mean = 0.0, msq = 0.0;
        for (double v : row.taus) mean += v;
        mean /= static_cast<double>(m);
        for (double v : sq_errors) msq += v;
        msq /= static_cast<double>(m);
        row.tau_mean = mean;
        row.rmse = std::sqrt(msq);
        double var_sq = 0.0;
        for (double v : sq_errors) var_sq += (v - msq) * (v - msq);
        var_sq /= static_cast<double>(std::max<Index>(m - 1, 1));
        const double sd_rmse =
            row.rmse > 0.0
                ? std::sqrt(var_sq / static_cast<double>(m)) / (2.0 * row.rmse)
                : 0.0;
        const double scale = std::abs(tau_true) > 0.0 ? std::abs(tau_true) : 1.0;
        row.rmse_rel = row.rmse / scale;
        row.band_rel = 2.0 * sd_rmse / scale;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "# relative RMSE = sqrt(mean (tau_hat - tau)^2) / |tau|; band_rel = "
         "2 * sd(squared errors) / (2 * rmse * sqrt(R)) / |tau| (delta method "
         "2-sd band across replications)\n";
  out << "scenario,n,p,missing_prob,estimator,replications,failures,tau_true,"
         "tau_mean,rmse,rmse_rel,band_rel\n";
  for (const ResultRow& r : rows) {
    out << r.scenario << ',' << r.n << ',' << r.p << ',' << format_double(r.missing_prob)
        << ',' << r.estimator << ',' << r.replications << ',' << r.failures << ','
        << format_double(r.tau_true) << ',' << format_double(r.tau_mean) << ','
        << format_double(r.rmse) << ',' << format_double(r.rmse_rel) << ','
        << format_double(r.band_rel) << '\n';
  }
}

}  // namespace cmf
