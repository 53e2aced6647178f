#include "cmf/estimators.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cmf/rng.hpp"

namespace cmf {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Least squares with an explicit rank guard: the design must have full
/// column rank within 1e-10 of sigma_1; otherwise throws, naming the columns
/// a pivoted QR leaves outside the well-conditioned set.
Vector checked_lstsq(const Matrix& design, const Vector& y,
                     const std::vector<std::string>& col_names) {
  Eigen::BDCSVD<Matrix> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s(s.size() - 1) <= 1e-10 * s(0)) {
    Eigen::ColPivHouseholderQR<Matrix> qr(design);
    qr.setThreshold(1e-10);
    const Index rank = qr.rank();
    const auto perm = qr.colsPermutation().indices();
    std::ostringstream msg;
    msg << "rank-deficient design; collinear columns:";
    for (Index i = rank; i < design.cols(); ++i)
      msg << ' ' << col_names[perm(i)];
    throw std::runtime_error(msg.str());
  }
  return svd.solve(y);
}

std::vector<std::string> design_names(Index d) {
  std::vector<std::string> names = {"intercept", "treatment"};
  for (Index j = 0; j < d; ++j) names.push_back("covariate_" + std::to_string(j));
  return names;
}

Matrix ate_design(const CausalDataset& data) {
  const Index n = data.n();
  Matrix design(n, 2 + data.covariates.cols());
  design.col(0).setOnes();
  design.col(1) = data.treatment;
  design.rightCols(data.covariates.cols()) = data.covariates;
  return design;
}

struct Standardized {
  Matrix z;
  Vector mean;
  Vector sd;
};

Standardized standardize(const Matrix& c) {
  Standardized out;
  const Index n = c.rows();
  out.mean = c.colwise().mean();
  Matrix centered = c.rowwise() - out.mean.transpose();
  out.sd = (centered.array().square().colwise().sum() / static_cast<double>(n))
               .sqrt();
  for (Index j = 0; j < c.cols(); ++j) {
    if (out.sd(j) <= 0.0)
      throw std::runtime_error("constant covariate column " + std::to_string(j) +
                               " cannot be standardized");
  }
  out.z = centered.array().rowwise() / out.sd.transpose().array();
  return out;
}

}  // namespace

void CausalDataset::validate_for_ate() const {
  const Index n = treatment.size();
  if (outcome.size() != n || covariates.rows() != n)
    throw std::invalid_argument("CausalDataset: length mismatch");
  Index treated = 0;
  for (Index i = 0; i < n; ++i) {
    if (treatment(i) != 0.0 && treatment(i) != 1.0)
      throw std::invalid_argument("CausalDataset: treatment must be 0/1");
    treated += treatment(i) == 1.0;
  }
  if (treated == 0 || treated == n)
    throw std::invalid_argument("CausalDataset: both treatment arms must be non-empty");
}

GenerativeSpec GenerativeSpec::defaults(Index r) {
  static const double base_alpha[5] = {-2, 3, -2, -3, -2};
  static const double base_beta[5] = {1, 2, 2, 2, 2};
  GenerativeSpec spec;
  spec.r = r;
  spec.alpha.resize(r);
  spec.beta.resize(r);
  for (Index i = 0; i < r; ++i) {
    spec.alpha(i) = base_alpha[i % 5];
    spec.beta(i) = base_beta[i % 5];
  }
  return spec;
}

void GenerativeSpec::validate() const {
  if (r < 1) throw std::invalid_argument("GenerativeSpec: r must be >= 1");
  if (alpha.size() != r || beta.size() != r)
    throw std::invalid_argument("GenerativeSpec: alpha/beta must have length r");
  if (!(outcome_noise_sd >= 0.0) || !(noise_sd >= 0.0))
    throw std::invalid_argument("GenerativeSpec: noise sds must be >= 0");
  if (loadings.size() != 0 && loadings.cols() != r)
    throw std::invalid_argument("GenerativeSpec: loadings must be p x r");
}

AteReport ols_ate(const CausalDataset& data) {
  data.validate_for_ate();
  const Matrix design = ate_design(data);
  const Vector coef =
      checked_lstsq(design, data.outcome, design_names(data.covariates.cols()));
  AteReport report;
  report.method = "ols";
  report.tau_hat = coef(1);
  report.n_used = data.n();
  return report;
}

LinearFit ridge_fit(const CausalDataset& data, double penalty) {
  data.validate_for_ate();
  if (penalty < 0.0) throw std::invalid_argument("ridge penalty must be >= 0");
  const Index n = data.n();
  const Index d = data.covariates.cols();
  if (d == 0) {
    Matrix base(n, 2);
    base.col(0).setOnes();
    base.col(1) = data.treatment;
    const Vector coef = checked_lstsq(base, data.outcome, {"intercept", "treatment"});
    return {coef(0), coef(1), Vector::Zero(0)};
  }

  const Standardized st = standardize(data.covariates);
  Matrix design(n, 2 + d);
  design.col(0).setOnes();
  design.col(1) = data.treatment;
  design.rightCols(d) = st.z;

  Matrix gram = design.transpose() * design;
  for (Index j = 2; j < 2 + d; ++j) gram(j, j) += penalty;
  const Vector rhs = design.transpose() * data.outcome;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("ridge_fit: normal equations not solvable");
  const Vector coef = ldlt.solve(rhs);

  LinearFit fit;
  fit.treatment_coef = coef(1);
  fit.covariate_coefs = (coef.tail(d).array() / st.sd.array()).matrix();
  fit.intercept = coef(0) - fit.covariate_coefs.dot(st.mean);
  return fit;
}

AteReport ridge_ate(const CausalDataset& data, double penalty) {
  const LinearFit fit = ridge_fit(data, penalty);
  AteReport report;
  report.method = "ridge";
  report.tau_hat = fit.treatment_coef;
  report.n_used = data.n();
  report.diagnostics["penalty"] = penalty;
  return report;
}

double lasso_penalty_max(const CausalDataset& data) {
  data.validate_for_ate();
  const Index n = data.n();
  const Standardized st = standardize(data.covariates);
  // Residual of Y on {1, T} alone.
  Matrix base(n, 2);
  base.col(0).setOnes();
  base.col(1) = data.treatment;
  const Vector coef = checked_lstsq(base, data.outcome, {"intercept", "treatment"});
  const Vector resid = data.outcome - base * coef;
  return (st.z.transpose() * resid).cwiseAbs().maxCoeff() / static_cast<double>(n);
}

LinearFit lasso_fit(const CausalDataset& data, double penalty) {
  data.validate_for_ate();
  if (penalty < 0.0) throw std::invalid_argument("lasso penalty must be >= 0");
  const Index n = data.n();
  const Index d = data.covariates.cols();
  const Standardized st = d > 0 ? standardize(data.covariates) : Standardized{};

  const double nn = static_cast<double>(n);
  const Vector& t = data.treatment;
  const double t_sq = t.squaredNorm() / nn;

  double a = data.outcome.mean();
  double b = 0.0;
  Vector c = Vector::Zero(d);
  Vector resid = data.outcome.array() - a;

  for (int iter = 0; iter < 100000; ++iter) {
    double max_delta = 0.0;
    // Unpenalized intercept and treatment coordinates.
    {
      const double a_new = a + resid.mean();
      resid.array() -= (a_new - a);
      max_delta = std::max(max_delta, std::abs(a_new - a));
      a = a_new;
    }
    {
      const double b_new = b + t.dot(resid) / (nn * t_sq);
      resid -= (b_new - b) * t;
      max_delta = std::max(max_delta, std::abs(b_new - b));
      b = b_new;
    }
    for (Index j = 0; j < d; ++j) {
      const auto zj = st.z.col(j);
      const double rho = c(j) + zj.dot(resid) / nn;  // z_j has unit variance
      const double c_new = std::copysign(std::max(std::abs(rho) - penalty, 0.0), rho);
      if (c_new != c(j)) {
        resid -= (c_new - c(j)) * zj;
        max_delta = std::max(max_delta, std::abs(c_new - c(j)));
        c(j) = c_new;
      }
    }
    if (max_delta < 1e-8) break;
  }

  LinearFit fit;
  fit.treatment_coef = b;
  if (d > 0) {
    fit.covariate_coefs = (c.array() / st.sd.array()).matrix();
    fit.intercept = a - fit.covariate_coefs.dot(st.mean);
  } else {
    fit.covariate_coefs = Vector::Zero(0);
    fit.intercept = a;
  }
  return fit;
}

AteReport lasso_ate(const CausalDataset& data, double penalty) {
  const LinearFit fit = lasso_fit(data, penalty);
  AteReport report;
  report.method = "lasso";
  report.tau_hat = fit.treatment_coef;
  report.n_used = data.n();
  report.diagnostics["penalty"] = penalty;
  report.diagnostics["nonzero_covariates"] =
      static_cast<double>((fit.covariate_coefs.array() != 0.0).count());
  return report;
}

Vector logistic_fit(const Matrix& covariates, const Vector& labels01) {
  const Index n = labels01.size();
  if (covariates.rows() != n)
    throw std::invalid_argument("logistic_fit: length mismatch");
  const Index d = covariates.cols();
  Matrix design(n, 1 + d);
  design.col(0).setOnes();
  if (d > 0) design.rightCols(d) = covariates;

  const double nn = static_cast<double>(n);
  Vector beta = Vector::Zero(1 + d);
  for (int iter = 0; iter < 500; ++iter) {
    const Vector eta = design * beta;
    const Vector p = eta.unaryExpr([](double z) { return sigmoid(z); });
    const Vector grad = design.transpose() * (labels01 - p) / nn;
    if (grad.norm() < 1e-8) return beta;

    // Perfect separation: the current direction already classifies every
    // observation strictly correctly, so the likelihood has no maximizer.
    if (beta.norm() > 50.0) {
      bool separated = true;
      for (Index i = 0; i < n; ++i) {
        const double margin = (2.0 * labels01(i) - 1.0) * eta(i);
        if (margin <= 0.0) {
          separated = false;
          break;
        }
      }
      if (separated) throw SeparationError(beta.normalized());
    }

    Matrix hess = Matrix::Zero(1 + d, 1 + d);
    for (Index i = 0; i < n; ++i) {
      const double w = std::max(p(i) * (1.0 - p(i)), 1e-12);
      hess.noalias() += w * design.row(i).transpose() * design.row(i);
    }
    hess /= nn;
    const Vector step = hess.ldlt().solve(grad);

    // Damped update: halve until the log-likelihood does not decrease.
    auto nll = [&](const Vector& bb) {
      const Vector e = design * bb;
      double s = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double x = 2.0 * labels01(i) - 1.0;
        const double t = x * e(i);
        s += t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
      }
      return s / nn;
    };
    const double f0 = nll(beta);
    double t_step = 1.0;
    while (t_step > 1e-10 && nll(beta + t_step * step) > f0 + 1e-14) t_step *= 0.5;
    beta += t_step * step;
  }
  throw std::runtime_error("logistic_fit: IRLS did not reach gradient tolerance");
}

Vector logistic_propensity(const Matrix& covariates, const Vector& treatment) {
  Index treated = 0;
  for (Index i = 0; i < treatment.size(); ++i) treated += treatment(i) == 1.0;
  if (treated == 0 || treated == treatment.size())
    throw std::invalid_argument("logistic_propensity: both arms must be non-empty");
  const Vector beta = logistic_fit(covariates, treatment);
  Vector eta = Vector::Constant(treatment.size(), beta(0));
  if (covariates.cols() > 0) eta += covariates * beta.tail(covariates.cols());
  return eta.unaryExpr([](double z) { return sigmoid(z); });
}

AteReport ipw_ate(const CausalDataset& data, const Vector& propensities,
                  std::pair<double, double> clip) {
  data.validate_for_ate();
  if (propensities.size() != data.n())
    throw std::invalid_argument("ipw_ate: propensity length mismatch");
  if (!(clip.first > 0.0 && clip.second < 1.0 && clip.first <= clip.second))
    throw std::invalid_argument("ipw_ate: clip bounds must satisfy 0 < lo <= hi < 1");

  Index clipped = 0;
  double sw1 = 0, sw1y = 0, sw0 = 0, sw0y = 0;
  for (Index i = 0; i < data.n(); ++i) {
    double e = propensities(i);
    if (e < clip.first || e > clip.second) ++clipped;
    e = std::clamp(e, clip.first, clip.second);
    if (data.treatment(i) == 1.0) {
      sw1 += 1.0 / e;
      sw1y += data.outcome(i) / e;
    } else {
      sw0 += 1.0 / (1.0 - e);
      sw0y += data.outcome(i) / (1.0 - e);
    }
  }
  if (sw1 <= 0.0 || sw0 <= 0.0)
    throw std::runtime_error("ipw_ate: an arm has zero total weight");

  AteReport report;
  report.method = "ipw";
  report.tau_hat = sw1y / sw1 - sw0y / sw0;
  report.n_used = data.n();
  report.diagnostics["clipped"] = static_cast<double>(clipped);
  report.diagnostics["min_propensity"] = propensities.minCoeff();
  report.diagnostics["max_propensity"] = propensities.maxCoeff();
  return report;
}

AteReport doubly_robust_ate(const CausalDataset& data, const Vector& propensities) {
  data.validate_for_ate();
  const Index n = data.n();
  const Index d = data.covariates.cols();
  if (propensities.size() != n)
    throw std::invalid_argument("doubly_robust_ate: propensity length mismatch");

  std::vector<Index> arm[2];
  for (Index i = 0; i < n; ++i) arm[data.treatment(i) == 1.0].push_back(i);
  for (int t = 0; t < 2; ++t) {
    if (static_cast<Index>(arm[t].size()) < d + 2)
      throw std::invalid_argument("doubly_robust_ate: arm " + std::to_string(t) +
                                  " smaller than d+2");
  }

  // Per-arm linear outcome models [1, x].
  Vector theta[2];
  std::vector<std::string> names = {"intercept"};
  for (Index j = 0; j < d; ++j) names.push_back("covariate_" + std::to_string(j));
  for (int t = 0; t < 2; ++t) {
    const Index m = static_cast<Index>(arm[t].size());
    Matrix design(m, 1 + d);
    Vector y(m);
    for (Index k = 0; k < m; ++k) {
      design(k, 0) = 1.0;
      design.row(k).tail(d) = data.covariates.row(arm[t][k]);
      y(k) = data.outcome(arm[t][k]);
    }
    theta[t] = checked_lstsq(design, y, names);
  }

  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mu1 = theta[1](0) + data.covariates.row(i).dot(theta[1].tail(d));
    const double mu0 = theta[0](0) + data.covariates.row(i).dot(theta[0].tail(d));
    const double e = std::clamp(propensities(i), 1e-12, 1.0 - 1e-12);
    const double t = data.treatment(i);
    acc += mu1 - mu0 + t * (data.outcome(i) - mu1) / e -
           (1.0 - t) * (data.outcome(i) - mu0) / (1.0 - e);
  }

  AteReport report;
  report.method = "dr";
  report.tau_hat = acc / static_cast<double>(n);
  report.n_used = n;
  return report;
}

namespace {

AteReport match_on(const CausalDataset& data, const Matrix& coords,
                   const char* method) {
  const Index n = data.n();
  double acc = 0.0;
  double dist_acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double ti = data.treatment(i);
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (data.treatment(j) == ti) continue;
      const double dd = (coords.row(i) - coords.row(j)).squaredNorm();
      if (dd < best_d) {  // strict: ties keep the lowest index
        best_d = dd;
        best = j;
      }
    }
    const double y1 = ti == 1.0 ? data.outcome(i) : data.outcome(best);
    const double y0 = ti == 1.0 ? data.outcome(best) : data.outcome(i);
    acc += y1 - y0;
    dist_acc += std::sqrt(best_d);
  }
  AteReport report;
  report.method = method;
  report.tau_hat = acc / static_cast<double>(n);
  report.n_used = n;
  report.diagnostics["mean_match_distance"] = dist_acc / static_cast<double>(n);
  return report;
}

}  // namespace

AteReport mahalanobis_match_ate(const CausalDataset& data) {
  data.validate_for_ate();
  const Index n = data.n();
  const Matrix centered =
      data.covariates.rowwise() - data.covariates.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(
        "mahalanobis_match_ate: singular pooled covariance; consider "
        "regularizing or dropping collinear covariates");
  // Whitened coordinates make Mahalanobis distance plain Euclidean.
  const Matrix white =
      llt.matrixL().solve(data.covariates.transpose()).transpose();
  return match_on(data, white, "match");
}

AteReport propensity_match_ate(const CausalDataset& data, const Vector& propensities) {
  data.validate_for_ate();
  if (propensities.size() != data.n())
    throw std::invalid_argument("propensity_match_ate: propensity length mismatch");
  return match_on(data, propensities, "psmatch");
}

AteReport logistic_ate(const CausalDataset& data) {
  data.validate_for_ate();
  const Index n = data.n();
  const Index d = data.covariates.cols();
  for (Index i = 0; i < n; ++i) {
    if (data.outcome(i) != 0.0 && data.outcome(i) != 1.0)
      throw std::invalid_argument("logistic_ate: outcome must be 0/1");
  }
  Matrix design(n, 1 + d);
  design.col(0) = data.treatment;
  if (d > 0) design.rightCols(d) = data.covariates;
  const Vector beta = logistic_fit(design, data.outcome);  // [1, T, X]

  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double base =
        beta(0) + (d > 0 ? data.covariates.row(i).dot(beta.tail(d)) : 0.0);
    acc += sigmoid(base + beta(1)) - sigmoid(base);
  }
  AteReport report;
  report.method = "lr";
  report.tau_hat = acc / static_cast<double>(n);
  report.n_used = n;
  return report;
}

UtMoments monte_carlo_moments(const Vector& beta, Index draws, std::uint64_t seed) {
  const Index r = beta.size();
  if (draws < 2) throw std::invalid_argument("monte_carlo_moments: draws must be >= 2");
  Rng rng(mix_seed(seed, "ut_moments"));

  Vector sum_tu = Vector::Zero(r);
  Vector sum_tu_sq = Vector::Zero(r);
  Matrix sum_uu = Matrix::Zero(r, r);
  double sum_t = 0.0;
  Vector u(r);
  for (Index it = 0; it < draws; ++it) {
    for (Index j = 0; j < r; ++j) u(j) = rng.normal();
    const double t = rng.bernoulli(sigmoid(beta.dot(u))) ? 1.0 : 0.0;
    sum_t += t;
    sum_uu.noalias() += u * u.transpose();
    if (t == 1.0) {
      sum_tu += u;
      sum_tu_sq += u.cwiseAbs2();
    }
  }

  const double nn = static_cast<double>(draws);
  UtMoments m;
  m.t_u = sum_tu / nn;
  m.u_u = sum_uu / nn;
  m.t_sq = sum_t / nn;  // T in {0,1} so E[T^2] = E[T]
  m.t_u_se.resize(r);
  for (Index j = 0; j < r; ++j) {
    const double var = sum_tu_sq(j) / nn - m.t_u(j) * m.t_u(j);
    m.t_u_se(j) = std::sqrt(std::max(var, 0.0) / nn);
  }
  m.t_sq_se = std::sqrt(std::max(m.t_sq * (1.0 - m.t_sq), 0.0) / nn);
  return m;
}

double bias_oracle(const GenerativeSpec& spec, const UtMoments& moments) {
  spec.validate();
  if (!(spec.noise_sd > 0.0))
    throw std::invalid_argument("bias_oracle: noise_sd must be > 0");
  if (spec.loadings.size() == 0)
    throw std::invalid_argument("bias_oracle: spec must carry loadings V");
  const Index r = spec.r;
  const double sw2 = spec.noise_sd * spec.noise_sd;

  const Matrix vtv = spec.loadings.transpose() * spec.loadings;
  Eigen::FullPivLU<Matrix> lu_vtv(vtv);
  Eigen::FullPivLU<Matrix> lu_uu(moments.u_u);
  if (!lu_vtv.isInvertible())
    throw std::runtime_error("bias_oracle: V'V is singular");
  if (!lu_uu.isInvertible())
    throw std::runtime_error("bias_oracle: E[U'U] is singular");

  const Matrix uu_inv = lu_uu.inverse();
  const Matrix inner = (vtv / sw2 + uu_inv).inverse();
  const double numerator = moments.t_u.dot(uu_inv * inner * spec.alpha);

  const Matrix denom_core = (sw2 * lu_vtv.inverse() + moments.u_u).inverse();
  const double denominator =
      moments.t_sq - moments.t_u.dot(denom_core * moments.t_u);
  if (denominator <= 0.0)
    throw std::runtime_error("bias_oracle: non-positive denominator");
  return numerator / denominator;
}

Matrix known_v_estimate(const Matrix& x, const Matrix& v) {
  if (x.cols() != v.rows())
    throw std::invalid_argument("known_v_estimate: dimension mismatch");
  const Matrix vtv = v.transpose() * v;
  Eigen::FullPivLU<Matrix> lu(vtv);
  if (!lu.isInvertible())
    throw std::runtime_error("known_v_estimate: V'V is singular");
  return x * v * lu.inverse();
}

}  // namespace cmf
