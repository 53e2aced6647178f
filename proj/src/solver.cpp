#include "cmf/solver.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "cmf/rng.hpp"
#include "cmf/svt.hpp"

namespace cmf {

namespace {

double np_over_omega(const ObservedMatrix& obs) {
  return static_cast<double>(obs.rows()) * static_cast<double>(obs.cols()) /
         static_cast<double>(obs.n_observed());
}

/// Gradient of the scaled data term; zero on unobserved cells.
Matrix data_gradient(const ObservedMatrix& obs, const Matrix& phi) {
  Matrix g = Matrix::Zero(obs.rows(), obs.cols());
  const double scale = np_over_omega(obs);
  for (const Entry& e : obs.entries())
    g(e.row, e.col) = scale * loss_grad(obs.col_loss(e.col), e.value, phi(e.row, e.col));
  return g;
}

}  // namespace

double lambda_max(const ObservedMatrix& obs) {
  const Matrix g = data_gradient(obs, Matrix::Zero(obs.rows(), obs.cols()));
  Eigen::BDCSVD<Matrix> svd(g);
  return svd.singularValues()(0);
}

std::vector<double> default_lambda_grid(const ObservedMatrix& obs, Index size,
                                        double decades) {
  if (size < 1) throw std::invalid_argument("lambda grid size must be >= 1");
  const double top = lambda_max(obs);
  std::vector<double> grid(size);
  if (size == 1) {
    grid[0] = top;
    return grid;
  }
  for (Index i = 0; i < size; ++i)
    grid[i] = top * std::pow(10.0, -decades * static_cast<double>(i) /
                                       static_cast<double>(size - 1));
  return grid;
}

NaturalParamMatrix solve_convex(const ObservedMatrix& obs, double lambda,
                                const SolverOptions& opts, SolveTrace* trace) {
  if (obs.n_observed() < 1)
    throw std::invalid_argument("solve_convex: no observed entries");
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw std::invalid_argument("solve_convex: lambda must be finite and >= 0");

  Matrix phi = Matrix::Zero(obs.rows(), obs.cols());
  double f = data_term(obs, phi);
  double obj = f;  // nuclear norm of 0 is 0
  if (trace) {
    *trace = SolveTrace{};
    trace->objectives.push_back(obj);
  }

  double step = opts.initial_step;
  for (Index it = 0; it < opts.max_iters; ++it) {
    const Matrix grad = data_gradient(obs, phi);
    Matrix next;
    double f_next = 0.0;
    // Backtrack until the quadratic upper bound at `step` holds; this keeps
    // the full objective non-increasing.
    for (;;) {
      next = svt(phi - step * grad, step * lambda);
      f_next = data_term(obs, next);
      const Matrix diff = next - phi;
      const double bound = f + grad.cwiseProduct(diff).sum() +
                           diff.squaredNorm() / (2.0 * step);
      if (f_next <= bound) break;
      step *= opts.backtracking_shrink;
      if (step < 1e-18) throw DivergedError("solve_convex: line search failed");
    }
    const double obj_next = f_next + lambda * nuclear_norm(next);
    if (!std::isfinite(obj_next))
      throw DivergedError("solve_convex: non-finite objective");

    const bool done = std::abs(obj - obj_next) <= opts.rel_tol * (1.0 + std::abs(obj));
    phi = std::move(next);
    f = f_next;
    obj = obj_next;
    if (trace) trace->objectives.push_back(obj);
    if (done) {
      if (trace) trace->converged = true;
      return phi;
    }
    step /= opts.backtracking_shrink;  // let the step recover between iterations
  }
  return phi;
}

double nonconvex_objective(const ObservedMatrix& obs, const FactorPair& f,
                           double lambda) {
  double sum = 0.0;
  for (const Entry& e : obs.entries()) {
    const double phi = f.left.row(e.row).dot(f.right.row(e.col));
    sum += loss_value(obs.col_loss(e.col), e.value, phi);
  }
  return np_over_omega(obs) * sum +
         0.5 * lambda * (f.left.squaredNorm() + f.right.squaredNorm());
}

namespace {

struct RowUpdate {
  Eigen::RowVectorXd value;
  bool used_fallback = false;
};

/// One damped Newton update of a single factor row, holding the other factor
/// fixed. The fit is strictly convex (per-entry convex losses plus ridge), so
/// a damped step always descends; if backtracking still fails numerically,
/// fall back to coordinate-wise bisection on the gradient.
RowUpdate update_row(const Eigen::RowVectorXd& u0, const Matrix& other,
                     const std::vector<Entry>& entries, Index begin, Index end,
                     bool row_side, const ObservedMatrix& obs, double scale,
                     double lambda) {
  const Index k = u0.cols();
  Vector grad = Vector::Zero(k);
  Matrix hess = lambda * Matrix::Identity(k, k);

  auto entry_loss = [&](const Entry& e) -> const LossKind& {
    return obs.col_loss(e.col);
  };
  auto partner = [&](const Entry& e) -> Index { return row_side ? e.col : e.row; };
  auto eval = [&](const Eigen::RowVectorXd& cand) {
    double f = 0.5 * lambda * cand.squaredNorm();
    for (Index t = begin; t < end; ++t) {
      const Entry& e = entries[t];
      f += scale * loss_value(entry_loss(e), e.value, cand.dot(other.row(partner(e))));
    }
    return f;
  };

  double f0 = 0.5 * lambda * u0.squaredNorm();
  for (Index t = begin; t < end; ++t) {
    const Entry& e = entries[t];
    const auto v = other.row(partner(e));
    const double phi = u0.dot(v);
    const LossKind& kind = entry_loss(e);
    f0 += scale * loss_value(kind, e.value, phi);
    grad.noalias() += scale * loss_grad(kind, e.value, phi) * v.transpose();
    hess.noalias() += scale * loss_curv(kind, e.value, phi) * v.transpose() * v;
  }
  grad += lambda * u0.transpose();

  // Row already stationary; skip the step entirely.
  if (grad.norm() <= 1e-13 * (1.0 + u0.norm())) return {u0, false};

  const Vector dir = -hess.ldlt().solve(grad);
  if (dir.allFinite()) {
    double t_step = 1.0;
    while (t_step >= 1e-12) {
      Eigen::RowVectorXd cand = u0 + t_step * dir.transpose();
      if (eval(cand) <= f0) return {std::move(cand), false};
      t_step *= 0.5;
    }
  }

  // Bisection fallback, cycling once through the coordinates.
  Eigen::RowVectorXd u = u0;
  for (Index c = 0; c < k; ++c) {
    auto g1 = [&](double s) {
      Eigen::RowVectorXd cand = u;
      cand(c) = s;
      double g = lambda * s;
      for (Index t = begin; t < end; ++t) {
        const Entry& e = entries[t];
        const auto v = other.row(partner(e));
        g += scale * loss_grad(entry_loss(e), e.value, cand.dot(v)) * v(c);
      }
      return g;
    };
    double lo = u(c) - 1.0, hi = u(c) + 1.0;
    for (int grow = 0; grow < 60 && g1(lo) > 0.0; ++grow) lo -= (hi - lo);
    for (int grow = 0; grow < 60 && g1(hi) < 0.0; ++grow) hi += (hi - lo);
    if (g1(lo) > 0.0 || g1(hi) < 0.0) continue;  // gradient flat in c, keep value
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g1(mid) > 0.0 ? hi : lo) = mid;
    }
    u(c) = 0.5 * (lo + hi);
  }
  if (eval(u) > f0) u = u0;  // never accept an ascent
  return {std::move(u), true};
}

}  // namespace

FactorPair solve_nonconvex(const ObservedMatrix& obs, Index k, double lambda,
                           const SolverOptions& opts, SolveTrace* trace) {
  if (k < 1 || k > std::min(obs.rows(), obs.cols()))
    throw std::invalid_argument("solve_nonconvex: k must be in [1, min(N,p)]");
  if (obs.n_observed() < 1)
    throw std::invalid_argument("solve_nonconvex: no observed entries");

  const double scale = np_over_omega(obs);
  Rng rng(mix_seed(opts.seed, "nonconvex_init"));
  const double init_scale = 1.0 / std::sqrt(static_cast<double>(k));
  FactorPair f;
  f.k = k;
  f.left = Matrix::NullaryExpr(obs.rows(), k,
                               [&](Index, Index) { return rng.normal() * init_scale; });
  f.right = Matrix::NullaryExpr(obs.cols(), k,
                                [&](Index, Index) { return rng.normal() * init_scale; });

  double obj = nonconvex_objective(obs, f, lambda);
  if (trace) {
    *trace = SolveTrace{};
    trace->objectives.push_back(obj);
  }

  Index fallbacks = 0;
  for (Index sweep = 0; sweep < opts.max_iters; ++sweep) {
    for (Index i = 0; i < obs.rows(); ++i) {
      const auto [b, e] = obs.row_span(i);
      RowUpdate upd = update_row(f.left.row(i), f.right, obs.entries(), b, e,
                                 /*row_side=*/true, obs, scale, lambda);
      f.left.row(i) = upd.value;
      if (upd.used_fallback) ++fallbacks;
    }
    for (Index j = 0; j < obs.cols(); ++j) {
      const auto [b, e] = obs.col_span(j);
      RowUpdate upd = update_row(f.right.row(j), f.left, obs.entries_col_major(),
                                 b, e, /*row_side=*/false, obs, scale, lambda);
      f.right.row(j) = upd.value;
      if (upd.used_fallback) ++fallbacks;
    }
    const double obj_next = nonconvex_objective(obs, f, lambda);
    if (!std::isfinite(obj_next))
      throw DivergedError("solve_nonconvex: non-finite objective");
    if (trace) {
      trace->objectives.push_back(obj_next);
      trace->newton_fallbacks = fallbacks;
    }
    if (std::abs(obj - obj_next) <= opts.rel_tol * (1.0 + std::abs(obj))) {
      if (trace) trace->converged = true;
      return f;
    }
    obj = obj_next;
  }
  return f;
}

ConfounderBasis extract_confounders(const NaturalParamMatrix& phi_hat,
                                    Index r_hat) {
  const Index max_rank = std::min(phi_hat.rows(), phi_hat.cols());
  if (r_hat < 1 || r_hat > max_rank)
    throw std::invalid_argument("extract_confounders: r_hat out of range");

  Eigen::BDCSVD<Matrix> svd(phi_hat, Eigen::ComputeThinU);
  ConfounderBasis out;
  out.u = svd.matrixU().leftCols(r_hat);

  const Vector& s = svd.singularValues();
  const double tiny = 1e-12 * std::max(1.0, s(0));
  out.rank_warning = s(r_hat - 1) <= tiny;

  // Sign convention: first non-negligible entry of each column positive.
  for (Index c = 0; c < r_hat; ++c) {
    const double colmax = out.u.col(c).cwiseAbs().maxCoeff();
    for (Index i = 0; i < out.u.rows(); ++i) {
      if (std::abs(out.u(i, c)) > 1e-9 * colmax) {
        if (out.u(i, c) < 0.0) out.u.col(c) = -out.u.col(c);
        break;
      }
    }
  }
  return out;
}

Index effective_rank(const NaturalParamMatrix& phi_hat, double rel_threshold) {
  if (!(rel_threshold > 0.0 && rel_threshold < 1.0))
    throw std::invalid_argument("effective_rank: threshold must be in (0,1)");
  if (phi_hat.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(phi_hat);
  const Vector& s = svd.singularValues();
  if (s(0) <= 0.0) return 0;
  const double cut = rel_threshold * s(0);
  Index r = 0;
  while (r < s.size() && s(r) > cut) ++r;
  return r;
}

double theory_lambda(double c0, double sigma_prime, Index n, Index p, Index r,
                     Index n_observed) {
  const double nbar = static_cast<double>(std::max(n, p));
  return 2.0 * c0 * sigma_prime *
         std::sqrt(static_cast<double>(n) * static_cast<double>(p)) *
         std::sqrt(static_cast<double>(r) * nbar * std::log(nbar) /
                   static_cast<double>(n_observed));
}

}  // namespace cmf
