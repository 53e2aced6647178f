#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cmf/solver.hpp"
#include "cmf/subspace.hpp"
#include "cmf/svt.hpp"
#include "test_util.hpp"

using namespace cmf;

namespace {

/// Independent prox oracle for min_Z 1/2 |Z - M|_F^2 + tau |Z|_*: the
/// variational form over full-rank factors Z = A B' with ridge tau/2 on both,
/// solved by exact alternating least squares. SVD-free, so it shares no code
/// path with svt.
Matrix prox_nuclear_oracle(const Matrix& m, double tau, std::uint64_t seed) {
  const Index k = std::min(m.rows(), m.cols());
  Rng rng(seed);
  Matrix a = Matrix::NullaryExpr(m.rows(), k, [&](Index, Index) { return rng.normal(); });
  Matrix b = Matrix::NullaryExpr(m.cols(), k, [&](Index, Index) { return rng.normal(); });
  const Matrix eye = Matrix::Identity(k, k);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 20000; ++it) {
    a = m * b * (b.transpose() * b + tau * eye).ldlt().solve(eye);
    b = m.transpose() * a * (a.transpose() * a + tau * eye).ldlt().solve(eye);
    const double obj = 0.5 * (a * b.transpose() - m).squaredNorm() +
                       0.5 * tau * (a.squaredNorm() + b.squaredNorm());
    if (prev - obj < 1e-15 * (1.0 + std::abs(obj)) && it > 10) break;
    prev = obj;
  }
  return a * b.transpose();
}

ObservedMatrix planted_obs(const test::Planted& inst, double observed_fraction,
                           std::uint64_t seed, double variance = 1.0) {
  const auto keep =
      test::keep_mask(inst.x.rows(), inst.x.cols(), observed_fraction, seed);
  return test::dense_to_observed(inst.x, LossKind::gaussian(variance), keep);
}

}  // namespace

TEST_CASE("svt thresholds a diagonal matrix") {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 1.0;
  const Matrix out = svt(m, 2.0);
  CHECK(out(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(out(1, 1)) < 1e-12);
  CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("svt with tau above sigma_1 yields the zero matrix") {
  const Matrix m = test::random_matrix(5, 4, 5);
  Eigen::BDCSVD<Matrix> svd(m);
  const Matrix out = svt(m, svd.singularValues()(0) * 1.0001);
  CHECK(out.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("svt agrees with the brute-force prox oracle") {
  const Matrix m = test::random_matrix(5, 4, 17);
  const Matrix expected = prox_nuclear_oracle(m, 0.7, 18);
  CHECK((svt(m, 0.7) - expected).norm() < 1e-6);
}

TEST_CASE("svt composition: svt(svt(m,a),b) = svt(m,a+b)") {
  Rng rng(41);
  for (int it = 0; it < 20; ++it) {
    const Matrix m = test::random_matrix(6, 5, 100 + it);
    const double a = rng.uniform();
    const double b = rng.uniform();
    CHECK((svt(svt(m, a), b) - svt(m, a + b)).norm() < 1e-8);
  }
}

TEST_CASE("solve_convex on fully observed unit-variance Gaussian equals svt") {
  const Matrix x = test::random_matrix(12, 9, 51);
  const auto obs = test::dense_to_observed(x, LossKind::gaussian(1.0));
  SolverOptions opts;
  opts.max_iters = 2000;
  opts.rel_tol = 1e-12;
  const double lambda = 1.1;
  const Matrix phi = solve_convex(obs, lambda, opts);
  CHECK((phi - svt(x, lambda)).norm() / svt(x, lambda).norm() < 1e-4);
}

TEST_CASE("solve_convex returns zero above the dual bound") {
  const Matrix x = test::random_matrix(10, 8, 52);
  const auto obs = test::dense_to_observed(x, LossKind::gaussian(1.0));
  const double big = lambda_max(obs) * 1.01;
  const Matrix phi = solve_convex(obs, big, SolverOptions{});
  CHECK(phi.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("solve_convex beats the zero and mean-imputation baselines") {
  const auto inst = test::planted_gaussian(60, 40, 3, 0.5, 61);
  const auto obs = planted_obs(inst, 0.8, 62);
  SolverOptions opts;
  opts.max_iters = 800;
  opts.rel_tol = 1e-9;
  const Matrix phi = solve_convex(obs, 0.1 * lambda_max(obs), opts);
  const double rel = (phi - inst.phi).norm() / inst.phi.norm();

  // Baseline 1: the zero estimate.
  const double rel_zero = 1.0;
  // Baseline 2: column-mean imputation of the observed matrix.
  Matrix imputed(60, 40);
  for (Index j = 0; j < 40; ++j) {
    const auto [b, e] = obs.col_span(j);
    double mean = 0.0;
    for (Index t = b; t < e; ++t) mean += obs.entries_col_major()[t].value;
    mean /= std::max<Index>(e - b, 1);
    imputed.col(j).setConstant(mean);
  }
  for (const Entry& en : obs.entries()) imputed(en.row, en.col) = en.value;
  const double rel_mean = (imputed - inst.phi).norm() / inst.phi.norm();

  CHECK(rel < rel_zero);
  CHECK(rel < rel_mean);
}

TEST_CASE("solve traces descend monotonically") {
  const auto inst = test::planted_gaussian(30, 20, 3, 0.3, 71);
  const auto obs = planted_obs(inst, 0.75, 72);
  SolveTrace trace;

  SolverOptions opts;
  opts.max_iters = 300;
  solve_convex(obs, 0.2 * lambda_max(obs), opts, &trace);
  for (std::size_t t = 1; t < trace.objectives.size(); ++t)
    CHECK(trace.objectives[t] <= trace.objectives[t - 1] + 1e-10);

  SolveTrace ntrace;
  opts.seed = 5;
  solve_nonconvex(obs, 6, 0.5, opts, &ntrace);
  for (std::size_t t = 1; t < ntrace.objectives.size(); ++t)
    CHECK(ntrace.objectives[t] <= ntrace.objectives[t - 1] + 1e-10);
}

TEST_CASE("solve_convex diverger guard: nuclear norm non-increasing in lambda") {
  const auto inst = test::planted_gaussian(25, 18, 3, 0.4, 81);
  const auto obs = planted_obs(inst, 0.8, 82);
  SolverOptions opts;
  opts.max_iters = 600;
  opts.rel_tol = 1e-10;
  const auto grid = default_lambda_grid(obs, 6, 2.0);  // descending grid
  double prev_nuc = -1.0;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {  // ascending lambda
    const Matrix phi = solve_convex(obs, *it, opts);
    const double nuc = nuclear_norm(phi);
    if (prev_nuc >= 0.0) CHECK(nuc <= prev_nuc + 1e-8);
    prev_nuc = nuc;
  }
}

TEST_CASE("solve_nonconvex factorizes exactly with quadratic loss, lambda 0") {
  const auto inst = test::planted_gaussian(20, 12, 3, 0.0, 91);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0));
  SolverOptions opts;
  opts.seed = 3;
  opts.max_iters = 500;
  opts.rel_tol = 1e-14;
  const FactorPair f = solve_nonconvex(obs, 5, 0.0, opts);
  CHECK((f.product() - inst.x).norm() / inst.x.norm() < 1e-6);
}

TEST_CASE("solve_nonconvex with huge lambda drives both factors to zero") {
  const auto inst = test::planted_gaussian(15, 10, 2, 0.2, 92);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0));
  SolverOptions opts;
  opts.seed = 4;
  const FactorPair f = solve_nonconvex(obs, 3, 1e8, opts);
  CHECK(f.product().cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("solve_nonconvex is deterministic given the seed") {
  const auto inst = test::planted_gaussian(15, 10, 2, 0.3, 93);
  const auto obs = planted_obs(inst, 0.9, 94);
  SolverOptions opts;
  opts.seed = 11;
  const FactorPair f1 = solve_nonconvex(obs, 4, 0.3, opts);
  const FactorPair f2 = solve_nonconvex(obs, 4, 0.3, opts);
  CHECK((f1.left - f2.left).norm() == 0.0);
  CHECK((f1.right - f2.right).norm() == 0.0);
}

TEST_CASE("solve_nonconvex rejects k = 0 and empty observations") {
  const auto inst = test::planted_gaussian(6, 5, 2, 0.1, 95);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0));
  CHECK_THROWS_AS(solve_nonconvex(obs, 0, 0.1, SolverOptions{}),
                  std::invalid_argument);
}

TEST_CASE("nonconvex matches the convex objective at matched lambda") {
  const auto inst = test::planted_gaussian(40, 25, 3, 0.5, 96);
  const auto obs = planted_obs(inst, 0.85, 97);
  const double lambda = 0.15 * lambda_max(obs);

  SolverOptions copts;
  copts.max_iters = 4000;
  copts.rel_tol = 1e-12;
  const Matrix phi_cvx = solve_convex(obs, lambda, copts);
  const double obj_cvx = objective(obs, phi_cvx, lambda);

  SolverOptions nopts;
  nopts.max_iters = 3000;
  nopts.rel_tol = 1e-13;
  nopts.seed = 21;
  const FactorPair f = solve_nonconvex(obs, 10, lambda, nopts);
  const double obj_ncvx = nonconvex_objective(obs, f, lambda);

  CHECK(std::abs(obj_ncvx - obj_cvx) / std::abs(obj_cvx) < 1e-3);
  CHECK((f.product() - phi_cvx).norm() / phi_cvx.norm() < 1e-2);
}

TEST_CASE("column permutation of the input permutes the solution") {
  const auto inst = test::planted_gaussian(18, 12, 2, 0.3, 98);
  const auto keep = test::keep_mask(18, 12, 0.85, 99);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0), keep);

  std::vector<Index> perm(12);
  for (Index j = 0; j < 12; ++j) perm[j] = (j + 5) % 12;
  std::vector<Entry> permuted;
  for (const Entry& e : obs.entries())
    permuted.push_back({e.row, perm[e.col], e.value});
  const ObservedMatrix obs_perm(18, 12, permuted,
                                std::vector<LossKind>(12, LossKind::gaussian(1.0)));

  SolverOptions opts;
  opts.max_iters = 400;
  opts.rel_tol = 1e-10;
  const double lambda = 0.2 * lambda_max(obs);
  const Matrix phi = solve_convex(obs, lambda, opts);
  const Matrix phi_perm = solve_convex(obs_perm, lambda, opts);
  for (Index j = 0; j < 12; ++j)
    CHECK((phi_perm.col(perm[j]) - phi.col(j)).norm() < 1e-9);
}

TEST_CASE("extract_confounders on a rank-1 outer product recovers u") {
  Rng rng(101);
  Vector u(8), v(5);
  for (Index i = 0; i < 8; ++i) u(i) = rng.normal();
  for (Index j = 0; j < 5; ++j) v(j) = rng.normal();
  const Matrix phi = u * v.transpose();
  const ConfounderBasis basis = extract_confounders(phi, 1);
  Vector expected = u / u.norm();
  if ((basis.u.col(0) - expected).norm() > (basis.u.col(0) + expected).norm())
    expected = -expected;
  CHECK((basis.u.col(0) - expected).norm() < 1e-10);
  CHECK_FALSE(basis.rank_warning);
}

TEST_CASE("extract_confounders recovers an exact rank-r column space") {
  const auto inst = test::planted_gaussian(30, 12, 4, 0.0, 102);
  const ConfounderBasis basis = extract_confounders(inst.phi, 4);
  const Matrix u_true = orthonormalize(inst.u);
  CHECK(principal_angle(u_true, basis.u) < 1e-10);
  CHECK((basis.u.transpose() * basis.u - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-10);
}

TEST_CASE("extract_confounders flags r_hat beyond the numerical rank") {
  const auto inst = test::planted_gaussian(10, 6, 2, 0.0, 103);
  const ConfounderBasis basis = extract_confounders(inst.phi, 4);
  CHECK(basis.rank_warning);
  CHECK(basis.u.cols() == 4);
}

TEST_CASE("extract_confounders sign convention is deterministic") {
  const auto inst = test::planted_gaussian(12, 7, 3, 0.1, 104);
  const ConfounderBasis a = extract_confounders(inst.x, 3);
  const ConfounderBasis b = extract_confounders(inst.x, 3);
  CHECK((a.u - b.u).norm() == 0.0);
  for (Index c = 0; c < 3; ++c) {
    Index first = 0;
    const double colmax = a.u.col(c).cwiseAbs().maxCoeff();
    while (std::abs(a.u(first, c)) <= 1e-9 * colmax) ++first;
    CHECK(a.u(first, c) > 0.0);
  }
}

TEST_CASE("effective_rank counts relative singular values") {
  CHECK(effective_rank(Matrix::Zero(4, 3), 1e-7) == 0);
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 5.0;
  d(1, 1) = 3.0;
  d(2, 2) = 1e-12;
  CHECK(effective_rank(d, 1e-7) == 2);
  CHECK_THROWS_AS(effective_rank(d, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(effective_rank(d, 1.0), std::invalid_argument);
}

TEST_CASE("principal angle to the truth improves with more covariates") {
  // Median over seeds of the EFMC confounder error, p in {100, 200, 400}.
  const Index ps[] = {100, 200, 400};
  std::vector<double> medians;
  for (const Index p : ps) {
    const Index n = 2 * p;
    std::vector<double> angles;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto inst = test::planted_gaussian(n, p, 5, 1.0, 1000 + seed);
      const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0));
      SolverOptions opts;
      opts.seed = seed;
      opts.max_iters = 120;
      opts.rel_tol = 1e-8;
      const FactorPair f = solve_nonconvex(obs, 8, 0.05 * lambda_max(obs), opts);
      const ConfounderBasis basis = extract_confounders(f.product(), 5);
      angles.push_back(principal_angle(orthonormalize(inst.u), basis.u));
    }
    std::sort(angles.begin(), angles.end());
    medians.push_back(0.5 * (angles[4] + angles[5]));
  }
  CHECK(medians[1] <= medians[0] + 1e-12);
  CHECK(medians[2] <= medians[1] + 1e-12);
}

TEST_CASE("theory_lambda evaluates the stated formula") {
  const double v = theory_lambda(1.5, 2.0, 100, 50, 5, 2500);
  const double nbar = 100.0;
  const double expected =
      2.0 * 1.5 * 2.0 * std::sqrt(100.0 * 50.0) *
      std::sqrt(5.0 * nbar * std::log(nbar) / 2500.0);
  CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}
