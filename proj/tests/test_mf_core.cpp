#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "cmf/losses.hpp"
#include "cmf/observed.hpp"
#include "cmf/rng.hpp"
#include "test_util.hpp"

using namespace cmf;

namespace {

double random_valid_x(const LossKind& kind, Rng& rng) {
  switch (kind.family) {
    case LossFamily::Gaussian: return 3.0 * rng.normal();
    case LossFamily::Bernoulli: return rng.bernoulli(0.5) ? 1.0 : -1.0;
    case LossFamily::Poisson: return std::floor(8.0 * rng.uniform());
  }
  return 0.0;
}

const LossKind kKinds[] = {LossKind::gaussian(1.0), LossKind::gaussian(5.0),
                           LossKind::bernoulli(), LossKind::poisson()};

}  // namespace

TEST_CASE("loss_value matches the worked examples") {
  CHECK(loss_value(LossKind::gaussian(1.0), 1.0, 1.0) == doctest::Approx(0.0));
  CHECK(loss_value(LossKind::bernoulli(), 1.0, 0.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_value(LossKind::poisson(), 0.0, 0.0) == doctest::Approx(1.0));
  // Gaussian variance scales the quadratic.
  CHECK(loss_value(LossKind::gaussian(5.0), 3.0, 1.0) == doctest::Approx(0.4));
}

TEST_CASE("loss_grad matches the worked examples") {
  CHECK(loss_grad(LossKind::gaussian(1.0), 2.0, 0.0) == doctest::Approx(-2.0));
  CHECK(loss_grad(LossKind::bernoulli(), 1.0, 0.0) == doctest::Approx(-0.5));
  CHECK(loss_grad(LossKind::poisson(), 1.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("invalid observations raise domain errors") {
  CHECK_THROWS_AS(loss_value(LossKind::bernoulli(), 0.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(loss_value(LossKind::bernoulli(), 2.0, 0.3), std::domain_error);
  CHECK_THROWS_AS(loss_value(LossKind::poisson(), -1.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(loss_value(LossKind::poisson(), 1.5, 0.0), std::domain_error);
  CHECK_THROWS_AS(LossKind::gaussian(0.0), std::invalid_argument);
}

TEST_CASE("analytic gradient agrees with centered finite differences") {
  Rng rng(7);
  const double h = 1e-5;
  for (const LossKind& kind : kKinds) {
    for (int it = 0; it < 100; ++it) {
      const double x = random_valid_x(kind, rng);
      const double phi = 2.5 * rng.normal();
      const double fd =
          (loss_value(kind, x, phi + h) - loss_value(kind, x, phi - h)) / (2 * h);
      const double g = loss_grad(kind, x, phi);
      CHECK(std::abs(g - fd) / (1.0 + std::abs(g)) < 1e-6);
    }
  }
}

TEST_CASE("losses are convex along random chords") {
  Rng rng(11);
  for (const LossKind& kind : kKinds) {
    for (int it = 0; it < 100; ++it) {
      const double x = random_valid_x(kind, rng);
      const double p1 = 2.0 * rng.normal();
      const double p2 = 2.0 * rng.normal();
      const double t = rng.uniform();
      const double lhs = loss_value(kind, x, t * p1 + (1 - t) * p2);
      const double rhs =
          t * loss_value(kind, x, p1) + (1 - t) * loss_value(kind, x, p2);
      CHECK(lhs <= rhs + 1e-12);
    }
  }
}

TEST_CASE("log-partition curvature is strictly positive on a grid") {
  for (const LossKind& kind : kKinds) {
    for (double phi = -4.0; phi <= 4.0; phi += 0.5) {
      const double x = kind.family == LossFamily::Bernoulli ? 1.0 : 1.0;
      CHECK(loss_curv(kind, x, phi) > 0.0);
    }
  }
}

TEST_CASE("ObservedMatrix validates indices, duplicates and domains") {
  const std::vector<LossKind> losses = {LossKind::gaussian(), LossKind::bernoulli()};
  CHECK_NOTHROW(ObservedMatrix(2, 2, {{0, 0, 1.5}, {1, 1, -1.0}}, losses));
  CHECK_THROWS_AS(ObservedMatrix(2, 2, {{2, 0, 1.0}}, losses), std::invalid_argument);
  CHECK_THROWS_AS(ObservedMatrix(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}, losses),
                  std::invalid_argument);
  CHECK_THROWS_AS(ObservedMatrix(2, 2, {{0, 1, 0.5}}, losses), std::domain_error);
  CHECK_THROWS_AS(ObservedMatrix(2, 1, {{0, 0, 1.0}}, losses), std::invalid_argument);
}

TEST_CASE("objective equals zero at an exact Gaussian fit and Np ln2 at phi=0") {
  const Matrix x = test::random_matrix(6, 5, 3);
  const auto obs = test::dense_to_observed(x, LossKind::gaussian(1.0));
  CHECK(objective(obs, x, 0.0) == doctest::Approx(0.0).epsilon(1e-12));

  Matrix signs = x.unaryExpr([](double v) { return v >= 0 ? 1.0 : -1.0; });
  const auto keep = test::keep_mask(6, 5, 0.7, 9);
  const auto bobs = test::dense_to_observed(signs, LossKind::bernoulli(), keep);
  const Matrix zero = Matrix::Zero(6, 5);
  CHECK(objective(bobs, zero, 0.0) ==
        doctest::Approx(6.0 * 5.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("objective cross-checks against direct re-summation with a naive SVD") {
  const Matrix x = test::random_matrix(6, 5, 21);
  const Matrix phi = test::random_matrix(6, 5, 22);
  const auto keep = test::keep_mask(6, 5, 0.8, 23);
  const auto obs = test::dense_to_observed(x, LossKind::gaussian(2.0), keep);
  const double lambda = 0.37;

  // Independent oracle: plain summation plus nuclear norm from the
  // eigenvalues of phi' phi.
  double sum = 0.0;
  Index count = 0;
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 5; ++j) {
      if (!keep[static_cast<std::size_t>(i) * 5 + j]) continue;
      const double d = x(i, j) - phi(i, j);
      sum += d * d / (2.0 * 2.0);
      ++count;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(phi.transpose() * phi);
  double nuc = 0.0;
  for (Index k = 0; k < eig.eigenvalues().size(); ++k)
    nuc += std::sqrt(std::max(eig.eigenvalues()(k), 0.0));
  const double expected = 30.0 / count * sum + lambda * nuc;

  CHECK(objective(obs, phi, lambda) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("objective is invariant to entry storage order") {
  const Matrix x = test::random_matrix(7, 4, 31);
  const Matrix phi = test::random_matrix(7, 4, 32);
  std::vector<Entry> entries;
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 4; ++j) entries.push_back({i, j, x(i, j)});

  const std::vector<LossKind> losses(4, LossKind::gaussian());
  const ObservedMatrix a(7, 4, entries, losses);
  std::reverse(entries.begin(), entries.end());
  Rng rng(33);
  for (std::size_t t = entries.size() - 1; t > 0; --t)
    std::swap(entries[t], entries[rng.below(t + 1)]);
  const ObservedMatrix b(7, 4, entries, losses);

  CHECK(objective(a, phi, 0.9) == objective(b, phi, 0.9));  // exact
}

TEST_CASE("objective rejects an empty observation set") {
  const std::vector<LossKind> losses(3, LossKind::gaussian());
  const ObservedMatrix obs(4, 3, {}, losses);
  CHECK_THROWS_AS(objective(obs, Matrix::Zero(4, 3), 0.1), std::invalid_argument);
}
