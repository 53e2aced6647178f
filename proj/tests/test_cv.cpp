#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "cmf/cross_validate.hpp"
#include "test_util.hpp"

using namespace cmf;

TEST_CASE("a single-element grid is always chosen") {
  const auto inst = test::planted_gaussian(15, 10, 2, 0.3, 7);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0));
  CvOptions opts;
  opts.solver.seed = 1;
  const CvResult cv = cross_validate(obs, {0.8}, 3, opts);
  CHECK(cv.chosen_lambda == 0.8);
  CHECK(cv.lambda_grid.size() == 1);
  CHECK(std::isfinite(cv.heldout_mean[0]));
}

TEST_CASE("same seed gives an identical fold assignment and CvResult") {
  const auto inst = test::planted_gaussian(20, 12, 2, 0.4, 8);
  const auto keep = test::keep_mask(20, 12, 0.9, 9);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0), keep);

  const auto folds1 = cv_folds(obs.n_observed(), 5, 42);
  const auto folds2 = cv_folds(obs.n_observed(), 5, 42);
  CHECK(folds1 == folds2);
  CHECK(cv_folds(obs.n_observed(), 5, 43) != folds1);

  CvOptions opts;
  opts.solver.seed = 42;
  opts.solver.max_iters = 200;
  const auto grid = default_lambda_grid(obs, 4, 2.0);
  const CvResult a = cross_validate(obs, grid, 5, opts);
  const CvResult b = cross_validate(obs, grid, 5, opts);
  CHECK(a.chosen_lambda == b.chosen_lambda);
  CHECK(a.chosen_rank == b.chosen_rank);
  CHECK(a.heldout_mean == b.heldout_mean);
  CHECK(a.heldout_sd == b.heldout_sd);
}

TEST_CASE("fold partition is balanced and covers every entry once") {
  const auto folds = cv_folds(103, 5, 3);
  std::vector<int> counts(5, 0);
  for (int f : folds) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[f];
  }
  CHECK(*std::max_element(counts.begin(), counts.end()) -
            *std::min_element(counts.begin(), counts.end()) <=
        1);
}

TEST_CASE("noiseless planted rank-3 instance: CV chooses rank 3") {
  const auto inst = test::planted_gaussian(40, 30, 3, 0.0, 10);
  const auto keep = test::keep_mask(40, 30, 0.85, 11);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0), keep);

  CvOptions opts;
  opts.solver.seed = 12;
  opts.solver.max_iters = 2000;
  opts.solver.rel_tol = 1e-10;
  opts.rank_threshold = 1e-7;
  const auto grid = default_lambda_grid(obs, 9, 4.0);  // spans 4 decades
  const CvResult cv = cross_validate(obs, grid, 5, opts);
  CHECK(cv.chosen_rank == 3);
}

TEST_CASE("errors: empty grid and too few folds") {
  const auto inst = test::planted_gaussian(8, 6, 2, 0.1, 13);
  const auto obs = test::dense_to_observed(inst.x, LossKind::gaussian(1.0));
  CvOptions opts;
  CHECK_THROWS_AS(cross_validate(obs, {}, 5, opts), std::invalid_argument);
  CHECK_THROWS_AS(cross_validate(obs, {0.1}, 1, opts), std::invalid_argument);
}

TEST_CASE("a fold emptying a row is flagged, not fatal") {
  // Row 3 has a single observed entry, so one training fold must lose it.
  Matrix x = test::random_matrix(6, 5, 14);
  std::vector<char> keep(30, 1);
  for (Index j = 1; j < 5; ++j) keep[3 * 5 + j] = 0;
  const auto obs = test::dense_to_observed(x, LossKind::gaussian(1.0), keep);
  CvOptions opts;
  opts.solver.seed = 15;
  const CvResult cv = cross_validate(obs, default_lambda_grid(obs, 3, 2.0), 5, opts);
  CHECK(cv.fold_coverage_warning);
}
