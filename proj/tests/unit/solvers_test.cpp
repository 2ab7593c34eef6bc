#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "npmean/errors.hpp"
#include "npmean/rng.hpp"
#include "npmean/solvers.hpp"
#include "oracles.hpp"

namespace npmean {
namespace {

SolverConfig tight() {
  SolverConfig c;
  c.tol = 1e-11;
  c.max_iter = 200000;
  return c;
}

TEST(SoftThreshold, Cases) {
  EXPECT_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_EQ(soft_threshold(-3.0, 1.0), -2.0);
  EXPECT_EQ(soft_threshold(0.5, 1.0), 0.0);
  EXPECT_EQ(soft_threshold(-1.0, 1.0), 0.0);
}

TEST(ScadDerivative, Regions) {
  EXPECT_EQ(scad_derivative(0.5, 1.0, 3.7), 1.0);
  EXPECT_NEAR(scad_derivative(2.0, 1.0, 3.7), 1.7 / 2.7, 1e-15);
  EXPECT_EQ(scad_derivative(4.0, 1.0, 3.7), 0.0);
}

TEST(Wls, ExactFit) {
  WlsProblem prob;
  prob.x.resize(3, 2);
  prob.x << 1, 0, 1, 1, 1, 2;
  prob.y = Eigen::Vector3d(1, 3, 5);
  prob.w = Eigen::Vector3d(1, 2, 3);
  const auto sol = wls_solve(prob);
  EXPECT_NEAR(sol.coef(0), 1.0, 1e-12);
  EXPECT_NEAR(sol.coef(1), 2.0, 1e-12);
  EXPECT_FALSE(sol.ridged);
}

TEST(Wls, WeightedMean) {
  WlsProblem prob;
  prob.x = Eigen::MatrixXd::Ones(3, 1);
  prob.y = Eigen::Vector3d(1, 2, 4);
  prob.w = Eigen::Vector3d(1, 1, 2);
  EXPECT_NEAR(wls_solve(prob).coef(0), 11.0 / 4.0, 1e-12);
}

TEST(Wls, SingularGetsRidgeOrThrows) {
  WlsProblem prob;
  prob.x.resize(4, 3);
  prob.x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
  prob.y = Eigen::Vector4d(1, 2, 3, 4);
  prob.w = Eigen::Vector4d::Ones();
  const auto sol = wls_solve(prob);
  EXPECT_TRUE(sol.ridged);
  EXPECT_LT((prob.x * sol.coef - prob.y).norm(), 1e-5);
  SolverConfig strict;
  strict.ridge_fallback = false;
  EXPECT_THROW(wls_solve(prob, strict), SingularityError);
}

TEST(Wls, MatchesNormalEquationsOracle) {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    auto prob = testing::random_lasso_problem(rng, 40, 5);
    const auto coef = wls_solve(prob).coef;
    EXPECT_LT((coef - testing::normal_equations(prob)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Lasso, KktAndEnumerationOracle) {
  Rng rng(101);
  for (int t = 0; t < 100; ++t) {
    auto prob = testing::random_lasso_problem(rng, 30, 4);
    const double lmax = PenalizedWls(prob.x, prob.y, prob.w, true, true).lambda_max(prob.penalty_factors);
    prob.lambda = lmax * rng.uniform(0.02, 0.9);
    const auto cfg = tight();
    const auto coef = lasso_cd(prob, cfg);
    const auto eff = effective_penalty_factors(prob, cfg);
    EXPECT_LT(testing::kkt_violation(prob, coef, eff), 1e-6) << "problem " << t;
    const auto ref = testing::enumerate_lasso(prob, eff);
    ASSERT_TRUE(ref.has_value()) << "problem " << t;
    EXPECT_LT((coef - *ref).cwiseAbs().maxCoeff(), 1e-6) << "problem " << t;
  }
}

TEST(Lasso, LambdaZeroMatchesNormalEquations) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto prob = testing::random_lasso_problem(rng, 30, 4);
    prob.lambda = 0.0;
    EXPECT_LT((lasso_cd(prob) - testing::normal_equations(prob)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Lasso, AllFactorsZeroIsWls) {
  Rng rng(6);
  auto prob = testing::random_lasso_problem(rng, 30, 4);
  prob.lambda = 5.0;
  prob.penalty_factors.setZero();
  EXPECT_LT((lasso_cd(prob) - wls_solve(prob).coef).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lasso, LambdaAboveMaxZeroesPenalized) {
  Rng rng(7);
  auto prob = testing::random_lasso_problem(rng, 30, 4);
  prob.penalty_factors.tail(4).setOnes();
  const double lmax = PenalizedWls(prob.x, prob.y, prob.w, true, true).lambda_max(prob.penalty_factors);
  for (double lambda : {lmax * 1.0001, 1e12, std::numeric_limits<double>::infinity()}) {
    prob.lambda = lambda;
    const auto coef = lasso_cd(prob);
    EXPECT_TRUE((coef.tail(4).array() == 0.0).all());
    EXPECT_NEAR(coef(0), prob.w.dot(prob.y) / prob.w.sum(), 1e-10);
  }
  prob.lambda = lmax * 0.95;
  EXPECT_FALSE((lasso_cd(prob).tail(4).array() == 0.0).all());
}

TEST(Lasso, InfiniteFactorExcludesColumn) {
  Rng rng(8);
  auto prob = testing::random_lasso_problem(rng, 30, 4);
  prob.lambda = 0.0;
  prob.penalty_factors(2) = std::numeric_limits<double>::infinity();
  prob.penalty_factors(1) = 1.0;
  prob.lambda = 1.0;
  EXPECT_EQ(lasso_cd(prob)(2), 0.0);
}

TEST(Lasso, ObjectiveNonIncreasing) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    auto prob = testing::random_lasso_problem(rng, 50, 6);
    prob.lambda = 10.0;
    LassoDiagnostics diag;
    lasso_cd(prob, tight(), &diag);
    ASSERT_FALSE(diag.objective.empty());
    for (std::size_t k = 1; k < diag.objective.size(); ++k) {
      EXPECT_LE(diag.objective[k], diag.objective[k - 1] * (1 + 1e-12) + 1e-12);
    }
  }
}

TEST(Lasso, NonConvergenceCarriesIterate) {
  Rng rng(10);
  auto prob = testing::random_lasso_problem(rng, 50, 6);
  prob.lambda = 1.0;
  SolverConfig cfg;
  cfg.tol = 0.0;
  cfg.max_iter = 3;
  try {
    lasso_cd(prob, cfg);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    ASSERT_TRUE(e.last_iterate().has_value());
    EXPECT_EQ(e.last_iterate()->size(), prob.x.cols());
  }
}

TEST(Lasso, PathMatchesIndividualSolves) {
  Rng rng(11);
  auto prob = testing::random_lasso_problem(rng, 40, 5);
  const PenalizedWls sys(prob.x, prob.y, prob.w, true, true);
  const auto grid = log_lambda_grid(sys.lambda_max(prob.penalty_factors), 10, 1e-3);
  const auto cfg = tight();
  const auto path = sys.path(PenaltyKind::lasso, prob.penalty_factors, grid, cfg);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    prob.lambda = grid[k];
    EXPECT_LT((path[k] - lasso_cd(prob, cfg)).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Grid, LogSpaced) {
  const auto g = log_lambda_grid(10.0, 5, 1e-4);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g.front(), 10.0);
  EXPECT_NEAR(g.back(), 1e-3, 1e-15);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_NEAR(g[k] / g[k - 1], 0.1, 1e-12);
  EXPECT_THROW(log_lambda_grid(1.0, 0, 0.1), ConfigError);
}

TEST(Scad, FlatRegionMatchesOls) {
  Rng rng(12);
  const int n = 400;
  WlsProblem prob;
  prob.x.resize(n, 3);
  prob.y.resize(n);
  prob.w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    prob.x(i, 0) = 1.0;
    prob.x(i, 1) = rng.normal();
    prob.x(i, 2) = rng.normal();
    prob.y(i) = 1.0 + 3.0 * prob.x(i, 1) - 2.0 * prob.x(i, 2) + 0.1 * rng.normal();
  }
  prob.penalty_factors = Eigen::Vector3d(0, 1, 1);
  prob.lambda = 0.05 * 2.0 * n;
  const auto scad = scad_lla(prob, tight());
  const auto ols = wls_solve(prob).coef;
  EXPECT_LT((scad - ols).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT((lasso_cd(prob, tight()) - ols).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Scad, ZeroesNoiseCoefficient) {
  Rng rng(13);
  const int n = 300;
  WlsProblem prob;
  prob.x.resize(n, 3);
  prob.y.resize(n);
  prob.w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    prob.x(i, 0) = 1.0;
    prob.x(i, 1) = rng.normal();
    prob.x(i, 2) = rng.normal();
    prob.y(i) = 2.0 * prob.x(i, 1) + rng.normal();
  }
  prob.penalty_factors = Eigen::Vector3d(0, 1, 1);
  prob.lambda = 0.3 * 2.0 * n;
  const auto coef = scad_lla(prob, tight());
  EXPECT_EQ(coef(2), 0.0);
  EXPECT_NEAR(coef(1), 2.0, 0.2);
}

TEST(SolveSpd, SolvesAndChecksShape) {
  Eigen::Matrix2d a;
  a << 4, 1, 1, 3;
  const Eigen::Vector2d b(1, 2);
  const auto x = solve_spd(a, b, false);
  EXPECT_LT((a * x - b).norm(), 1e-12);
  EXPECT_THROW(solve_spd(a, Eigen::Vector3d(1, 2, 3), false), DimensionError);
}

}  // namespace
}  // namespace npmean
