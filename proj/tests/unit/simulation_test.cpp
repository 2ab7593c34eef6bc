#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "npmean/errors.hpp"
#include "npmean/outcome.hpp"
#include "npmean/simulation.hpp"

namespace npmean {
namespace {

TEST(Scenario, BuiltinsPassCheck) {
  for (int id = 1; id <= 4; ++id) EXPECT_NO_THROW(ScenarioSpec::builtin(id).check());
  EXPECT_THROW(ScenarioSpec::builtin(5), ConfigError);
  auto spec = ScenarioSpec::builtin(2);
  spec.selection[0].second = 0.9;
  EXPECT_THROW(spec.check(), ConfigError);
}

TEST(Scenario, PopulationMomentsOneToThree) {
  Rng rng(1);
  auto spec = ScenarioSpec::builtin(1);
  spec.population_size = 200000;
  const auto pop = generate_population(spec, rng);
  ASSERT_EQ(pop.x.cols(), 44);
  const double theta = 2.0 + 0.6 * (0.5 + 1.15 + 1.33 + 4.298);
  EXPECT_NEAR(pop.mu, theta, 0.03);
  EXPECT_NEAR(pop.x.col(0).mean(), 0.5, 0.01);
  EXPECT_NEAR(pop.x.col(3).mean(), 4.298, 0.03);
  EXPECT_NEAR(pop.x.col(10).mean(), 0.45, 0.01);
  EXPECT_NEAR(pop.x.col(30).mean(), 0.0, 0.01);
}

TEST(Scenario, KangSchaferPopulation) {
  Rng rng(2);
  auto spec = ScenarioSpec::builtin(4);
  spec.population_size = 100000;
  const auto pop = generate_population(spec, rng);
  ASSERT_EQ(pop.x.cols(), 4);
  EXPECT_NEAR(pop.mu, 210.0, 0.3);
  EXPECT_NEAR(pop.selection_p.mean(), 0.5, 0.01);
  EXPECT_GT(pop.x.col(1).minCoeff(), 0.0);
}

TEST(Sampling, PiProportionalToSizeMeasure) {
  Rng rng(3);
  const auto spec = ScenarioSpec::builtin(1);
  const auto pop = generate_population(spec, rng);
  const auto pi = prob_sample_pi(pop, spec);
  const Eigen::ArrayXd raw = 0.25 + pop.x.col(1).array() + 0.03 * pop.y.array();
  const double c = pi(0) / raw(0);
  EXPECT_LT((pi.array() - c * raw).abs().maxCoeff(), 1e-12);
  EXPECT_NEAR(pi.sum(), 500.0, 1e-9);
}

TEST(Sampling, AssembledSampleIsValid) {
  Rng rng(4);
  const auto spec = ScenarioSpec::builtin(2);
  const auto pop = generate_population(spec, rng);
  const auto delta = draw_nonprob_sample(pop, rng);
  const auto b = draw_prob_sample(pop, spec, rng);
  const auto s = assemble_sample(pop, delta, b);
  EXPECT_TRUE(validate(s).empty());
  EXPECT_EQ(s.n_b(), b.index.size());
  EXPECT_NEAR(static_cast<double>(s.n_b()), 500.0, 80.0);
  EXPECT_EQ(s.n_a(), static_cast<std::size_t>(std::count(delta.begin(), delta.end(), true)));
  for (Eigen::Index i = 0; i < s.db().size(); ++i) EXPECT_NEAR(s.db()(i) * s.pib()(i), 1.0, 1e-12);
}

TEST(Defaults, ScenarioFourRows) {
  const auto tags = default_estimators(4);
  for (auto t : tags) {
    const auto m = propensity_method(t);
    EXPECT_TRUE(m == PropensityMethod::newton || m == PropensityMethod::collaborative);
  }
  EXPECT_EQ(default_estimators(2).size(), 8u);
  EXPECT_EQ(default_pipeline(4).benkeser_outcome, OutcomeKind::flexible);
}

SimulationConfig small(int jobs) {
  SimulationConfig cfg;
  cfg.spec = ScenarioSpec::builtin(1);
  cfg.spec.population_size = 3000;
  cfg.spec.target_nb = 250;
  cfg.estimators = {EstimatorTag::ipw_logistic, EstimatorTag::aipw_lasso};
  cfg.replicates = 6;
  cfg.seed = 123;
  cfg.jobs = jobs;
  cfg.pipeline = default_pipeline(1);
  return cfg;
}

std::string csv(const MonteCarloResult& r) {
  std::ostringstream out;
  write_metrics_csv(r, out);
  write_selection_csv(r, out);
  return out.str();
}

TEST(MonteCarlo, DeterministicAcrossJobs) {
  const auto a = run_monte_carlo(small(1));
  const auto b = run_monte_carlo(small(1));
  const auto c = run_monte_carlo(small(3));
  EXPECT_EQ(csv(a), csv(b));
  EXPECT_EQ(csv(a), csv(c));
  for (std::size_t r = 0; r < a.replicates.size(); ++r) {
    EXPECT_EQ(a.replicates[r].estimates[1].mu_hat, c.replicates[r].estimates[1].mu_hat);
  }
}

TEST(MonteCarlo, MetricsInvariants) {
  auto cfg = small(2);
  cfg.fixed_population = true;
  const auto res = run_monte_carlo(cfg);
  EXPECT_TRUE(res.all_valid());
  const double mu = res.replicates[0].mu;
  for (const auto& rep : res.replicates) EXPECT_EQ(rep.mu, mu);
  for (const auto& row : res.rows) {
    const double n = row.completed;
    EXPECT_GE(row.mse * (1 + 1e-12), row.mc_se * row.mc_se * (n - 1) / n);
    EXPECT_GE(row.coverage, 0.0);
    EXPECT_LE(row.coverage, 100.0);
  }
  EXPECT_TRUE(res.rows[0].pct_selected.empty());
  EXPECT_EQ(res.rows[1].pct_selected.size(), 44u);
}

TEST(MonteCarlo, AggregateHandlesFailures) {
  std::vector<ReplicateRecord> reps(10);
  for (int r = 0; r < 10; ++r) {
    reps[static_cast<std::size_t>(r)].mu = 2.0;
    ReplicateEstimate e;
    e.ok = r >= 2;
    e.mu_hat = 2.0 + 0.1 * r;
    e.se = 0.5;
    e.covered = r < 5;
    e.selected = {0};
    reps[static_cast<std::size_t>(r)].estimates = {e};
  }
  const auto row = aggregate("x", reps, 0, 3, true, 0.10);
  EXPECT_EQ(row.completed, 8);
  EXPECT_EQ(row.failed, 2);
  EXPECT_FALSE(row.valid);
  EXPECT_NEAR(row.coverage, 100.0 * 3 / 8, 1e-12);
  EXPECT_DOUBLE_EQ(row.pct_selected[0], 100.0);
  EXPECT_NEAR(row.pct_bias, 100.0 * 0.1 * 5.5 / 2.0, 1e-10);
  EXPECT_TRUE(aggregate("x", reps, 0, 3, true, 0.25).valid);
}

TEST(MonteCarlo, RejectsBadConfig) {
  auto cfg = small(1);
  cfg.replicates = 0;
  EXPECT_THROW(run_monte_carlo(cfg), ConfigError);
  cfg = small(1);
  cfg.estimators.clear();
  EXPECT_THROW(run_monte_carlo(cfg), ConfigError);
}


TEST(Scenario, FlexibleBeatsLinearOnKangSchafer) {
  Rng rng(12);
  const auto spec = ScenarioSpec::builtin(4);
  const auto pop = generate_population(spec, rng);
  const auto delta = draw_nonprob_sample(pop, rng);
  const auto s = assemble_sample(pop, delta, draw_prob_sample(pop, spec, rng));
  // Hold out the second half of A by refitting on a sample built from the first half.
  std::vector<UnitRecord> train;
  std::size_t seen = 0;
  for (const auto& r : s.records()) {
    if (r.delta && seen++ % 2 == 1) continue;
    train.push_back(r);
  }
  const CombinedSample tr(std::move(train), s.names());
  Eigen::MatrixXd xh(static_cast<Eigen::Index>(s.n_a() / 2), 4);
  Eigen::VectorXd yh(xh.rows());
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(s.n_a()) && k < xh.rows(); i += 2, ++k) {
    xh.row(k) = s.xa().row(i);
    yh(k) = s.ya()(i);
  }
  const auto flex = fit_outcome_flexible(tr, {});
  const auto lin = fit_outcome(tr, OutcomeFamily::linear, all_covariates(4));
  const double tss = (yh.array() - yh.mean()).square().sum();
  const double r2_flex = 1.0 - (predict(flex, xh) - yh).squaredNorm() / tss;
  const double r2_lin = 1.0 - (predict(lin, xh) - yh).squaredNorm() / tss;
  EXPECT_GT(r2_flex, r2_lin);
}

}  // namespace
}  // namespace npmean
