#include <vector>

#include <benchmark/benchmark.h>

#include "npmean/propensity.hpp"
#include "npmean/simulation.hpp"
#include "npmean/solvers.hpp"

namespace {

using namespace npmean;

CombinedSample scenario_sample(int scenario, std::uint64_t seed) {
  const auto spec = ScenarioSpec::builtin(scenario);
  Rng rng(seed);
  const auto pop = generate_population(spec, rng);
  const auto delta = draw_nonprob_sample(pop, rng);
  return assemble_sample(pop, delta, draw_prob_sample(pop, spec, rng));
}

void BM_LassoPath(benchmark::State& state) {
  Rng rng(1);
  const int n = static_cast<int>(state.range(0));
  const int p = 44;
  Eigen::MatrixXd x(n, p + 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j <= p; ++j) x(i, j) = rng.normal();
    y(i) = x(i, 1) - 0.5 * x(i, 2) + rng.normal();
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd pf = Eigen::VectorXd::Ones(p + 1);
  pf(0) = 0.0;
  const PenalizedWls sys(x, y, w, true, true);
  const auto grid = log_lambda_grid(sys.lambda_max(pf), 50, 1e-4);
  for (auto _ : state) benchmark::DoNotOptimize(sys.path(PenaltyKind::lasso, pf, grid, {}));
}
BENCHMARK(BM_LassoPath)->Arg(500)->Arg(2000);

void BM_FitNewton(benchmark::State& state) {
  const auto s = scenario_sample(1, 2);
  const auto all = all_covariates(s.p());
  for (auto _ : state) benchmark::DoNotOptimize(fit_newton(s, all));
}
BENCHMARK(BM_FitNewton);

void BM_FitOalasso(benchmark::State& state) {
  const auto s = scenario_sample(2, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fit_oalasso(s, {}));
}
BENCHMARK(BM_FitOalasso);

void BM_Replicate(benchmark::State& state) {
  SimulationConfig cfg;
  cfg.spec = ScenarioSpec::builtin(static_cast<int>(state.range(0)));
  cfg.estimators = default_estimators(cfg.spec.id);
  cfg.pipeline = default_pipeline(cfg.spec.id);
  cfg.replicates = 1;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = seed++;
    benchmark::DoNotOptimize(run_monte_carlo(cfg));
  }
}
BENCHMARK(BM_Replicate)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
