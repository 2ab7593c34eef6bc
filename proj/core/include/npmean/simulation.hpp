#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "npmean/pipeline.hpp"
#include "npmean/rng.hpp"
#include "npmean/sample.hpp"

namespace npmean {

/// A simulation scenario. Scenarios 1-3 share the 44-covariate population
/// and differ in the selection model; scenario 4 is the Kang-Schafer design
/// with transformed covariates.
struct ScenarioSpec {
  int id = 1;
  std::size_t population_size = 10000;
  double target_nb = 500.0;
  /// Selection model intercept and (covariate index, coefficient) pairs.
  /// Indices refer to X for scenarios 1-3 and to Z for scenario 4.
  double selection_intercept = 0.0;
  std::vector<std::pair<std::size_t, double>> selection;
  /// Outcome mean intercept and coefficients on X1..X4 (scenarios 1-3) or Z1..Z4 (scenario 4).
  double outcome_intercept = 0.0;
  std::vector<double> outcome;
  double outcome_sd = 1.0;

  /// Covariates the analyst observes.
  std::size_t p() const noexcept { return id == 4 ? 4 : 44; }

  /// Built-in scenario 1-4; throws ConfigError otherwise.
  static ScenarioSpec builtin(int id);
  /// Throws ConfigError when id is unknown or the coefficients differ from the frozen table.
  void check() const;
};

struct Population {
  /// N x p observed covariates.
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  /// True selection probability of every unit.
  Eigen::VectorXd selection_p;
  double mu = 0.0;
};

Population generate_population(const ScenarioSpec& spec, Rng& rng);

struct ProbabilitySample {
  /// Population rows in B, ascending.
  std::vector<std::size_t> index;
  /// Inclusion probability of each drawn unit.
  Eigen::VectorXd pi;
};

/// Poisson sampling with pi proportional to 0.25 + X2 + 0.03 Y, scaled to
/// an expected size of `target_nb` and clipped to 1.
ProbabilitySample draw_prob_sample(const Population& pop, const ScenarioSpec& spec, Rng& rng);

/// Inclusion probabilities before the Bernoulli draws, clipped to 1.
Eigen::VectorXd prob_sample_pi(const Population& pop, const ScenarioSpec& spec);

/// Bernoulli(p_i) membership in A for every population unit.
std::vector<bool> draw_nonprob_sample(const Population& pop, Rng& rng);

/// Records for the units of A and B, with overlap observed on B.
CombinedSample assemble_sample(const Population& pop, const std::vector<bool>& delta, const ProbabilitySample& b);

/// Estimators reported for a scenario: scenario 4 keeps the logistic and
/// collaborative rows only.
std::vector<EstimatorTag> default_estimators(int scenario);

/// Pipeline settings used for a scenario (outcome model family and flexible models).
PipelineConfig default_pipeline(int scenario);

struct SimulationConfig {
  ScenarioSpec spec;
  std::vector<EstimatorTag> estimators;
  int replicates = 100;
  std::uint64_t seed = 0;
  int jobs = 1;
  /// Draw one population and redraw only the samples.
  bool fixed_population = false;
  PipelineConfig pipeline;
  /// Share of failed replicates above which an aggregate is invalid.
  double max_failure_rate = 0.10;
};

/// Per-replicate outcome of one estimator.
struct ReplicateEstimate {
  bool ok = false;
  double mu_hat = 0.0;
  double se = 0.0;
  bool covered = false;
  std::vector<std::size_t> selected;
  std::string error;
};

struct ReplicateRecord {
  double mu = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::vector<ReplicateEstimate> estimates;  // one per configured estimator
};

struct MetricsRow {
  std::string estimator;
  double pct_bias = 0.0;
  double mse = 0.0;
  /// Sample sd of mu_hat - mu over completed replicates.
  double mc_se = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
  /// Percentage of completed replicates selecting each covariate (empty
  /// for estimators without variable selection).
  std::vector<double> pct_selected;
  int completed = 0;
  int failed = 0;
  bool valid = true;
};

struct MonteCarloResult {
  int scenario = 0;
  std::vector<std::string> covariate_names;
  std::vector<MetricsRow> rows;
  std::vector<ReplicateRecord> replicates;
  bool all_valid() const;
};

/// Replicate r draws from Rng(seed, r); results do not depend on `jobs`.
MonteCarloResult run_monte_carlo(const SimulationConfig& config);

MetricsRow aggregate(const std::string& estimator, const std::vector<ReplicateRecord>& reps, std::size_t column,
                     std::size_t p, bool with_selection, double max_failure_rate);

/// `estimator,pct_bias,mse,mc_se,mean_se,coverage`
void write_metrics_csv(const MonteCarloResult& result, std::ostream& out);
/// `estimator,covariate,pct_selected`
void write_selection_csv(const MonteCarloResult& result, std::ostream& out);
/// Human-readable table in the column order %B, MSE, MC SE, SE, %COV.
void print_table(const MonteCarloResult& result, std::ostream& out);

}  // namespace npmean
