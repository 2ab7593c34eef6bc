#include "npmean/simulation.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "npmean/errors.hpp"

namespace npmean {
namespace {

double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

struct FrozenScenario {
  double selection_intercept;
  std::vector<std::pair<std::size_t, double>> selection;
  double outcome_intercept;
  std::array<double, 4> outcome;
};

// Transcribed once; ScenarioSpec::check compares every run against it.
const std::array<FrozenScenario, 4>& frozen_table() {
  static const std::array<FrozenScenario, 4> table{{
      {-2.0, {{0, 0.3}, {1, 0.3}, {4, -1.0}, {5, -1.0}}, 2.0, {0.6, 0.6, 0.6, 0.6}},
      {-2.0, {{0, 1.0}, {1, 1.0}, {4, -1.0}, {5, -1.0}}, 2.0, {0.6, 0.6, 0.6, 0.6}},
      {-2.0, {{0, 1.0}, {1, 1.0}, {4, -1.8}, {5, -1.8}}, 2.0, {0.6, 0.6, 0.6, 0.6}},
      {0.0, {{0, -1.0}, {1, 0.5}, {2, -0.25}, {3, -0.1}}, 210.0, {27.4, 13.7, 13.7, 13.7}},
  }};
  return table;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kFixedPopulationStream = 0xF1C5ED0000000000ULL;

bool has_selection(EstimatorTag tag) {
  const auto m = propensity_method(tag);
  return m == PropensityMethod::lasso || m == PropensityMethod::oalasso || m == PropensityMethod::scad_union;
}

ReplicateRecord run_replicate(const SimulationConfig& config, const Population* fixed, int r) {
  Rng rng(config.seed, static_cast<std::uint64_t>(r));
  Population own;
  if (!fixed) own = generate_population(config.spec, rng);
  const Population& pop = fixed ? *fixed : own;
  const auto delta = draw_nonprob_sample(pop, rng);
  const auto b = draw_prob_sample(pop, config.spec, rng);

  ReplicateRecord rec;
  rec.mu = pop.mu;
  rec.estimates.resize(config.estimators.size());
  std::optional<CombinedSample> sample;
  try {
    sample.emplace(assemble_sample(pop, delta, b));
    require_valid(*sample);
  } catch (const Error& e) {
    for (auto& est : rec.estimates) est.error = e.what();
    return rec;
  }
  rec.n_a = sample->n_a();
  rec.n_b = sample->n_b();

  PipelineConfig pc = config.pipeline;
  const std::uint64_t sub = splitmix(config.seed ^ splitmix(static_cast<std::uint64_t>(r)));
  pc.penalty.seed = sub;
  pc.flexible.seed = splitmix(sub);
  EstimatorRunner runner(*sample, pc);
  for (std::size_t k = 0; k < config.estimators.size(); ++k) {
    auto& est = rec.estimates[k];
    try {
      const auto report = runner.run(config.estimators[k]);
      if (!std::isfinite(report.mu_hat) || !std::isfinite(report.se)) {
        throw ConvergenceError("non-finite estimate");
      }
      est.ok = true;
      est.mu_hat = report.mu_hat;
      est.se = report.se;
      est.covered = report.ci_lo <= rec.mu && rec.mu <= report.ci_hi;
      est.selected = report.active_index;
    } catch (const Error& e) {
      est.error = e.what();
    }
  }
  return rec;
}

}  // namespace

// ------------------------------------------------------------ scenarios

ScenarioSpec ScenarioSpec::builtin(int id) {
  if (id < 1 || id > 4) throw ConfigError("scenario must be 1, 2, 3 or 4");
  const auto& f = frozen_table()[static_cast<std::size_t>(id - 1)];
  ScenarioSpec spec;
  spec.id = id;
  spec.selection_intercept = f.selection_intercept;
  spec.selection = f.selection;
  spec.outcome_intercept = f.outcome_intercept;
  spec.outcome.assign(f.outcome.begin(), f.outcome.end());
  return spec;
}

void ScenarioSpec::check() const {
  if (id < 1 || id > 4) throw ConfigError("scenario must be 1, 2, 3 or 4");
  if (population_size == 0) throw ConfigError("population size must be positive");
  if (!(target_nb > 0.0)) throw ConfigError("target B size must be positive");
  const auto& f = frozen_table()[static_cast<std::size_t>(id - 1)];
  const bool same = selection_intercept == f.selection_intercept && selection == f.selection &&
                    outcome_intercept == f.outcome_intercept && outcome.size() == 4 &&
                    std::equal(outcome.begin(), outcome.end(), f.outcome.begin()) && outcome_sd == 1.0;
  if (!same) {
    throw ConfigError("scenario " + std::to_string(id) + " coefficients differ from the built-in table");
  }
}

Population generate_population(const ScenarioSpec& spec, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(spec.population_size);
  const auto p = static_cast<Eigen::Index>(spec.p());
  Population pop;
  pop.x.resize(n, p);
  pop.y.resize(n);
  pop.selection_p.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = spec.selection_intercept;
    if (spec.id == 4) {
      std::array<double, 4> z{};
      for (auto& v : z) v = rng.normal();
      double mean = spec.outcome_intercept;
      for (std::size_t k = 0; k < 4; ++k) mean += spec.outcome[k] * z[k];
      pop.y(i) = mean + spec.outcome_sd * rng.normal();
      pop.x(i, 0) = std::exp(z[0] / 2.0);
      pop.x(i, 1) = z[1] / (1.0 + std::exp(z[0])) + 10.0;
      pop.x(i, 2) = std::pow(z[0] * z[2] / 25.0 + 0.6, 3.0);
      pop.x(i, 3) = std::pow(z[1] + z[3] + 20.0, 2.0);
      for (const auto& [j, c] : spec.selection) eta += c * z[j];
    } else {
      const double x1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
      const double x2 = rng.uniform(0.0, 2.0) + 0.3 * x1;
      const double x3 = rng.exponential(1.0) + 0.2 * (x1 + x2);
      const double x4 = rng.chi_squared(4) + 0.1 * (x1 + x2 + x3);
      pop.x(i, 0) = x1;
      pop.x(i, 1) = x2;
      pop.x(i, 2) = x3;
      pop.x(i, 3) = x4;
      for (Eigen::Index j = 4; j < 24; ++j) pop.x(i, j) = rng.bernoulli(0.45) ? 1.0 : 0.0;
      for (Eigen::Index j = 24; j < 44; ++j) pop.x(i, j) = rng.normal();
      double mean = spec.outcome_intercept;
      for (Eigen::Index k = 0; k < 4; ++k) mean += spec.outcome[static_cast<std::size_t>(k)] * pop.x(i, k);
      pop.y(i) = mean + spec.outcome_sd * rng.normal();
      for (const auto& [j, c] : spec.selection) eta += c * pop.x(i, static_cast<Eigen::Index>(j));
    }
    pop.selection_p(i) = expit(eta);
  }
  pop.mu = pop.y.mean();
  return pop;
}

Eigen::VectorXd prob_sample_pi(const Population& pop, const ScenarioSpec& spec) {
  const Eigen::ArrayXd raw = 0.25 + pop.x.col(1).array() + 0.03 * pop.y.array();
  if ((raw <= 0.0).any()) throw ValidationError("probability sample: non-positive size measure");
  const double c = spec.target_nb / raw.sum();
  return (c * raw).min(1.0).matrix();
}

ProbabilitySample draw_prob_sample(const Population& pop, const ScenarioSpec& spec, Rng& rng) {
  const Eigen::VectorXd pi = prob_sample_pi(pop, spec);
  ProbabilitySample out;
  std::vector<double> kept;
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    if (rng.bernoulli(pi(i))) {
      out.index.push_back(static_cast<std::size_t>(i));
      kept.push_back(pi(i));
    }
  }
  out.pi = Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
  return out;
}

std::vector<bool> draw_nonprob_sample(const Population& pop, Rng& rng) {
  std::vector<bool> delta(static_cast<std::size_t>(pop.selection_p.size()));
  for (Eigen::Index i = 0; i < pop.selection_p.size(); ++i) {
    delta[static_cast<std::size_t>(i)] = rng.bernoulli(pop.selection_p(i));
  }
  return delta;
}

CombinedSample assemble_sample(const Population& pop, const std::vector<bool>& delta, const ProbabilitySample& b) {
  if (delta.size() != static_cast<std::size_t>(pop.y.size())) {
    throw DimensionError("membership vector does not match the population");
  }
  std::vector<UnitRecord> records;
  std::size_t next_b = 0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const bool in_b = next_b < b.index.size() && b.index[next_b] == i;
    if (!delta[i] && !in_b) continue;
    UnitRecord rec;
    rec.x = pop.x.row(static_cast<Eigen::Index>(i)).transpose();
    rec.delta = delta[i];
    rec.in_b = in_b;
    if (rec.delta) rec.y = pop.y(static_cast<Eigen::Index>(i));
    if (in_b) {
      rec.pi = b.pi(static_cast<Eigen::Index>(next_b));
      rec.d = 1.0 / *rec.pi;
      ++next_b;
    }
    records.push_back(std::move(rec));
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < pop.x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  return CombinedSample(std::move(records), std::move(names));
}

std::vector<EstimatorTag> default_estimators(int scenario) {
  if (scenario == 4) {
    return {EstimatorTag::ipw_logistic, EstimatorTag::aipw_logistic, EstimatorTag::aipw_logistic_flex,
            EstimatorTag::aipw_benkeser};
  }
  return {EstimatorTag::ipw_logistic,  EstimatorTag::ipw_lasso,     EstimatorTag::ipw_oalasso,
          EstimatorTag::aipw_logistic, EstimatorTag::aipw_lasso,    EstimatorTag::aipw_oalasso,
          EstimatorTag::aipw_benkeser, EstimatorTag::aipw_scad_union};
}

PipelineConfig default_pipeline(int scenario) {
  PipelineConfig pc;
  pc.outcome = OutcomeKind::linear;
  if (scenario == 4) pc.benkeser_outcome = OutcomeKind::flexible;
  return pc;
}

// ------------------------------------------------------------ Monte Carlo

bool MonteCarloResult::all_valid() const {
  return std::all_of(rows.begin(), rows.end(), [](const MetricsRow& r) { return r.valid; });
}

MetricsRow aggregate(const std::string& estimator, const std::vector<ReplicateRecord>& reps, std::size_t column,
                     std::size_t p, bool with_selection, double max_failure_rate) {
  MetricsRow row;
  row.estimator = estimator;
  std::vector<double> err;
  double rel = 0.0;
  double se_sum = 0.0;
  int covered = 0;
  std::vector<int> picks(p, 0);
  for (const auto& rep : reps) {
    const auto& est = rep.estimates.at(column);
    if (!est.ok) {
      ++row.failed;
      continue;
    }
    err.push_back(est.mu_hat - rep.mu);
    rel += (est.mu_hat - rep.mu) / rep.mu;
    se_sum += est.se;
    covered += est.covered ? 1 : 0;
    for (auto j : est.selected) {
      if (j < p) ++picks[j];
    }
  }
  row.completed = static_cast<int>(err.size());
  row.valid = !reps.empty() && static_cast<double>(row.failed) <= max_failure_rate * static_cast<double>(reps.size());
  if (row.completed == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.pct_bias = row.mse = row.mc_se = row.mean_se = row.coverage = nan;
    row.valid = false;
    return row;
  }
  const double n = static_cast<double>(row.completed);
  double mean_err = 0.0;
  double sq = 0.0;
  for (double e : err) {
    mean_err += e;
    sq += e * e;
  }
  mean_err /= n;
  row.pct_bias = 100.0 * rel / n;
  row.mse = sq / n;
  double ss = 0.0;
  for (double e : err) ss += (e - mean_err) * (e - mean_err);
  row.mc_se = row.completed > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  row.mean_se = se_sum / n;
  row.coverage = 100.0 * covered / n;
  if (with_selection) {
    for (int c : picks) row.pct_selected.push_back(100.0 * c / n);
  }
  return row;
}

MonteCarloResult run_monte_carlo(const SimulationConfig& config) {
  config.spec.check();
  if (config.replicates < 1) throw ConfigError("at least one replicate is required");
  if (config.estimators.empty()) throw ConfigError("no estimators requested");
  if (config.jobs < 1) throw ConfigError("jobs must be at least 1");
  config.pipeline.penalty.check();

  std::optional<Population> fixed;
  if (config.fixed_population) {
    Rng rng(config.seed, kFixedPopulationStream);
    fixed = generate_population(config.spec, rng);
  }
  const Population* shared = fixed ? &*fixed : nullptr;

  MonteCarloResult result;
  result.scenario = config.spec.id;
  result.replicates.resize(static_cast<std::size_t>(config.replicates));
  for (std::size_t j = 0; j < config.spec.p(); ++j) result.covariate_names.push_back("x" + std::to_string(j + 1));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r = next++; r < config.replicates; r = next++) {
      try {
        result.replicates[static_cast<std::size_t>(r)] = run_replicate(config, shared, r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.replicates;
      }
    }
  };
  const int jobs = std::min(config.jobs, config.replicates);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t k = 0; k < config.estimators.size(); ++k) {
    const auto tag = config.estimators[k];
    result.rows.push_back(aggregate(std::string(to_string(tag)), result.replicates, k, config.spec.p(),
                                    has_selection(tag), config.max_failure_rate));
  }
  return result;
}

void write_metrics_csv(const MonteCarloResult& result, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "estimator,pct_bias,mse,mc_se,mean_se,coverage\n";
  for (const auto& r : result.rows) {
    out << r.estimator << ',' << r.pct_bias << ',' << r.mse << ',' << r.mc_se << ',' << r.mean_se << ','
        << r.coverage << '\n';
  }
  out.precision(old);
}

void write_selection_csv(const MonteCarloResult& result, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "estimator,covariate,pct_selected\n";
  for (const auto& r : result.rows) {
    for (std::size_t j = 0; j < r.pct_selected.size(); ++j) {
      out << r.estimator << ',' << result.covariate_names[j] << ',' << r.pct_selected[j] << '\n';
    }
  }
  out.precision(old);
}

void print_table(const MonteCarloResult& result, std::ostream& out) {
  const auto flags = out.flags();
  const auto old = out.precision();
  out << "Scenario " << result.scenario << '\n';
  out << std::left << std::setw(22) << "estimator" << std::right << std::setw(9) << "%B" << std::setw(9) << "MSE"
      << std::setw(9) << "MC SE" << std::setw(9) << "SE" << std::setw(9) << "%COV" << std::setw(8) << "failed"
      << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& r : result.rows) {
    out << std::left << std::setw(22) << r.estimator << std::right << std::setw(9) << r.pct_bias << std::setw(9)
        << r.mse << std::setw(9) << r.mc_se << std::setw(9) << r.mean_se << std::setw(9) << r.coverage
        << std::setw(8) << r.failed << (r.valid ? "" : "  INVALID") << '\n';
  }
  out.flags(flags);
  out.precision(old);
}

}  // namespace npmean
