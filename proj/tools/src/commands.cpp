#include "npmean_cli/commands.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npmean/errors.hpp"
#include "npmean/pipeline.hpp"
#include "npmean/report.hpp"
#include "npmean/sample.hpp"
#include "npmean/simulation.hpp"

namespace npmean::cli {
namespace {

namespace fs = std::filesystem;

struct InputOptions {
  std::string input;
  std::string input_a;
  std::string input_b;
  std::string schema;
  std::vector<std::string> covariates;
  std::string delta;
  std::string in_b;
  std::string outcome;
  std::string weight;
  std::string pi;
  std::string group;
};

struct PenaltyOptions {
  double gamma = 1.0;
  int folds = 5;
  int grid_size = 50;
  std::uint64_t seed = 0;
  std::string outcome = "linear";
};

void add_input_options(CLI::App& cmd, InputOptions& in) {
  cmd.add_option("--input", in.input, "Combined CSV holding both samples");
  cmd.add_option("--input-a", in.input_a, "CSV of the non-probability sample A");
  cmd.add_option("--input-b", in.input_b, "CSV of the probability sample B");
  cmd.add_option("--schema", in.schema, "Key=value schema file");
  cmd.add_option("--covariates", in.covariates, "Covariate columns")->delimiter(',');
  cmd.add_option("--delta-col", in.delta, "Column of A-membership");
  cmd.add_option("--in-b-col", in.in_b, "Column of B-membership");
  cmd.add_option("--y-col", in.outcome, "Outcome column");
  cmd.add_option("--weight-col", in.weight, "Design-weight column");
  cmd.add_option("--pi-col", in.pi, "Inclusion-probability column");
  cmd.add_option("--group-col", in.group, "Cluster or stratum column used for CV folds");
}

void add_penalty_options(CLI::App& cmd, PenaltyOptions& pen) {
  cmd.add_option("--gamma", pen.gamma, "Adaptive exponent")->check(CLI::PositiveNumber);
  cmd.add_option("--folds", pen.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  cmd.add_option("--grid-size", pen.grid_size, "Number of lambda values")->check(CLI::Range(1, 100000));
  cmd.add_option("--seed", pen.seed, "Seed for fold assignment");
  cmd.add_option("--outcome", pen.outcome, "Outcome model: linear, logistic or flexible")
      ->check(CLI::IsMember({"linear", "logistic", "flexible"}));
}

CsvSchema make_schema(const InputOptions& in) {
  CsvSchema schema = in.schema.empty() ? CsvSchema{} : CsvSchema::from_file(in.schema);
  if (!in.covariates.empty()) schema.covariates = in.covariates;
  if (!in.delta.empty()) schema.delta = in.delta;
  if (!in.in_b.empty()) schema.in_b = in.in_b;
  if (!in.outcome.empty()) schema.outcome = in.outcome;
  if (!in.weight.empty()) schema.weight = in.weight;
  if (!in.pi.empty()) schema.pi = in.pi;
  if (!in.group.empty()) schema.group = in.group;
  if (schema.covariates.empty()) throw ConfigError("no covariates given (use --schema or --covariates)");
  return schema;
}

CombinedSample load(const InputOptions& in) {
  const auto schema = make_schema(in);
  const bool pair = !in.input_a.empty() || !in.input_b.empty();
  if (pair == !in.input.empty()) {
    throw ConfigError("give either --input or both --input-a and --input-b");
  }
  if (pair && (in.input_a.empty() || in.input_b.empty())) {
    throw ConfigError("--input-a and --input-b must be given together");
  }
  return pair ? load_csv_pair(in.input_a, in.input_b, schema) : load_csv(in.input, schema);
}

OutcomeKind outcome_kind(const std::string& name) {
  if (name == "logistic") return OutcomeKind::logistic;
  if (name == "flexible") return OutcomeKind::flexible;
  return OutcomeKind::linear;
}

PipelineConfig make_pipeline(const PenaltyOptions& pen, const CombinedSample& sample) {
  PipelineConfig pc;
  pc.outcome = outcome_kind(pen.outcome);
  pc.penalty.gamma = pen.gamma;
  pc.penalty.v_folds = pen.folds;
  pc.penalty.grid_size = pen.grid_size;
  pc.penalty.seed = pen.seed;
  pc.penalty.fold_labels = sample.b_groups();
  pc.flexible.v_folds = pen.folds;
  pc.flexible.seed = pen.seed;
  return pc;
}

fs::path prepare_out(const std::string& dir) {
  fs::path out(dir);
  fs::create_directories(out);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

int cmd_estimate(const InputOptions& in, const PenaltyOptions& pen, const std::string& methods,
                 bool zero_outcome, const std::string& design, const std::string& out_dir, std::ostream& out) {
  const auto sample = load(in);
  auto pc = make_pipeline(pen, sample);
  if (zero_outcome) pc.outcome = OutcomeKind::zero;
  pc.design = DesignVariance::from_tag(design);
  const auto tags = parse_estimators(methods);
  const auto reports = run_estimators(sample, tags, pc);
  const auto dir = prepare_out(out_dir);
  for (const auto& r : reports) {
    auto f = open_out(dir / (r.estimator + ".json"));
    f << to_json(r).dump(2) << '\n';
  }
  auto summary = open_out(dir / "summary.csv");
  write_summary_csv(reports, summary);
  write_summary_csv(reports, out);
  return 0;
}

int cmd_cv_lambda(const InputOptions& in, const PenaltyOptions& pen, const std::string& method,
                  const std::vector<double>& grid, const std::string& out_dir, std::ostream& out) {
  const auto sample = load(in);
  auto pc = make_pipeline(pen, sample);
  pc.penalty.family = pc.outcome == OutcomeKind::logistic ? OutcomeFamily::logistic : OutcomeFamily::linear;
  pc.penalty.lambda_grid = grid;
  Eigen::VectorXd factors = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(sample.p()));
  if (method == "oalasso") {
    pc.penalty.check();
    factors = adaptive_penalty_factors(outcome_coefficients(sample, pc.penalty.family, pc.penalty.solver),
                                       pc.penalty.gamma);
  }
  const auto curve = cv_lambda(sample, factors, pc.penalty);
  const auto dir = prepare_out(out_dir);
  auto f = open_out(dir / "cv_curve.csv");
  write_cv_curve_csv(curve, f);
  std::ostringstream sel;
  sel.precision(17);
  sel << curve.selected;
  out << "selected lambda: " << sel.str() << '\n';
  return 0;
}

int cmd_simulate(int scenario, int reps, std::uint64_t seed, int jobs, const std::string& methods,
                 bool fixed_population, const std::string& out_dir, std::ostream& out) {
  SimulationConfig cfg;
  cfg.spec = ScenarioSpec::builtin(scenario);
  cfg.estimators = methods.empty() ? default_estimators(scenario) : parse_estimators(methods);
  cfg.replicates = reps;
  cfg.seed = seed;
  cfg.jobs = jobs;
  cfg.fixed_population = fixed_population;
  cfg.pipeline = default_pipeline(scenario);
  const auto result = run_monte_carlo(cfg);
  const auto dir = prepare_out(out_dir);
  auto metrics = open_out(dir / "metrics.csv");
  write_metrics_csv(result, metrics);
  auto selection = open_out(dir / "selection.csv");
  write_selection_csv(result, selection);
  print_table(result, out);
  return result.all_valid() ? 0 : 2;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite-population mean estimation from a non-probability sample and a reference survey"};
  app.require_subcommand(1);

  InputOptions in;
  PenaltyOptions pen;
  std::string out_dir = ".";
  std::string methods = "ipw-logistic";
  std::string design = "poisson";
  bool zero_outcome = false;

  auto* est = app.add_subcommand("estimate", "Point estimates, standard errors and Wald intervals");
  add_input_options(*est, in);
  add_penalty_options(*est, pen);
  est->add_option("--methods", methods, "Comma-separated estimators");
  est->add_flag("--zero-outcome", zero_outcome, "Use m-hat = 0 in every AIPW estimator");
  est->add_option("--design", design, "Design-variance rule for B");
  est->add_option("--out", out_dir, "Output directory");

  std::string cv_method = "lasso";
  std::vector<double> grid;
  auto* cv = app.add_subcommand("cv-lambda", "Cross-validation curve of the penalized propensity model");
  add_input_options(*cv, in);
  add_penalty_options(*cv, pen);
  cv->add_option("--method", cv_method, "lasso or oalasso")->check(CLI::IsMember({"lasso", "oalasso"}));
  cv->add_option("--grid", grid, "Explicit descending lambda grid")->delimiter(',');
  cv->add_option("--out", out_dir, "Output directory");

  int scenario = 1;
  int reps = 100;
  std::uint64_t sim_seed = 0;
  int jobs = 1;
  std::string sim_methods;
  bool fixed_population = false;
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo study of a built-in scenario");
  sim->add_option("--scenario", scenario, "Scenario 1-4")->check(CLI::Range(1, 4));
  sim->add_option("--reps", reps, "Replicates")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "Master seed")->required();
  sim->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--methods", sim_methods, "Comma-separated estimators (default: the scenario's standard set)");
  sim->add_flag("--fixed-population", fixed_population, "Keep one population across replicates");
  sim->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? 0 : 1;
  }

  try {
    if (est->parsed()) return cmd_estimate(in, pen, methods, zero_outcome, design, out_dir, out);
    if (cv->parsed()) return cmd_cv_lambda(in, pen, cv_method, grid, out_dir, out);
    return cmd_simulate(scenario, reps, sim_seed, jobs, sim_methods, fixed_population, out_dir, out);
  } catch (const ConvergenceError& e) {
    err << "convergence error: " << e.what() << '\n';
    return 2;
  } catch (const SingularityError& e) {
    err << "singular system: " << e.what() << '\n';
    return 2;
  } catch (const DegenerateModelError& e) {
    err << "degenerate model: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace npmean::cli
