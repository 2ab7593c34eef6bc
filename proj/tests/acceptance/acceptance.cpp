// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.
//
//   npmean_acceptance [--reps R] [--seed S] [--jobs J]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "npmean/estimators.hpp"
#include "npmean/pipeline.hpp"
#include "npmean/propensity.hpp"
#include "npmean/simulation.hpp"
#include "npmean/solvers.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace {

using namespace npmean;

struct Options {
  int reps = 500;
  std::uint64_t seed = 20240601;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

MonteCarloResult simulate(const Options& opt, int scenario, std::vector<EstimatorTag> tags) {
  SimulationConfig cfg;
  cfg.spec = ScenarioSpec::builtin(scenario);
  cfg.estimators = std::move(tags);
  cfg.replicates = opt.reps;
  cfg.seed = opt.seed + static_cast<std::uint64_t>(scenario);
  cfg.jobs = opt.jobs;
  cfg.pipeline = default_pipeline(scenario);
  auto res = run_monte_carlo(cfg);
  print_table(res, std::cout);
  return res;
}

const MetricsRow& row(const MonteCarloResult& res, EstimatorTag tag) {
  for (const auto& r : res.rows) {
    if (r.estimator == to_string(tag)) return r;
  }
  throw std::logic_error("missing row");
}

std::string metrics(const MetricsRow& r) {
  return fmt("%%B=%.2f", r.pct_bias) + fmt(" MSE=%.4f", r.mse) + fmt(" COV=%.1f", r.coverage) +
         (r.valid ? "" : " (invalid aggregate)");
}

void scenario1(const Options& opt) {
  const auto res = simulate(opt, 1, {EstimatorTag::aipw_oalasso});
  const auto& r = row(res, EstimatorTag::aipw_oalasso);
  const bool pass = r.valid && std::abs(r.pct_bias) <= 0.3 && r.mse <= 0.02 && r.coverage >= 90 && r.coverage <= 98;
  report(1, pass, "scenario 1 aipw-oalasso " + metrics(r) + " [need |%B|<=0.3, MSE<=0.02, COV in [90,98]]");
}

void scenario2(const Options& opt) {
  const auto res = simulate(opt, 2, {EstimatorTag::ipw_lasso, EstimatorTag::ipw_oalasso, EstimatorTag::aipw_scad_union});
  const auto& lasso = row(res, EstimatorTag::ipw_lasso);
  const bool pass2 = lasso.valid && lasso.coverage <= 45 && lasso.pct_bias <= -1.5;
  report(2, pass2, "scenario 2 ipw-lasso " + metrics(lasso) + " [need COV<=45 and %B<=-1.5]");

  const auto& oal = row(res, EstimatorTag::ipw_oalasso);
  const auto& scad = row(res, EstimatorTag::aipw_scad_union);
  const auto& ls = lasso.pct_selected;
  const auto& os = oal.pct_selected;
  const auto& ss = scad.pct_selected;
  const bool oal_conf = os[0] >= 90 && os[1] >= 90;
  const bool oal_outcome = os[2] >= 2 * ls[2] && os[3] >= 2 * ls[3];
  const bool scad_conf = ss[0] >= 95 && ss[1] >= 95 && ss[2] >= 95;
  const bool scad_instr = ss[4] <= 10 && ss[5] <= 10;
  std::ostringstream d;
  d.setf(std::ios::fixed);
  d.precision(1);
  d << "selection %: oalasso X1..X4=" << os[0] << '/' << os[1] << '/' << os[2] << '/' << os[3]
    << " lasso X3/X4=" << ls[2] << '/' << ls[3] << " scad-union X1..X3=" << ss[0] << '/' << ss[1] << '/' << ss[2]
    << " X5/X6=" << ss[4] << '/' << ss[5] << " [oalasso X1,X2>=90: " << (oal_conf ? "ok" : "no")
    << "; oalasso X3,X4>=2x lasso: " << (oal_outcome ? "ok" : "no") << "; scad X1-X3>=95: " << (scad_conf ? "ok" : "no")
    << "; scad instruments<=10: " << (scad_instr ? "ok" : "no") << "]";
  report(5, oal.valid && scad.valid && lasso.valid && oal_conf && oal_outcome && scad_conf && scad_instr, d.str());
}

void scenario3(const Options& opt) {
  const auto res = simulate(opt, 3, {EstimatorTag::ipw_logistic, EstimatorTag::aipw_oalasso});
  const auto& ipw = row(res, EstimatorTag::ipw_logistic);
  const auto& aipw = row(res, EstimatorTag::aipw_oalasso);
  const bool pass = ipw.valid && aipw.valid && 5.0 * aipw.mse < ipw.mse;
  report(3, pass,
         "scenario 3 MSE aipw-oalasso=" + fmt("%.4f", aipw.mse) + " ipw-logistic=" + fmt("%.4f", ipw.mse) +
             " ratio=" + fmt("%.1f", ipw.mse / aipw.mse) + " [need ratio>5]");
}

void scenario4(const Options& opt) {
  const auto res = simulate(opt, 4, {EstimatorTag::ipw_logistic, EstimatorTag::aipw_logistic_flex,
                                     EstimatorTag::aipw_benkeser});
  const auto& ipw = row(res, EstimatorTag::ipw_logistic);
  const auto& flex = row(res, EstimatorTag::aipw_logistic_flex);
  const auto& ben = row(res, EstimatorTag::aipw_benkeser);
  const bool a = ipw.valid && ipw.pct_bias >= 2.5 && ipw.coverage <= 5;
  const bool b = flex.valid && std::abs(flex.pct_bias) <= 1.0 && flex.coverage >= 75;
  const bool c = ben.valid && ben.coverage >= 85;
  report(4, a && b && c,
         "scenario 4 ipw-logistic " + metrics(ipw) + " [%B>=2.5, COV<=5: " + (a ? "ok" : "no") +
             "]; aipw-logistic-flex " + metrics(flex) + " [|%B|<=1, COV>=75: " + (b ? "ok" : "no") +
             "]; aipw-benkeser " + metrics(ben) + " [COV>=85: " + (c ? "ok" : "no") + "]");
}

void solver_oracles() {
  Rng rng(606);
  double worst_kkt = 0.0, worst_ref = 0.0, worst_ols = 0.0;
  int unmatched = 0;
  SolverConfig cfg;
  cfg.tol = 1e-11;
  cfg.max_iter = 200000;
  for (int t = 0; t < 100; ++t) {
    auto prob = testing::random_lasso_problem(rng, 30, 4);
    const double lmax = PenalizedWls(prob.x, prob.y, prob.w, true, true).lambda_max(prob.penalty_factors);
    prob.lambda = lmax * rng.uniform(0.02, 0.9);
    const auto coef = lasso_cd(prob, cfg);
    const auto eff = effective_penalty_factors(prob, cfg);
    worst_kkt = std::max(worst_kkt, testing::kkt_violation(prob, coef, eff));
    const auto ref = testing::enumerate_lasso(prob, eff);
    if (!ref) {
      ++unmatched;
    } else {
      worst_ref = std::max(worst_ref, (coef - *ref).cwiseAbs().maxCoeff());
    }
    prob.lambda = 0.0;
    worst_ols = std::max(worst_ols, (lasso_cd(prob, cfg) - testing::normal_equations(prob)).cwiseAbs().maxCoeff());
  }
  std::ostringstream d;
  d << "100 random WLS-LASSO problems: max KKT violation=" << worst_kkt << " max |cd - reference|=" << worst_ref
    << " unmatched=" << unmatched << " max |lambda=0 - normal equations|=" << worst_ols
    << " [need KKT<=1e-6, reference<=1e-6, lambda=0<=1e-8]";
  report(6, worst_kkt <= 1e-6 && worst_ref <= 1e-6 && unmatched == 0 && worst_ols <= 1e-8, d.str());
}

void newton_grid(const Options& opt) {
  Rng rng(opt.seed, 7);
  const auto spec = ScenarioSpec::builtin(1);
  const auto pop = generate_population(spec, rng);
  const auto delta = draw_nonprob_sample(pop, rng);
  const auto s = assemble_sample(pop, delta, draw_prob_sample(pop, spec, rng));
  const std::vector<std::size_t> subset{1};
  const auto fit = fit_newton(s, subset);
  const auto xa = design_matrix(s, subset, true, SampleSide::a);
  const auto xb = design_matrix(s, subset, true, SampleSide::b);
  const double at_fit = pseudo_risk(xa, xb, s.db(), fit.beta);
  double min_gap = std::numeric_limits<double>::infinity();
  int points = 0;
  for (int i = -60; i <= 60; ++i) {
    for (int j = -60; j <= 60; ++j) {
      const Eigen::Vector2d b(fit.beta(0) + 0.05 * i, fit.beta(1) + 0.05 * j);
      min_gap = std::min(min_gap, pseudo_risk(xa, xb, s.db(), b) - at_fit);
      ++points;
    }
  }
  report(7, min_gap >= 0.0,
         "pseudo-risk on a " + std::to_string(points) + "-point 0.05 grid (intercept, x2): min(grid - fit)=" +
             fmt("%.3g", min_gap) + " [need >= 0]");
}

void design_variance_oracle() {
  const auto c = testing::poisson_monte_carlo(808, 10000);
  const double rel = std::abs(c.mean_plug_in / c.empirical - 1.0);
  report(8, rel <= 0.05,
         "10,000 Poisson redraws: empirical var=" + fmt("%.6g", c.empirical) + " mean plug-in=" +
             fmt("%.6g", c.mean_plug_in) + " rel diff=" + fmt("%.4f", rel) + " [need <= 0.05]");
}

void property_suite(const Options& opt) {
  std::vector<std::string> broken;
  const auto s = testing::toy_sample({}, opt.seed);
  PipelineConfig pc;
  pc.penalty.seed = 11;
  const std::vector<EstimatorTag> tags{EstimatorTag::ipw_logistic, EstimatorTag::ipw_oalasso,
                                       EstimatorTag::aipw_logistic, EstimatorTag::aipw_oalasso};
  const auto base = run_estimators(s, tags, pc);
  const auto moved = run_estimators(s.with_outcomes([](double y) { return 7.0 - 3.0 * y; }), tags, pc);
  for (std::size_t k = 0; k < tags.size(); ++k) {
    const double tol = 1e-8 * (1.0 + std::abs(base[k].mu_hat));
    if (std::abs(moved[k].mu_hat - (7.0 - 3.0 * base[k].mu_hat)) > tol ||
        std::abs(moved[k].se - 3.0 * base[k].se) > tol) {
      broken.push_back("equivariance " + base[k].estimator);
    }
  }

  auto zero = pc;
  zero.outcome = OutcomeKind::zero;
  const auto red = run_estimators(s, {EstimatorTag::ipw_lasso, EstimatorTag::aipw_lasso}, zero);
  if (std::abs(red[0].mu_hat - red[1].mu_hat) > 1e-12) broken.push_back("aipw->ipw reduction");

  NewtonConfig nc;
  nc.tol = 1e-12;
  const auto newton = fit_newton(s, all_covariates(s.p()), nc);
  PenaltyConfig off;
  off.newton = nc;
  off.fixed_lambda = 0.0;
  const auto l0 = fit_penalized(s, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.p())), off, PropensityMethod::lasso);
  off.fixed_lambda = 5.0;
  const auto pf0 = fit_penalized(s, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.p())), off, PropensityMethod::lasso);
  if ((l0.beta - newton.beta).cwiseAbs().maxCoeff() > 1e-8 || (pf0.beta - newton.beta).cwiseAbs().maxCoeff() > 1e-8) {
    broken.push_back("penalty-off equivalence");
  }

  SimulationConfig sc;
  sc.spec = ScenarioSpec::builtin(2);
  sc.estimators = {EstimatorTag::ipw_oalasso, EstimatorTag::aipw_scad_union};
  sc.replicates = 4;
  sc.seed = opt.seed;
  sc.pipeline = default_pipeline(2);
  const auto r1 = run_monte_carlo(sc);
  sc.jobs = 2;
  const auto r2 = run_monte_carlo(sc);
  std::ostringstream m1, m2;
  write_metrics_csv(r1, m1);
  write_selection_csv(r1, m1);
  write_metrics_csv(r2, m2);
  write_selection_csv(r2, m2);
  if (m1.str() != m2.str()) broken.push_back("determinism");

  std::string detail = "equivariance, aipw->ipw reduction, penalty-off equivalence, determinism";
  if (!broken.empty()) {
    detail += " [broken:";
    for (const auto& b : broken) detail += " " + b + ";";
    detail += "]";
  }
  report(9, broken.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (!std::strcmp(argv[i], "--reps")) {
      opt.reps = std::atoi(argv[i + 1]);
    } else if (!std::strcmp(argv[i], "--seed")) {
      opt.seed = std::strtoull(argv[i + 1], nullptr, 10);
    } else if (!std::strcmp(argv[i], "--jobs")) {
      opt.jobs = std::max(1, std::atoi(argv[i + 1]));
    } else {
      std::fprintf(stderr, "usage: %s [--reps R] [--seed S] [--jobs J]\n", argv[0]);
      return 2;
    }
  }
  std::printf("acceptance: R=%d seed=%llu jobs=%d\n", opt.reps, static_cast<unsigned long long>(opt.seed), opt.jobs);
  try {
    solver_oracles();
    newton_grid(opt);
    design_variance_oracle();
    property_suite(opt);
    scenario1(opt);
    scenario2(opt);
    scenario3(opt);
    scenario4(opt);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
