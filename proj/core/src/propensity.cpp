#include "npmean/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "npmean/errors.hpp"

namespace npmean {
namespace {

constexpr double kUpperClamp = 1.0 - 1e-12;

double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double log1pexp(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

Eigen::VectorXd probabilities(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta,
                              const PositivityConfig& positivity, int* clamped) {
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd p(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double raw = expit(eta(i));
    p(i) = std::clamp(raw, positivity.epsilon, kUpperClamp);
    if (clamped && p(i) != raw) ++*clamped;
  }
  return p;
}

struct NewtonResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  bool ridged = false;
};

NewtonResult newton_core(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xb,
                         const Eigen::VectorXd& d, const NewtonConfig& config) {
  const auto q = xb.cols();
  const double n_b = static_cast<double>(xb.rows());
  NewtonResult res;
  res.beta = Eigen::VectorXd::Zero(q);
  const Eigen::VectorXd sum_a = xa.colwise().sum().transpose();
  double current = pseudo_risk(xa, xb, d, res.beta);
  for (int it = 0; it <= config.max_iter; ++it) {
    const Eigen::VectorXd eta = xb * res.beta;
    Eigen::VectorXd p(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) p(i) = expit(eta(i));
    const Eigen::VectorXd u = sum_a - xb.transpose() * (d.array() * p.array()).matrix();
    const double gmax = u.cwiseAbs().maxCoeff();
    res.iterations = it;
    if (gmax < config.tol * n_b) return res;
    if (res.beta.norm() > config.separation_norm) {
      throw SeparationError("propensity model: separation detected", res.beta);
    }
    if (it == config.max_iter) break;
    const Eigen::VectorXd w = (d.array() * p.array() * (1.0 - p.array())).matrix();
    const Eigen::MatrixXd h = xb.transpose() * w.asDiagonal() * xb;
    bool ridged = false;
    const Eigen::VectorXd step = solve_spd(h, u, config.ridge_fallback, &ridged);
    res.ridged = res.ridged || ridged;
    double t = 1.0;
    Eigen::VectorXd next = res.beta + step;
    double value = pseudo_risk(xa, xb, d, next);
    int halvings = 0;
    while (!(value <= current + 1e-12 * std::abs(current))) {
      if (halvings == config.max_halvings) {
        throw ConvergenceError("propensity Newton-Raphson: step halving failed to decrease the pseudo-risk",
                               res.beta);
      }
      t *= 0.5;
      next = res.beta + t * step;
      value = pseudo_risk(xa, xb, d, next);
      ++halvings;
    }
    res.beta = next;
    current = value;
  }
  throw ConvergenceError("propensity Newton-Raphson did not converge", res.beta);
}

std::vector<std::size_t> nonzero_covariates(const Eigen::VectorXd& beta,
                                            std::span<const std::size_t> subset) {
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < subset.size(); ++k) {
    if (beta(static_cast<Eigen::Index>(k) + 1) != 0.0) active.push_back(subset[k]);
  }
  return active;
}

// Fills probabilities, active set and variance designs from `fit.beta`.
void finish_fit(const CombinedSample& sample, PropensityFit& fit, const PositivityConfig& positivity) {
  const Eigen::MatrixXd xa = design_matrix(sample, fit.subset, true, SampleSide::a);
  const Eigen::MatrixXd xb = design_matrix(sample, fit.subset, true, SampleSide::b);
  fit.clamp_count = 0;
  fit.p_a = probabilities(xa, fit.beta, positivity, &fit.clamp_count);
  fit.p_b = probabilities(xb, fit.beta, positivity, &fit.clamp_count);
  fit.active_set = nonzero_covariates(fit.beta, fit.subset);
  fit.design_a = design_matrix(sample, fit.active_set, true, SampleSide::a);
  fit.design_b = design_matrix(sample, fit.active_set, true, SampleSide::b);
}

void check_subset(const CombinedSample& sample, std::span<const std::size_t> subset) {
  for (auto j : subset) {
    if (j >= sample.p()) throw DimensionError("propensity covariate index out of range");
  }
  if (sample.n_a() == 0 || sample.n_b() == 0) {
    throw InsufficientDataError("propensity model needs non-empty samples A and B");
  }
}

Eigen::VectorXd with_intercept_factor(const Eigen::VectorXd& factors) {
  Eigen::VectorXd pf(factors.size() + 1);
  pf(0) = 0.0;
  pf.tail(factors.size()) = factors;
  return pf;
}

std::vector<double> grid_for(const PenaltyConfig& penalty, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& pf) {
  if (!penalty.lambda_grid.empty()) return penalty.lambda_grid;
  return default_lambda_grid(x, y, w, pf, true, penalty.solver, penalty.grid_size,
                             penalty.lambda_min_ratio);
}

// Solution at the grid index chosen by CV, reached by warm starts as in the folds.
Eigen::VectorXd solve_at_selected(const PenalizedWls& sys, PenaltyKind kind, const Eigen::VectorXd& pf,
                                  const CvCurve& curve, const SolverConfig& solver) {
  Eigen::VectorXd warm;
  Eigen::VectorXd coef;
  for (std::size_t k = 0; k <= curve.selected_index; ++k) {
    coef = kind == PenaltyKind::lasso ? sys.lasso(pf, curve.lambdas[k], solver, &warm)
                                      : sys.scad(pf, curve.lambdas[k], solver, &warm);
  }
  return coef;
}

struct SelectionProblem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

// Penalized fit with lambda fixed or chosen by CV; returns coefficients and the chosen lambda.
Eigen::VectorXd select(const SelectionProblem& prob, const Eigen::VectorXd& pf, PenaltyKind kind,
                       const PenaltyConfig& penalty, const std::optional<std::vector<std::int64_t>>& labels,
                       std::uint64_t seed, double& lambda, std::optional<CvCurve>& curve_out) {
  const PenalizedWls sys(prob.x, prob.y, prob.w, true, penalty.solver.standardize);
  if (penalty.fixed_lambda) {
    lambda = *penalty.fixed_lambda;
    return kind == PenaltyKind::lasso ? sys.lasso(pf, lambda, penalty.solver)
                                      : sys.scad(pf, lambda, penalty.solver);
  }
  const auto grid = grid_for(penalty, prob.x, prob.y, prob.w, pf);
  const auto folds = assign_folds(static_cast<std::size_t>(prob.x.rows()), labels, penalty.v_folds, seed);
  auto curve = cross_validate_path(prob.x, prob.y, prob.w, pf, true, kind, grid, folds, penalty.v_folds,
                                   penalty.solver);
  lambda = curve.selected;
  Eigen::VectorXd coef = solve_at_selected(sys, kind, pf, curve, penalty.solver);
  curve_out = std::move(curve);
  return coef;
}

SelectionProblem propensity_problem(const CombinedSample& sample, const PenaltyConfig& penalty,
                                    PropensityFit& full) {
  const auto all = all_covariates(sample.p());
  full = fit_newton(sample, all, penalty.newton);
  const auto wr = working_response(sample, full, penalty.response, penalty.newton.positivity);
  return {design_matrix(sample, all, true, SampleSide::b), wr.ystar, wr.w};
}

}  // namespace

std::string_view to_string(PropensityMethod method) {
  switch (method) {
    case PropensityMethod::newton:
      return "newton";
    case PropensityMethod::lasso:
      return "lasso";
    case PropensityMethod::oalasso:
      return "oalasso";
    case PropensityMethod::scad_union:
      return "scad_union";
    case PropensityMethod::collaborative:
      return "collaborative";
  }
  return "unknown";
}

void PenaltyConfig::check() const {
  for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
    if (!(lambda_grid[k] >= 0.0) || !std::isfinite(lambda_grid[k])) {
      throw ConfigError("lambda grid values must be finite and non-negative");
    }
    if (k > 0 && !(lambda_grid[k] < lambda_grid[k - 1])) {
      throw ConfigError("lambda grid must be strictly descending");
    }
  }
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (v_folds < 2) throw ConfigError("at least 2 CV folds are required");
  if (grid_size < 1) throw ConfigError("grid size must be positive");
  if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) {
    throw ConfigError("lambda_min_ratio must lie in (0, 1)");
  }
  if (fixed_lambda && !(*fixed_lambda >= 0.0)) throw ConfigError("fixed lambda must be non-negative");
}

double pseudo_risk(const Eigen::MatrixXd& design_a, const Eigen::MatrixXd& design_b,
                   const Eigen::VectorXd& d_b, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta_b = design_b * beta;
  double risk = 0.0;
  for (Eigen::Index i = 0; i < eta_b.size(); ++i) risk += d_b(i) * log1pexp(eta_b(i));
  return risk - (design_a * beta).sum();
}

Eigen::VectorXd pseudo_gradient(const Eigen::MatrixXd& design_a, const Eigen::MatrixXd& design_b,
                                const Eigen::VectorXd& d_b, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta_b = design_b * beta;
  Eigen::VectorXd dp(eta_b.size());
  for (Eigen::Index i = 0; i < eta_b.size(); ++i) dp(i) = d_b(i) * expit(eta_b(i));
  return design_a.colwise().sum().transpose() - design_b.transpose() * dp;
}

PropensityFit fit_newton(const CombinedSample& sample, std::span<const std::size_t> subset,
                         const NewtonConfig& config) {
  check_subset(sample, subset);
  PropensityFit fit;
  fit.method = PropensityMethod::newton;
  fit.subset.assign(subset.begin(), subset.end());
  const Eigen::MatrixXd xa = design_matrix(sample, subset, true, SampleSide::a);
  const Eigen::MatrixXd xb = design_matrix(sample, subset, true, SampleSide::b);
  const auto res = newton_core(xa, xb, sample.db(), config);
  fit.beta = res.beta;
  fit.iterations = res.iterations;
  fit.ridged = res.ridged;
  fit.converged = true;
  finish_fit(sample, fit, config.positivity);
  return fit;
}

WorkingResponse working_response(const CombinedSample& sample, const PropensityFit& fit,
                                 WorkingResponseKind kind, const PositivityConfig& positivity) {
  const Eigen::MatrixXd xa = design_matrix(sample, fit.subset, true, SampleSide::a);
  const Eigen::MatrixXd xb = design_matrix(sample, fit.subset, true, SampleSide::b);
  if (fit.beta.size() != xb.cols()) throw DimensionError("working response: beta does not match the subset");
  const Eigen::VectorXd eta = xb * fit.beta;
  WorkingResponse out;
  const Eigen::VectorXd p = probabilities(xb, fit.beta, positivity, &out.clamp_count);
  const Eigen::ArrayXd v = p.array() * (1.0 - p.array());
  const Eigen::VectorXd& d = sample.db();
  const Eigen::VectorXd& delta = sample.delta_b();
  out.w = (d.array() * v).matrix();
  out.ystar = (eta.array() + (delta.array() - p.array()) / v).matrix();
  if (kind == WorkingResponseKind::newton_consistent) {
    const Eigen::VectorXd u =
        xa.colwise().sum().transpose() - xb.transpose() * (d.array() * p.array()).matrix();
    const Eigen::VectorXd observed = xb.transpose() * (d.array() * (delta.array() - p.array())).matrix();
    const Eigen::MatrixXd h = xb.transpose() * out.w.asDiagonal() * xb;
    const Eigen::VectorXd shift = solve_spd(h, u - observed, true);
    out.ystar += xb * shift;
  }
  return out;
}

Eigen::VectorXd outcome_coefficients(const CombinedSample& sample, OutcomeFamily family,
                                     const SolverConfig& config) {
  if (sample.n_a() <= sample.p() + 1) {
    throw InsufficientDataError("outcome regression needs more than p + 1 units in sample A");
  }
  const auto all = all_covariates(sample.p());
  const auto fit = fit_outcome(sample, family, all, config);
  return fit.coef.tail(fit.coef.size() - 1);
}

Eigen::VectorXd adaptive_penalty_factors(const Eigen::VectorXd& alpha, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  Eigen::VectorXd out(alpha.size());
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    const double a = std::abs(alpha(j));
    out(j) = a < 1e-10 ? std::numeric_limits<double>::infinity() : std::pow(a, -gamma);
  }
  return out;
}

CvCurve cv_lambda(const CombinedSample& sample, const Eigen::VectorXd& factors, const PenaltyConfig& penalty,
                  PenaltyKind kind) {
  penalty.check();
  if (static_cast<std::size_t>(factors.size()) != sample.p()) {
    throw DimensionError("cv_lambda: one penalty factor per covariate required");
  }
  PropensityFit full;
  const auto prob = propensity_problem(sample, penalty, full);
  const Eigen::VectorXd pf = with_intercept_factor(factors);
  const auto grid = grid_for(penalty, prob.x, prob.y, prob.w, pf);
  const auto folds = assign_folds(sample.n_b(), penalty.fold_labels, penalty.v_folds, penalty.seed);
  return cross_validate_path(prob.x, prob.y, prob.w, pf, true, kind, grid, folds, penalty.v_folds,
                             penalty.solver);
}

PropensityFit fit_penalized(const CombinedSample& sample, const Eigen::VectorXd& factors,
                            const PenaltyConfig& penalty, PropensityMethod method) {
  penalty.check();
  if (static_cast<std::size_t>(factors.size()) != sample.p()) {
    throw DimensionError("penalized propensity fit: one penalty factor per covariate required");
  }
  PropensityFit full;
  const auto prob = propensity_problem(sample, penalty, full);
  const Eigen::VectorXd pf = with_intercept_factor(factors);

  PropensityFit fit;
  fit.beta = select(prob, pf, PenaltyKind::lasso, penalty, penalty.fold_labels, penalty.seed, fit.lambda,
                    fit.cv);
  fit.subset = all_covariates(sample.p());
  if (penalty.refit) {
    const auto active = nonzero_covariates(fit.beta, fit.subset);
    auto refit = fit_newton(sample, active, penalty.newton);
    refit.lambda = fit.lambda;
    refit.cv = std::move(fit.cv);
    fit = std::move(refit);
  } else {
    fit.iterations = full.iterations;
    fit.ridged = full.ridged;
    fit.converged = full.converged;
    finish_fit(sample, fit, penalty.newton.positivity);
  }
  fit.method = method;
  fit.penalty_factors = factors;
  return fit;
}

PropensityFit fit_oalasso(const CombinedSample& sample, const PenaltyConfig& penalty) {
  penalty.check();
  const Eigen::VectorXd alpha = outcome_coefficients(sample, penalty.family, penalty.solver);
  return fit_penalized(sample, adaptive_penalty_factors(alpha, penalty.gamma), penalty, PropensityMethod::oalasso);
}

PropensityFit fit_lasso(const CombinedSample& sample, const PenaltyConfig& penalty) {
  return fit_penalized(sample, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(sample.p())), penalty,
                       PropensityMethod::lasso);
}

ScadUnionResult fit_scad_union(const CombinedSample& sample, const PenaltyConfig& penalty,
                               OutcomeFamily family) {
  penalty.check();
  const auto all = all_covariates(sample.p());
  const Eigen::VectorXd pf = with_intercept_factor(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(sample.p())));
  ScadUnionResult out;

  PropensityFit full;
  const auto prob_p = propensity_problem(sample, penalty, full);
  double lambda_p = 0.0;
  std::optional<CvCurve> curve_p;
  const Eigen::VectorXd beta_p =
      select(prob_p, pf, PenaltyKind::scad, penalty, penalty.fold_labels, penalty.seed, lambda_p, curve_p);
  out.propensity_set = nonzero_covariates(beta_p, all);

  SelectionProblem prob_m;
  prob_m.x = design_matrix(sample, all, true, SampleSide::a);
  if (family == OutcomeFamily::linear) {
    prob_m.y = sample.ya();
    prob_m.w = Eigen::VectorXd::Ones(prob_m.x.rows());
  } else {
    // IRLS working response of the unpenalized logistic fit.
    const auto ofit = fit_outcome(sample, family, all, penalty.solver);
    const Eigen::VectorXd eta = prob_m.x * ofit.coef;
    prob_m.y.resize(eta.size());
    prob_m.w.resize(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = std::clamp(expit(eta(i)), 1e-6, 1.0 - 1e-6);
      prob_m.w(i) = mu * (1.0 - mu);
      prob_m.y(i) = eta(i) + (sample.ya()(i) - mu) / prob_m.w(i);
    }
  }
  double lambda_m = 0.0;
  std::optional<CvCurve> curve_m;
  const Eigen::VectorXd beta_m =
      select(prob_m, pf, PenaltyKind::scad, penalty, std::nullopt, penalty.seed + 1, lambda_m, curve_m);
  out.outcome_set = nonzero_covariates(beta_m, all);

  std::set<std::size_t> uni(out.propensity_set.begin(), out.propensity_set.end());
  uni.insert(out.outcome_set.begin(), out.outcome_set.end());
  out.union_set.assign(uni.begin(), uni.end());

  out.fit = fit_newton(sample, out.union_set, penalty.newton);
  out.fit.method = PropensityMethod::scad_union;
  out.fit.lambda = lambda_p;
  out.fit.cv = std::move(curve_p);
  return out;
}

PropensityFit fit_collaborative(const CombinedSample& sample, const Eigen::VectorXd& mhat_a,
                                const Eigen::VectorXd& mhat_b, const NewtonConfig& config) {
  if (static_cast<std::size_t>(mhat_a.size()) != sample.n_a() ||
      static_cast<std::size_t>(mhat_b.size()) != sample.n_b()) {
    throw DimensionError("collaborative score: m-hat must cover every unit of A and B");
  }
  if (sample.n_a() == 0 || sample.n_b() == 0) {
    throw InsufficientDataError("collaborative score needs non-empty samples A and B");
  }
  if (!mhat_a.allFinite() || !mhat_b.allFinite()) {
    throw ValidationError("collaborative score: m-hat must be finite");
  }
  const double lo = std::min(mhat_a.minCoeff(), mhat_b.minCoeff());
  const double hi = std::max(mhat_a.maxCoeff(), mhat_b.maxCoeff());
  if (hi - lo <= 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)})) {
    throw DegenerateModelError("collaborative score: m-hat is constant, so it is collinear with the intercept");
  }
  PropensityFit fit;
  fit.method = PropensityMethod::collaborative;
  fit.design_a.resize(mhat_a.size(), 2);
  fit.design_a.col(0).setOnes();
  fit.design_a.col(1) = mhat_a;
  fit.design_b.resize(mhat_b.size(), 2);
  fit.design_b.col(0).setOnes();
  fit.design_b.col(1) = mhat_b;
  const auto res = newton_core(fit.design_a, fit.design_b, sample.db(), config);
  fit.beta = res.beta;
  fit.iterations = res.iterations;
  fit.ridged = res.ridged;
  fit.converged = true;
  fit.p_a = probabilities(fit.design_a, fit.beta, config.positivity, &fit.clamp_count);
  fit.p_b = probabilities(fit.design_b, fit.beta, config.positivity, &fit.clamp_count);
  return fit;
}

}  // namespace npmean
