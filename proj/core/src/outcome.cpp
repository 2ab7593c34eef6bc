#include "npmean/outcome.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "npmean/cv.hpp"
#include "npmean/errors.hpp"

namespace npmean {
namespace {

double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double log1pexp(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& terms) {
  Eigen::MatrixXd out(terms.rows(), terms.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(terms.cols()) = terms;
  return out;
}

std::vector<BasisTerm> main_terms(std::span<const std::size_t> subset) {
  std::vector<BasisTerm> basis;
  for (auto j : subset) basis.push_back({BasisTerm::Type::main, j, 0, 0.0});
  return basis;
}

bool is_constant(const Eigen::VectorXd& v) {
  if (v.size() == 0) return true;
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  return hi - lo <= 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
}

struct LogisticResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  bool ridged = false;
};

LogisticResult logistic_irls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const SolverConfig& config) {
  const auto n = x.rows();
  const auto q = x.cols();
  LogisticResult res;
  res.beta = Eigen::VectorXd::Zero(q);
  auto nll = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = x * b;
    double v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) v += log1pexp(eta(i)) - y(i) * eta(i);
    return v;
  };
  double current = nll(res.beta);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = x * res.beta;
    Eigen::VectorXd mu(n);
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = expit(eta(i));
    const Eigen::VectorXd grad = x.transpose() * (y - mu);
    res.iterations = it;
    if (grad.cwiseAbs().maxCoeff() < 1e-8 * static_cast<double>(n)) return res;
    WlsProblem newton{x, Eigen::VectorXd::Zero(n), (mu.array() * (1.0 - mu.array())).max(1e-12).matrix(),
                      Eigen::VectorXd(), 0.0, false};
    // Newton direction: (X'WX)^{-1} grad, obtained as a WLS solve with response W^{-1}(y - mu).
    newton.y = ((y - mu).array() / newton.w.array()).matrix();
    const auto step = wls_solve(newton, config);
    res.ridged = res.ridged || step.ridged;
    double t = 1.0;
    Eigen::VectorXd next = res.beta + step.coef;
    double value = nll(next);
    int halvings = 0;
    while (!(value <= current + 1e-12 * std::abs(current)) && halvings < 30) {
      t *= 0.5;
      next = res.beta + t * step.coef;
      value = nll(next);
      ++halvings;
    }
    if (halvings == 30) throw ConvergenceError("logistic IRLS: line search failed", res.beta);
    res.beta = next;
    current = value;
    if (res.beta.norm() > 50.0) throw SeparationError("logistic outcome model: separation detected", res.beta);
  }
  throw ConvergenceError("logistic IRLS did not converge", res.beta);
}

}  // namespace

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::linear:
      return "linear";
    case OutcomeKind::logistic:
      return "logistic";
    case OutcomeKind::flexible:
      return "flexible";
    case OutcomeKind::zero:
      return "zero";
  }
  return "unknown";
}

std::vector<std::size_t> OutcomeFit::covariates_used() const {
  std::set<std::size_t> used;
  for (std::size_t t = 0; t < basis.size(); ++t) {
    if (coef(static_cast<Eigen::Index>(t) + 1) == 0.0) continue;
    used.insert(basis[t].j);
    if (basis[t].type == BasisTerm::Type::product) used.insert(basis[t].k);
  }
  return {used.begin(), used.end()};
}

OutcomeFit OutcomeFit::zero(std::size_t p) {
  OutcomeFit fit;
  fit.kind = OutcomeKind::zero;
  fit.p = p;
  fit.coef = Eigen::VectorXd::Zero(1);
  return fit;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw DimensionError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<BasisTerm> expand_basis(const Eigen::MatrixXd& x) {
  using Type = BasisTerm::Type;
  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<std::size_t> live;
  for (std::size_t j = 0; j < p; ++j) {
    if (!is_constant(x.col(static_cast<Eigen::Index>(j)))) live.push_back(j);
  }
  const Eigen::VectorXd center = x.colwise().mean().transpose();
  auto c = [&](std::size_t j) { return center(static_cast<Eigen::Index>(j)); };
  std::vector<BasisTerm> basis;
  for (auto j : live) basis.push_back({Type::main, j, 0, 0.0});
  for (std::size_t a = 0; a < live.size(); ++a) {
    for (std::size_t b = a + 1; b < live.size(); ++b) {
      basis.push_back({Type::product, live[a], live[b], 0.0, c(live[a]), c(live[b])});
    }
  }
  for (auto j : live) {
    const Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(j));
    // A 0/1 column squared is itself.
    if (!(col.array().square() - col.array()).isZero(0.0)) basis.push_back({Type::square, j, 0, 0.0, c(j), c(j)});
  }
  for (auto j : live) {
    const Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(j));
    const std::vector<double> values(col.data(), col.data() + col.size());
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    double previous = lo;
    for (double prob : {0.25, 0.5, 0.75}) {
      const double knot = quantile(values, prob);
      if (knot <= previous || knot >= hi) continue;
      basis.push_back({Type::hinge, j, 0, knot});
      previous = knot;
    }
  }
  // Drop terms that are constant on the training rows.
  const Eigen::MatrixXd values = basis_matrix(basis, x);
  std::vector<BasisTerm> kept;
  for (std::size_t t = 0; t < basis.size(); ++t) {
    if (!is_constant(values.col(static_cast<Eigen::Index>(t)))) kept.push_back(basis[t]);
  }
  return kept;
}

Eigen::MatrixXd basis_matrix(std::span<const BasisTerm> basis, const Eigen::MatrixXd& x) {
  using Type = BasisTerm::Type;
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t t = 0; t < basis.size(); ++t) {
    const auto& term = basis[t];
    const auto c = static_cast<Eigen::Index>(t);
    const auto xj = x.col(static_cast<Eigen::Index>(term.j));
    switch (term.type) {
      case Type::main:
        out.col(c) = xj;
        break;
      case Type::product:
        out.col(c) = ((xj.array() - term.center_j) * (x.col(static_cast<Eigen::Index>(term.k)).array() - term.center_k))
                         .matrix();
        break;
      case Type::square:
        out.col(c) = (xj.array() - term.center_j).square().matrix();
        break;
      case Type::hinge:
        out.col(c) = (xj.array() - term.knot).max(0.0).matrix();
        break;
    }
  }
  return out;
}

OutcomeFit fit_outcome(const CombinedSample& sample, OutcomeFamily family,
                       std::span<const std::size_t> subset, const SolverConfig& config) {
  for (auto j : subset) {
    if (j >= sample.p()) throw DimensionError("outcome covariate index out of range");
  }
  if (sample.n_a() == 0) throw InsufficientDataError("outcome model needs a non-empty sample A");
  OutcomeFit fit;
  fit.p = sample.p();
  fit.basis = main_terms(subset);
  const Eigen::MatrixXd x = with_intercept(basis_matrix(fit.basis, sample.xa()));
  const Eigen::VectorXd& y = sample.ya();
  if (family == OutcomeFamily::linear) {
    fit.kind = OutcomeKind::linear;
    const WlsProblem prob{x, y, Eigen::VectorXd::Ones(x.rows()), Eigen::VectorXd(), 0.0, true};
    const auto sol = wls_solve(prob, config);
    fit.coef = sol.coef;
    fit.ridged = sol.ridged;
  } else {
    fit.kind = OutcomeKind::logistic;
    if (((y.array() != 0.0) && (y.array() != 1.0)).any()) {
      throw ValidationError("logistic outcome model needs a 0/1 outcome");
    }
    const auto res = logistic_irls(x, y, config);
    fit.coef = res.beta;
    fit.ridged = res.ridged;
    fit.iterations = res.iterations;
  }
  return fit;
}

OutcomeFit fit_outcome_flexible(const CombinedSample& sample, const FlexibleConfig& config) {
  if (sample.n_a() < static_cast<std::size_t>(config.v_folds)) {
    throw InsufficientDataError("flexible outcome model: fewer A units than CV folds");
  }
  OutcomeFit fit;
  fit.kind = OutcomeKind::flexible;
  fit.p = sample.p();
  fit.basis = expand_basis(sample.xa());
  const Eigen::MatrixXd x = with_intercept(basis_matrix(fit.basis, sample.xa()));
  const Eigen::VectorXd& y = sample.ya();
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(x.rows());
  Eigen::VectorXd pf = Eigen::VectorXd::Ones(x.cols());
  pf(0) = 0.0;
  if (fit.basis.empty()) {
    fit.coef = Eigen::VectorXd::Constant(1, y.mean());
    return fit;
  }
  const auto grid = default_lambda_grid(x, y, w, pf, true, config.solver, config.grid_size,
                                        config.lambda_min_ratio);
  const auto folds = assign_folds(static_cast<std::size_t>(x.rows()), std::nullopt, config.v_folds,
                                  config.seed);
  const auto curve = cross_validate_path(x, y, w, pf, true, PenaltyKind::lasso, grid, folds,
                                         config.v_folds, config.solver);
  const PenalizedWls sys(x, y, w, true, config.solver.standardize);
  // Warm-start down the grid to the selected value, as the CV folds did.
  Eigen::VectorXd warm;
  for (std::size_t k = 0; k <= curve.selected_index; ++k) {
    fit.coef = sys.lasso(pf, grid[k], config.solver, &warm);
  }
  fit.lambda = curve.selected;
  return fit;
}

Eigen::VectorXd predict(const OutcomeFit& fit, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != fit.p) {
    throw DimensionError("predict: expected " + std::to_string(fit.p) + " covariates, got " +
                         std::to_string(x.cols()));
  }
  if (fit.kind == OutcomeKind::zero) return Eigen::VectorXd::Zero(x.rows());
  const Eigen::MatrixXd terms = basis_matrix(fit.basis, x);
  Eigen::VectorXd eta = terms * fit.coef.tail(fit.coef.size() - 1);
  eta.array() += fit.coef(0);
  if (fit.kind == OutcomeKind::logistic) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = expit(eta(i));
  }
  return eta;
}

}  // namespace npmean
