#include "npmean/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "npmean/errors.hpp"

namespace npmean {
namespace {

void check_problem(const WlsProblem& prob) {
  const auto n = prob.x.rows();
  const auto q = prob.x.cols();
  if (prob.y.size() != n || prob.w.size() != n) {
    throw DimensionError("WLS problem: x, y and w disagree on the number of rows");
  }
  if (q == 0) throw DimensionError("WLS problem: no columns");
  if (prob.penalty_factors.size() != 0 && prob.penalty_factors.size() != q) {
    throw DimensionError("WLS problem: one penalty factor per column required");
  }
  if ((prob.w.array() <= 0.0).any() || !prob.w.allFinite()) {
    throw ValidationError("WLS problem: weights must be finite and positive");
  }
  if (prob.penalty_factors.size() != 0 && (prob.penalty_factors.array() < 0.0).any()) {
    throw ValidationError("WLS problem: penalty factors must be non-negative");
  }
  if (!(prob.lambda >= 0.0)) throw ValidationError("WLS problem: lambda must be non-negative");
}

Eigen::VectorXd factors_or_ones(const WlsProblem& prob) {
  if (prob.penalty_factors.size() != 0) return prob.penalty_factors;
  return Eigen::VectorXd::Ones(prob.x.cols());
}

Eigen::VectorXd solve_normal(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, bool fallback,
                             bool* ridged) {
  const auto q = a.rows();
  Eigen::VectorXd dinv(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    dinv(j) = a(j, j) > 0.0 ? 1.0 / std::sqrt(a(j, j)) : 0.0;
  }
  bool singular = (dinv.array() == 0.0).any();
  if (!singular) {
    const Eigen::MatrixXd eq = dinv.asDiagonal() * a * dinv.asDiagonal();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(eq);
    const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
    const bool tiny_pivot = pivots.minCoeff() <= 1e-13 * pivots.maxCoeff();
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && !tiny_pivot && ldlt.rcond() > 1e-13) {
      if (ridged) *ridged = false;
      return dinv.asDiagonal() * ldlt.solve(dinv.asDiagonal() * b);
    }
    singular = true;
  }
  if (!fallback) throw SingularityError("normal equations are singular");
  const double ridge = std::max(1e-8 * a.trace() / static_cast<double>(q), 1e-300);
  Eigen::MatrixXd reg = a;
  reg.diagonal().array() += ridge;
  if (ridged) *ridged = true;
  return reg.ldlt().solve(b);
}

}  // namespace

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, bool ridge_fallback,
                          bool* ridged) {
  if (a.rows() != a.cols() || a.rows() != b.size()) throw DimensionError("solve_spd: shape mismatch");
  return solve_normal(a, b, ridge_fallback, ridged);
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double scad_derivative(double t, double lambda, double a) {
  t = std::abs(t);
  if (t <= lambda) return lambda;
  return std::max(a * lambda - t, 0.0) / (a - 1.0);
}

std::vector<double> log_lambda_grid(double lambda_max, int size, double min_ratio) {
  if (size < 1) throw ConfigError("lambda grid needs at least one value");
  if (!(lambda_max > 0.0)) return std::vector<double>(1, 0.0);
  std::vector<double> grid(static_cast<std::size_t>(size));
  if (size == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  const double step = std::log(min_ratio) / static_cast<double>(size - 1);
  for (int k = 0; k < size; ++k) {
    grid[static_cast<std::size_t>(k)] = lambda_max * std::exp(step * k);
  }
  return grid;
}

WlsSolution wls_solve(const WlsProblem& prob, const SolverConfig& config) {
  check_problem(prob);
  const Eigen::MatrixXd xw = prob.x.transpose() * prob.w.asDiagonal();
  const Eigen::MatrixXd a = xw * prob.x;
  const Eigen::VectorXd b = xw * prob.y;
  WlsSolution out;
  out.coef = solve_normal(a, b, config.ridge_fallback, &out.ridged);
  return out;
}

// ------------------------------------------------------------ PenalizedWls

PenalizedWls::PenalizedWls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w, bool intercept, bool standardize)
    : cols_(x.cols()), intercept_(intercept) {
  const auto n = x.rows();
  weight_sum_ = w.sum();
  y_center_ = intercept ? w.dot(y) / weight_sum_ : 0.0;

  const Eigen::Index first = intercept ? 1 : 0;
  std::vector<double> means;
  std::vector<double> scales;
  for (Eigen::Index j = first; j < cols_; ++j) {
    const double m = intercept ? w.dot(x.col(j)) / weight_sum_ : 0.0;
    const double ms = (w.array() * (x.col(j).array() - m).square()).sum() / weight_sum_;
    const double magnitude = (w.array() * x.col(j).array().square()).sum() / weight_sum_;
    if (!(ms > 1e-14 * std::max(magnitude, 1e-300)) || ms == 0.0) continue;  // constant column
    columns_.push_back(j);
    means.push_back(m);
    scales.push_back(standardize ? std::sqrt(ms) : 1.0);
  }
  const auto k = static_cast<Eigen::Index>(columns_.size());
  mean_ = Eigen::Map<const Eigen::VectorXd>(means.data(), k);
  scale_ = Eigen::Map<const Eigen::VectorXd>(scales.data(), k);

  Eigen::MatrixXd zw(n, k);
  const Eigen::ArrayXd sw = w.array().sqrt();
  for (Eigen::Index c = 0; c < k; ++c) {
    zw.col(c) = ((x.col(columns_[static_cast<std::size_t>(c)]).array() - mean_(c)) / scale_(c)) * sw;
  }
  const Eigen::VectorXd ryw = ((y.array() - y_center_) * sw).matrix();
  gram_ = zw.transpose() * zw;
  xty_ = zw.transpose() * ryw;
  yy_ = ryw.squaredNorm();
}

Eigen::VectorXd PenalizedWls::scales() const {
  Eigen::VectorXd s = Eigen::VectorXd::Ones(cols_);
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    s(columns_[c]) = scale_(static_cast<Eigen::Index>(c));
  }
  return s;
}

Eigen::VectorXd PenalizedWls::to_original(const Eigen::VectorXd& b) const {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(cols_);
  double shift = 0.0;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    const double coef = b(i) / scale_(i);
    beta(columns_[c]) = coef;
    shift += mean_(i) * coef;
  }
  if (intercept_) beta(0) = y_center_ - shift;
  return beta;
}

Eigen::VectorXd PenalizedWls::standardized_pf(const Eigen::VectorXd& pf) const {
  if (pf.size() != cols_) throw DimensionError("one penalty factor per column required");
  Eigen::VectorXd out(static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t c = 0; c < columns_.size(); ++c) out(static_cast<Eigen::Index>(c)) = pf(columns_[c]);
  return out;
}

double PenalizedWls::objective(const Eigen::VectorXd& b, const Eigen::VectorXd& spf,
                               double lambda) const {
  double pen = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b(j) != 0.0) pen += spf(j) * std::abs(b(j));
  }
  return yy_ - 2.0 * xty_.dot(b) + b.dot(gram_ * b) + lambda * pen;
}

Eigen::VectorXd PenalizedWls::unpenalized(const SolverConfig& config, bool* ridged) const {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(columns_.size()));
  bool r = false;
  if (b.size() > 0) b = solve_normal(gram_, xty_, config.ridge_fallback, &r);
  if (ridged) *ridged = r;
  return to_original(b);
}

double PenalizedWls::lambda_max(const Eigen::VectorXd& pf) const {
  const Eigen::VectorXd spf = standardized_pf(pf);
  const auto k = spf.size();
  // Fit the unpenalized columns first; the others start at zero.
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (spf(j) == 0.0) free.push_back(j);
  }
  Eigen::VectorXd grad = xty_;
  if (!free.empty()) {
    const auto f = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd gff(f, f);
    Eigen::VectorXd cf(f);
    for (Eigen::Index a = 0; a < f; ++a) {
      cf(a) = xty_(free[static_cast<std::size_t>(a)]);
      for (Eigen::Index c = 0; c < f; ++c) {
        gff(a, c) = gram_(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(c)]);
      }
    }
    const Eigen::VectorXd bf = solve_normal(gff, cf, true, nullptr);
    for (Eigen::Index a = 0; a < f; ++a) {
      grad -= gram_.col(free[static_cast<std::size_t>(a)]) * bf(a);
    }
  }
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (spf(j) > 0.0 && std::isfinite(spf(j))) lmax = std::max(lmax, 2.0 * std::abs(grad(j)) / spf(j));
  }
  return lmax;
}

Eigen::VectorXd PenalizedWls::solve_cd(const Eigen::VectorXd& spf, double lambda,
                                       const SolverConfig& config, Eigen::VectorXd b,
                                       LassoDiagnostics* diagnostics) const {
  const auto k = spf.size();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!std::isfinite(spf(j))) b(j) = 0.0;
  }
  Eigen::VectorXd grad = xty_ - gram_ * b;  // z' W r on the standardized scale
  Eigen::VectorXd unit(k);
  for (Eigen::Index j = 0; j < k; ++j) unit(j) = std::sqrt(gram_(j, j) / weight_sum_);

  auto sweep = [&](bool active_only) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (active_only && b(j) == 0.0) continue;
      if (!std::isfinite(spf(j))) continue;
      const double gjj = gram_(j, j);
      const double rho = grad(j) + gjj * b(j);
      const double updated = soft_threshold(rho, 0.5 * lambda * spf(j)) / gjj;
      const double delta = updated - b(j);
      if (delta != 0.0) {
        grad.noalias() -= gram_.col(j) * delta;
        b(j) = updated;
        max_change = std::max(max_change, std::abs(delta) * unit(j));
      }
    }
    return max_change;
  };

  int sweeps = 0;
  auto record = [&] {
    ++sweeps;
    if (diagnostics) diagnostics->objective.push_back(objective(b, spf, lambda));
    if (sweeps > config.max_iter) {
      if (diagnostics) diagnostics->sweeps = sweeps;
      throw ConvergenceError("coordinate descent did not converge in " +
                                 std::to_string(config.max_iter) + " sweeps",
                             to_original(b));
    }
  };

  while (true) {
    const double full = sweep(false);
    record();
    if (full < config.tol) break;
    while (true) {
      const double partial = sweep(true);
      record();
      if (partial < config.tol) break;
    }
  }
  if (diagnostics) diagnostics->sweeps = sweeps;
  return b;
}

Eigen::VectorXd PenalizedWls::lasso(const Eigen::VectorXd& pf, double lambda,
                                    const SolverConfig& config, Eigen::VectorXd* warm,
                                    LassoDiagnostics* diagnostics) const {
  const Eigen::VectorXd spf = standardized_pf(pf);
  const auto k = spf.size();
  const bool penalty_off = lambda == 0.0 || ((spf.array() == 0.0) || !spf.array().isFinite()).all();
  if (penalty_off && (spf.array().isFinite()).all()) {
    // Closed form; identical to the unpenalized normal equations.
    bool ridged = false;
    Eigen::VectorXd b = k > 0 ? solve_normal(gram_, xty_, config.ridge_fallback, &ridged)
                              : Eigen::VectorXd();
    if (diagnostics) {
      diagnostics->ridged = ridged;
      diagnostics->objective.push_back(objective(b, spf, 0.0));
      diagnostics->sweeps = 0;
    }
    if (warm) *warm = b;
    return to_original(b);
  }
  Eigen::VectorXd start = (warm && warm->size() == k) ? *warm : Eigen::VectorXd::Zero(k);
  Eigen::VectorXd b = solve_cd(spf, lambda, config, std::move(start), diagnostics);
  if (warm) *warm = b;
  return to_original(b);
}

Eigen::VectorXd PenalizedWls::scad(const Eigen::VectorXd& pf, double lambda,
                                   const SolverConfig& config, Eigen::VectorXd* warm) const {
  if (lambda == 0.0) return lasso(pf, 0.0, config, warm);
  const Eigen::VectorXd spf0 = standardized_pf(pf);
  const auto k = spf0.size();
  Eigen::VectorXd b = (warm && warm->size() == k) ? *warm : Eigen::VectorXd::Zero(k);
  b = solve_cd(spf0, lambda, config, b, nullptr);
  if (warm) *warm = b;
  const double lambda_unit = lambda / (2.0 * weight_sum_);
  for (int round = 1; round < config.lla_iter; ++round) {
    Eigen::VectorXd spf = spf0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (spf0(j) > 0.0 && std::isfinite(spf0(j))) {
        spf(j) = spf0(j) * scad_derivative(b(j), lambda_unit, config.scad_a) / lambda_unit;
      }
    }
    b = solve_cd(spf, lambda, config, b, nullptr);
  }
  return to_original(b);
}

std::vector<Eigen::VectorXd> PenalizedWls::path(PenaltyKind kind, const Eigen::VectorXd& pf,
                                                const std::vector<double>& lambdas,
                                                const SolverConfig& config) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(lambdas.size());
  Eigen::VectorXd warm;
  for (double lambda : lambdas) {
    if (kind == PenaltyKind::lasso) {
      out.push_back(lasso(pf, lambda, config, &warm));
    } else {
      // LLA restarts from the lasso solution; only that part is warm-started.
      out.push_back(scad(pf, lambda, config, &warm));
    }
  }
  return out;
}

// ------------------------------------------------------------ free functions

namespace {

Eigen::VectorXd problem_factors(const WlsProblem& prob) {
  Eigen::VectorXd pf = factors_or_ones(prob);
  if (prob.intercept) pf(0) = 0.0;
  return pf;
}

}  // namespace

Eigen::VectorXd lasso_cd(const WlsProblem& prob, const SolverConfig& config,
                         LassoDiagnostics* diagnostics) {
  check_problem(prob);
  const PenalizedWls sys(prob.x, prob.y, prob.w, prob.intercept, config.standardize);
  return sys.lasso(problem_factors(prob), prob.lambda, config, nullptr, diagnostics);
}

Eigen::VectorXd scad_lla(const WlsProblem& prob, const SolverConfig& config) {
  check_problem(prob);
  if (prob.lambda == 0.0) return wls_solve(prob, config).coef;
  const PenalizedWls sys(prob.x, prob.y, prob.w, prob.intercept, config.standardize);
  return sys.scad(problem_factors(prob), prob.lambda, config);
}

Eigen::VectorXd effective_penalty_factors(const WlsProblem& prob, const SolverConfig& config) {
  check_problem(prob);
  const PenalizedWls sys(prob.x, prob.y, prob.w, prob.intercept, config.standardize);
  return problem_factors(prob).cwiseProduct(sys.scales());
}

double penalized_objective(const WlsProblem& prob, const Eigen::VectorXd& coef,
                           const Eigen::VectorXd& effective_pf) {
  const Eigen::VectorXd r = prob.y - prob.x * coef;
  double pen = 0.0;
  for (Eigen::Index j = 0; j < coef.size(); ++j) {
    if (coef(j) != 0.0) pen += effective_pf(j) * std::abs(coef(j));
  }
  return (prob.w.array() * r.array().square()).sum() + prob.lambda * pen;
}

}  // namespace npmean
