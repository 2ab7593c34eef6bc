#pragma once

#include <vector>

#include <Eigen/Core>

namespace npmean {

/// Weighted least squares, optionally with a weighted L1 penalty:
///
///   minimize  sum_i w_i (y_i - x_i' beta)^2 + lambda * sum_j pf_j |beta_j|
///
/// When `intercept` is set, column 0 of `x` must be all ones; its penalty
/// factor is ignored (always 0). A penalty factor of +inf removes the column.
struct WlsProblem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Eigen::VectorXd penalty_factors;
  double lambda = 0.0;
  bool intercept = true;
};

struct SolverConfig {
  /// Max absolute change of a standardized coefficient over one sweep.
  double tol = 1e-7;
  int max_iter = 10000;
  /// Local linear approximation rounds for SCAD.
  int lla_iter = 3;
  double scad_a = 3.7;
  /// Penalize coefficients of columns scaled to unit weighted variance
  /// (glmnet convention). The objective is then the one above with
  /// pf_j replaced by pf_j * sd_w(x_j).
  bool standardize = true;
  /// Add 1e-8 * trace / q to a singular normal matrix instead of throwing.
  bool ridge_fallback = true;
};

struct WlsSolution {
  Eigen::VectorXd coef;
  bool ridged = false;
};

struct LassoDiagnostics {
  int sweeps = 0;
  /// Penalized objective after each sweep (standardized scale).
  std::vector<double> objective;
  bool ridged = false;
};

/// Unpenalized weighted least squares via the normal equations. Ignores
/// `lambda` and the penalty factors.
WlsSolution wls_solve(const WlsProblem& prob, const SolverConfig& config = {});

/// Solves a x = b for symmetric positive semi-definite `a`. Singularity is
/// judged after diagonal equilibration; a singular system gets a
/// 1e-8 * trace / q ridge when `ridge_fallback` is set (reported through
/// `ridged`) and throws SingularityError otherwise.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, bool ridge_fallback,
                          bool* ridged = nullptr);

/// sign(z) * max(|z| - t, 0).
double soft_threshold(double z, double t);

/// SCAD penalty derivative p'_lambda(t) for t >= 0.
double scad_derivative(double t, double lambda, double a);

/// Coordinate-descent LASSO. Throws ConvergenceError (carrying the last
/// iterate) after `max_iter` sweeps.
Eigen::VectorXd lasso_cd(const WlsProblem& prob, const SolverConfig& config = {},
                         LassoDiagnostics* diagnostics = nullptr);

/// SCAD by local linear approximation: round 1 is `lasso_cd`, later rounds
/// reweight each penalty factor by p'(|b_j|)/lambda at the previous iterate.
/// Coefficients and lambda are compared on the standardized, per-unit-weight
/// scale, i.e. with the loss divided by 2 * sum(w).
Eigen::VectorXd scad_lla(const WlsProblem& prob, const SolverConfig& config = {});

/// Penalty factors actually applied on the original coefficient scale
/// (pf_j times the weighted sd of column j when standardizing).
Eigen::VectorXd effective_penalty_factors(const WlsProblem& prob, const SolverConfig& config = {});

/// Objective of `prob` at `coef` with explicit per-coefficient penalties.
double penalized_objective(const WlsProblem& prob, const Eigen::VectorXd& coef,
                           const Eigen::VectorXd& effective_pf);

/// `size` log-spaced values from `lambda_max` down to `min_ratio * lambda_max`.
std::vector<double> log_lambda_grid(double lambda_max, int size, double min_ratio);

enum class PenaltyKind { lasso, scad };

/// Standardized Gram form of a WLS problem, built once and reused across a
/// lambda path or a set of penalty factors. All solves return coefficients
/// on the original column scale (length = x.cols()).
class PenalizedWls {
 public:
  PenalizedWls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
               bool intercept, bool standardize);

  Eigen::Index cols() const noexcept { return cols_; }
  double weight_sum() const noexcept { return weight_sum_; }

  /// Smallest lambda at which every penalized coefficient is zero.
  double lambda_max(const Eigen::VectorXd& pf) const;

  /// `warm` holds standardized coefficients; it is read as a start and
  /// overwritten with the solution.
  Eigen::VectorXd lasso(const Eigen::VectorXd& pf, double lambda, const SolverConfig& config,
                        Eigen::VectorXd* warm = nullptr,
                        LassoDiagnostics* diagnostics = nullptr) const;

  Eigen::VectorXd scad(const Eigen::VectorXd& pf, double lambda, const SolverConfig& config,
                       Eigen::VectorXd* warm = nullptr) const;

  /// Solutions along `lambdas` (any order; warm-started in the given order).
  std::vector<Eigen::VectorXd> path(PenaltyKind kind, const Eigen::VectorXd& pf,
                                    const std::vector<double>& lambdas,
                                    const SolverConfig& config) const;

  Eigen::VectorXd unpenalized(const SolverConfig& config, bool* ridged = nullptr) const;

  /// Column scales used for standardization (1 for the intercept).
  Eigen::VectorXd scales() const;

 private:
  Eigen::VectorXd to_original(const Eigen::VectorXd& b) const;
  Eigen::VectorXd standardized_pf(const Eigen::VectorXd& pf) const;
  Eigen::VectorXd solve_cd(const Eigen::VectorXd& spf, double lambda, const SolverConfig& config,
                           Eigen::VectorXd b, LassoDiagnostics* diagnostics) const;
  double objective(const Eigen::VectorXd& b, const Eigen::VectorXd& spf, double lambda) const;

  Eigen::Index cols_ = 0;
  bool intercept_ = true;
  double weight_sum_ = 0.0;
  double y_center_ = 0.0;
  double yy_ = 0.0;
  std::vector<Eigen::Index> columns_;  // original index of each standardized column
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd xty_;
};

}  // namespace npmean
