#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "npmean/cv.hpp"
#include "npmean/outcome.hpp"
#include "npmean/sample.hpp"
#include "npmean/solvers.hpp"

namespace npmean {

enum class PropensityMethod { newton, lasso, oalasso, scad_union, collaborative };

std::string_view to_string(PropensityMethod method);

/// How the IRLS working response on B is formed from a fitted beta.
enum class WorkingResponseKind {
  /// eta + (delta - p) / (p (1 - p)) plus the projection that makes the
  /// weighted normal equations reproduce the Newton step of the full
  /// pseudo-likelihood (A-side gradient included).
  newton_consistent,
  /// eta + (delta - p) / (p (1 - p)) using only the membership observed on B.
  verbatim,
};

struct NewtonConfig {
  /// Stop when max |U(beta)| < tol * n_b.
  double tol = 1e-6;
  int max_iter = 100;
  int max_halvings = 30;
  /// Coefficient norm beyond which a still-large gradient signals separation.
  double separation_norm = 50.0;
  PositivityConfig positivity;
  bool ridge_fallback = true;
};

/// Design-weighted logistic model of A-membership.
struct PropensityFit {
  PropensityMethod method = PropensityMethod::newton;
  /// Intercept first, then one coefficient per entry of `subset`.
  Eigen::VectorXd beta;
  /// Covariates the model was fitted on.
  std::vector<std::size_t> subset;
  /// Covariates of `subset` with a nonzero coefficient.
  std::vector<std::size_t> active_set;
  /// Fitted probabilities on A and B, clamped to [epsilon, 1 - 1e-12].
  Eigen::VectorXd p_a;
  Eigen::VectorXd p_b;
  bool converged = false;
  int iterations = 0;
  int clamp_count = 0;
  bool ridged = false;
  /// Penalized fits: chosen lambda, CV curve, and penalty factor per subset covariate.
  double lambda = 0.0;
  std::optional<CvCurve> cv;
  Eigen::VectorXd penalty_factors;
  /// Regressors (with leading intercept) the variance estimators use:
  /// intercept + active set, or (1, m-hat) for the collaborative score.
  Eigen::MatrixXd design_a;
  Eigen::MatrixXd design_b;
};

struct PenaltyConfig {
  /// Explicit grid (strictly descending). Empty: log-spaced default.
  std::vector<double> lambda_grid;
  int grid_size = 50;
  double lambda_min_ratio = 1e-4;
  /// Adaptive exponent: factors are 1 / |alpha_j|^gamma.
  double gamma = 1.0;
  int v_folds = 5;
  /// Cluster or stratum id per B unit; whole groups go to one fold.
  std::optional<std::vector<std::int64_t>> fold_labels;
  std::uint64_t seed = 0;
  /// Skip CV and use this lambda.
  std::optional<double> fixed_lambda;
  /// Refit the unpenalized model on the active set.
  bool refit = false;
  OutcomeFamily family = OutcomeFamily::linear;
  WorkingResponseKind response = WorkingResponseKind::newton_consistent;
  SolverConfig solver;
  NewtonConfig newton;

  /// Throws ConfigError on a non-descending grid, gamma <= 0 or v_folds < 2.
  void check() const;
};

struct WorkingResponse {
  Eigen::VectorXd ystar;
  Eigen::VectorXd w;
  int clamp_count = 0;
};

/// Pseudo-risk  sum_B d_i log(1 + exp(x_i'beta)) - sum_A x_i'beta  (to minimize).
double pseudo_risk(const Eigen::MatrixXd& design_a, const Eigen::MatrixXd& design_b,
                   const Eigen::VectorXd& d_b, const Eigen::VectorXd& beta);

/// U(beta) = sum_A x_i - sum_B d_i p_i x_i.
Eigen::VectorXd pseudo_gradient(const Eigen::MatrixXd& design_a, const Eigen::MatrixXd& design_b,
                                const Eigen::VectorXd& d_b, const Eigen::VectorXd& beta);

/// Newton-Raphson with step halving on the pseudo-risk, starting at 0.
PropensityFit fit_newton(const CombinedSample& sample, std::span<const std::size_t> subset,
                         const NewtonConfig& config = {});

/// Working response and weights d_i p_i (1 - p_i) on B at `fit.beta`
/// (which must cover `fit.subset` with an intercept).
WorkingResponse working_response(const CombinedSample& sample, const PropensityFit& fit,
                                 WorkingResponseKind kind = WorkingResponseKind::newton_consistent,
                                 const PositivityConfig& positivity = {});

/// Coefficients (intercept dropped) of Y on all covariates, fitted on A.
Eigen::VectorXd outcome_coefficients(const CombinedSample& sample, OutcomeFamily family,
                                     const SolverConfig& config = {});

/// Adaptive factors 1/|alpha_j|^gamma; +inf where |alpha_j| < 1e-10.
Eigen::VectorXd adaptive_penalty_factors(const Eigen::VectorXd& alpha, double gamma);

/// CV over B of the penalized working-response problem for given
/// per-covariate factors (length p), built from the full Newton fit.
CvCurve cv_lambda(const CombinedSample& sample, const Eigen::VectorXd& factors,
                  const PenaltyConfig& penalty, PenaltyKind kind = PenaltyKind::lasso);

/// Outcome-adaptive LASSO: Newton fit, working response, factors from the
/// outcome regression on A, one penalized WLS at the CV-selected lambda.
PropensityFit fit_oalasso(const CombinedSample& sample, const PenaltyConfig& penalty);

/// As fit_oalasso with every factor equal to 1.
PropensityFit fit_lasso(const CombinedSample& sample, const PenaltyConfig& penalty);

/// Penalized fit for arbitrary per-covariate factors (length p).
PropensityFit fit_penalized(const CombinedSample& sample, const Eigen::VectorXd& factors,
                            const PenaltyConfig& penalty, PropensityMethod method);

struct ScadUnionResult {
  /// Unpenalized refit on the union.
  PropensityFit fit;
  std::vector<std::size_t> propensity_set;
  std::vector<std::size_t> outcome_set;
  std::vector<std::size_t> union_set;
};

/// Two-step SCAD selection: SCAD on the propensity working response (C_p)
/// and on the outcome regression over A (C_m), then a Newton refit on the union.
ScadUnionResult fit_scad_union(const CombinedSample& sample, const PenaltyConfig& penalty,
                               OutcomeFamily family);

/// Pseudo-likelihood model of membership on the single regressor m-hat.
/// Throws DegenerateModelError when m-hat is constant.
PropensityFit fit_collaborative(const CombinedSample& sample, const Eigen::VectorXd& mhat_a,
                                const Eigen::VectorXd& mhat_b, const NewtonConfig& config = {});

}  // namespace npmean
