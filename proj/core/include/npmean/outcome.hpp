#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "npmean/sample.hpp"
#include "npmean/solvers.hpp"

namespace npmean {

enum class OutcomeFamily { linear, logistic };

enum class OutcomeKind { linear, logistic, flexible, zero };

std::string_view to_string(OutcomeKind kind);

/// One column of an outcome design, defined on the raw covariates.
struct BasisTerm {
  enum class Type { main, product, square, hinge };
  Type type = Type::main;
  std::size_t j = 0;
  std::size_t k = 0;     // second factor of a product
  double knot = 0.0;     // hinge: max(0, x_j - knot)
  /// Centers subtracted from x_j and x_k in products and squares.
  double center_j = 0.0;
  double center_k = 0.0;

  friend bool operator==(const BasisTerm&, const BasisTerm&) = default;
};

/// A fitted regression of Y on covariates, trained on sample A only.
struct OutcomeFit {
  OutcomeKind kind = OutcomeKind::linear;
  /// Covariate dimension the fit expects at prediction time.
  std::size_t p = 0;
  std::vector<BasisTerm> basis;
  /// Intercept first, then one coefficient per basis term.
  Eigen::VectorXd coef;
  double lambda = 0.0;
  bool ridged = false;
  int iterations = 0;

  /// Distinct covariates entering at least one term with a nonzero coefficient.
  std::vector<std::size_t> covariates_used() const;

  /// m(x) = 0 everywhere.
  static OutcomeFit zero(std::size_t p);
};

struct FlexibleConfig {
  int v_folds = 5;
  int grid_size = 50;
  double lambda_min_ratio = 1e-4;
  std::uint64_t seed = 0;
  SolverConfig solver;
};

/// Main-terms OLS (linear) or IRLS logistic regression on A over `subset`.
/// A rank-deficient design falls back to a ridge solve and sets `ridged`.
OutcomeFit fit_outcome(const CombinedSample& sample, OutcomeFamily family,
                       std::span<const std::size_t> subset, const SolverConfig& config = {});

/// Basis-expansion LASSO: main effects, pairwise products and squares of
/// covariates centered at their A means, and hinges at the empirical
/// quartiles of each covariate on A, with lambda
/// chosen by V-fold CV on A. Terms that are constant on A, or duplicate a
/// main effect, are dropped.
OutcomeFit fit_outcome_flexible(const CombinedSample& sample, const FlexibleConfig& config = {});

/// Basis descriptor built from the rows of `x` (n x p).
std::vector<BasisTerm> expand_basis(const Eigen::MatrixXd& x);

/// Evaluates `basis` on rows of `x`; no intercept column.
Eigen::MatrixXd basis_matrix(std::span<const BasisTerm> basis, const Eigen::MatrixXd& x);

/// m-hat on rows of `x` (n x p). Logistic fits return probabilities.
Eigen::VectorXd predict(const OutcomeFit& fit, const Eigen::MatrixXd& x);

/// Type-7 sample quantile.
double quantile(std::vector<double> values, double prob);

}  // namespace npmean
