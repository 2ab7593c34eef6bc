#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "npmean/solvers.hpp"

namespace npmean {

/// Cross-validation curve over a lambda grid.
struct CvCurve {
  std::vector<double> lambdas;
  /// Mean over folds of the held-out weighted squared error.
  std::vector<double> mean_loss;
  /// fold_loss[v][k]: held-out loss of fold v at lambdas[k].
  std::vector<std::vector<double>> fold_loss;
  std::size_t selected_index = 0;
  double selected = 0.0;
};

/// Fold id in [0, v) per unit. Units sharing a label always share a fold;
/// groups are shuffled with a seeded Philox stream and dealt round-robin.
/// Without labels every unit is its own group. Throws ConfigError when
/// there are fewer groups than folds.
std::vector<int> assign_folds(std::size_t n, const std::optional<std::vector<std::int64_t>>& labels,
                              int v, std::uint64_t seed);

/// V-fold CV of a penalized WLS problem along `grid` (descending). Each
/// fold refits on the remaining rows, warm-starting along the grid, and
/// scores sum_i w_i (y_i - x_i' beta)^2 on its held-out rows. The selected
/// lambda minimizes the mean loss (ties go to the larger lambda).
CvCurve cross_validate_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w, const Eigen::VectorXd& penalty_factors,
                            bool intercept, PenaltyKind kind, const std::vector<double>& grid,
                            const std::vector<int>& folds, int v, const SolverConfig& config);

/// Grid used when none is supplied: `size` log-spaced values from the
/// problem's lambda_max down to `min_ratio * lambda_max`.
std::vector<double> default_lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& w,
                                        const Eigen::VectorXd& penalty_factors, bool intercept,
                                        const SolverConfig& config, int size, double min_ratio);

}  // namespace npmean
