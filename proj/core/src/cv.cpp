#include "npmean/cv.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "npmean/errors.hpp"
#include "npmean/rng.hpp"

namespace npmean {

std::vector<int> assign_folds(std::size_t n, const std::optional<std::vector<std::int64_t>>& labels,
                              int v, std::uint64_t seed) {
  if (v < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::vector<std::size_t> group_of(n);
  std::size_t groups = 0;
  if (labels) {
    if (labels->size() != n) throw DimensionError("one fold label per unit required");
    std::map<std::int64_t, std::size_t> ids;  // sorted, so group order is label order
    for (auto label : *labels) ids.emplace(label, 0);
    for (auto& [label, id] : ids) id = groups++;
    for (std::size_t i = 0; i < n; ++i) group_of[i] = ids.at((*labels)[i]);
  } else {
    std::iota(group_of.begin(), group_of.end(), std::size_t{0});
    groups = n;
  }
  if (groups < static_cast<std::size_t>(v)) {
    throw ConfigError("cannot form " + std::to_string(v) + " folds from " +
                      std::to_string(groups) + " groups");
  }
  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, 0x5f0d);
  for (std::size_t i = groups; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<int> fold_of_group(groups);
  for (std::size_t k = 0; k < groups; ++k) fold_of_group[order[k]] = static_cast<int>(k % static_cast<std::size_t>(v));
  std::vector<int> folds(n);
  for (std::size_t i = 0; i < n; ++i) folds[i] = fold_of_group[group_of[i]];
  return folds;
}

std::vector<double> default_lambda_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& w,
                                        const Eigen::VectorXd& penalty_factors, bool intercept,
                                        const SolverConfig& config, int size, double min_ratio) {
  const PenalizedWls sys(x, y, w, intercept, config.standardize);
  return log_lambda_grid(sys.lambda_max(penalty_factors), size, min_ratio);
}

CvCurve cross_validate_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w, const Eigen::VectorXd& penalty_factors,
                            bool intercept, PenaltyKind kind, const std::vector<double>& grid,
                            const std::vector<int>& folds, int v, const SolverConfig& config) {
  if (grid.empty()) throw ConfigError("empty lambda grid");
  if (folds.size() != static_cast<std::size_t>(x.rows())) {
    throw DimensionError("one fold id per row required");
  }
  CvCurve curve;
  curve.lambdas = grid;
  curve.fold_loss.assign(static_cast<std::size_t>(v), std::vector<double>(grid.size(), 0.0));

  for (int fold = 0; fold < v; ++fold) {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      (folds[i] == fold ? test : train).push_back(static_cast<Eigen::Index>(i));
    }
    if (train.empty() || test.empty()) throw ConfigError("a CV fold is empty");
    const Eigen::MatrixXd x_train = x(train, Eigen::all);
    const Eigen::VectorXd y_train = y(train);
    const Eigen::VectorXd w_train = w(train);
    const Eigen::MatrixXd x_test = x(test, Eigen::all);
    const Eigen::VectorXd y_test = y(test);
    const Eigen::VectorXd w_test = w(test);

    const PenalizedWls sys(x_train, y_train, w_train, intercept, config.standardize);
    const auto betas = sys.path(kind, penalty_factors, grid, config);
    auto& losses = curve.fold_loss[static_cast<std::size_t>(fold)];
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Eigen::VectorXd r = y_test - x_test * betas[k];
      losses[k] = (w_test.array() * r.array().square()).sum();
    }
  }

  curve.mean_loss.assign(grid.size(), 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (const auto& f : curve.fold_loss) curve.mean_loss[k] += f[k];
    curve.mean_loss[k] /= static_cast<double>(v);
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double lambda_k = grid[k];
    const bool larger = k == 0 || lambda_k > grid[best_k];
    if (curve.mean_loss[k] < best || (curve.mean_loss[k] == best && larger)) {
      best = curve.mean_loss[k];
      best_k = k;
    }
  }
  curve.selected_index = best_k;
  curve.selected = grid[best_k];
  return curve;
}

}  // namespace npmean
