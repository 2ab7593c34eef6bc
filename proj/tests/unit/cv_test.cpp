#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "npmean/cv.hpp"
#include "npmean/errors.hpp"
#include "oracles.hpp"

namespace npmean {
namespace {

TEST(Folds, DeterministicAndBalanced) {
  const auto a = assign_folds(103, std::nullopt, 5, 42);
  EXPECT_EQ(a, assign_folds(103, std::nullopt, 5, 42));
  EXPECT_NE(a, assign_folds(103, std::nullopt, 5, 43));
  std::vector<int> counts(5, 0);
  for (int f : a) ++counts[static_cast<std::size_t>(f)];
  for (int c : counts) EXPECT_TRUE(c == 20 || c == 21);
}

TEST(Folds, GroupsStayTogether) {
  std::vector<std::int64_t> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(i % 12);
  const auto folds = assign_folds(labels.size(), labels, 4, 1);
  std::map<std::int64_t, int> fold_of;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = fold_of.emplace(labels[i], folds[i]);
    if (!inserted) EXPECT_EQ(it->second, folds[i]);
  }
  EXPECT_EQ(std::set<int>(folds.begin(), folds.end()).size(), 4u);
}

TEST(Folds, TooFewGroups) {
  const std::vector<std::int64_t> labels{1, 1, 2, 2};
  EXPECT_THROW(assign_folds(4, labels, 3, 0), ConfigError);
  EXPECT_THROW(assign_folds(2, std::nullopt, 3, 0), ConfigError);
}

TEST(CrossValidate, SingleGridValueSelected) {
  Rng rng(3);
  const auto prob = testing::random_lasso_problem(rng, 60, 4);
  const auto folds = assign_folds(60, std::nullopt, 5, 0);
  const auto curve = cross_validate_path(prob.x, prob.y, prob.w, prob.penalty_factors, true, PenaltyKind::lasso,
                                         {0.7}, folds, 5, {});
  EXPECT_EQ(curve.selected, 0.7);
  EXPECT_EQ(curve.selected_index, 0u);
  EXPECT_EQ(curve.fold_loss.size(), 5u);
}

TEST(CrossValidate, SelectsMinimumMeanLoss) {
  Rng rng(4);
  const auto prob = testing::random_lasso_problem(rng, 80, 5);
  const auto grid = default_lambda_grid(prob.x, prob.y, prob.w, prob.penalty_factors, true, {}, 20, 1e-3);
  const auto folds = assign_folds(80, std::nullopt, 5, 9);
  const auto curve =
      cross_validate_path(prob.x, prob.y, prob.w, prob.penalty_factors, true, PenaltyKind::lasso, grid, folds, 5, {});
  const auto best = std::min_element(curve.mean_loss.begin(), curve.mean_loss.end());
  EXPECT_EQ(curve.selected_index, static_cast<std::size_t>(best - curve.mean_loss.begin()));
  EXPECT_EQ(curve.selected, grid[curve.selected_index]);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double sum = 0.0;
    for (const auto& fold : curve.fold_loss) sum += fold[k];
    EXPECT_NEAR(curve.mean_loss[k], sum / 5.0, 1e-12 * (1 + sum));
  }
}

}  // namespace
}  // namespace npmean
