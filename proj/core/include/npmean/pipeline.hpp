#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "npmean/estimators.hpp"
#include "npmean/outcome.hpp"
#include "npmean/propensity.hpp"
#include "npmean/sample.hpp"

namespace npmean {

/// Estimator configurations: propensity model plus IPW or AIPW.
enum class EstimatorTag {
  ipw_logistic,
  ipw_lasso,
  ipw_oalasso,
  aipw_logistic,
  aipw_lasso,
  aipw_oalasso,
  aipw_benkeser,
  aipw_scad_union,
  /// AIPW with a logistic propensity and the flexible outcome model.
  aipw_logistic_flex,
};

std::string_view to_string(EstimatorTag tag);
/// Throws ConfigError on an unknown name.
EstimatorTag parse_estimator(std::string_view name);
/// Comma-separated list of names.
std::vector<EstimatorTag> parse_estimators(std::string_view list);

bool is_aipw(EstimatorTag tag);
PropensityMethod propensity_method(EstimatorTag tag);

struct PipelineConfig {
  PenaltyConfig penalty;
  /// Outcome model behind AIPW and the collaborative score.
  OutcomeKind outcome = OutcomeKind::linear;
  /// Outcome model behind the collaborative score; defaults to `outcome`.
  std::optional<OutcomeKind> benkeser_outcome;
  FlexibleConfig flexible;
  DesignVariance design = DesignVariance::poisson();
};

/// Runs several estimators on one sample, sharing propensity and outcome
/// fits between estimators that use the same model.
class EstimatorRunner {
 public:
  EstimatorRunner(const CombinedSample& sample, PipelineConfig config);

  EstimateReport run(EstimatorTag tag);

  const PropensityFit& propensity(PropensityMethod method);
  const OutcomeFit& outcome(OutcomeKind kind);
  /// Available after an aipw-scad-union run.
  const std::optional<ScadUnionResult>& scad_union() const noexcept { return scad_; }

 private:
  const CombinedSample& sample_;
  PipelineConfig config_;
  std::optional<PropensityFit> newton_;
  std::optional<PropensityFit> lasso_;
  std::optional<PropensityFit> oalasso_;
  std::optional<ScadUnionResult> scad_;
  std::optional<PropensityFit> collaborative_;
  std::optional<OutcomeFit> outcomes_[4];
};

/// One report per tag, in order.
std::vector<EstimateReport> run_estimators(const CombinedSample& sample, const std::vector<EstimatorTag>& tags,
                                           const PipelineConfig& config);

}  // namespace npmean
