#include "npmean/pipeline.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <string>

#include "npmean/errors.hpp"

namespace npmean {
namespace {

struct TagName {
  EstimatorTag tag;
  std::string_view name;
};

constexpr std::array<TagName, 9> kTags{{
    {EstimatorTag::ipw_logistic, "ipw-logistic"},
    {EstimatorTag::ipw_lasso, "ipw-lasso"},
    {EstimatorTag::ipw_oalasso, "ipw-oalasso"},
    {EstimatorTag::aipw_logistic, "aipw-logistic"},
    {EstimatorTag::aipw_lasso, "aipw-lasso"},
    {EstimatorTag::aipw_oalasso, "aipw-oalasso"},
    {EstimatorTag::aipw_benkeser, "aipw-benkeser"},
    {EstimatorTag::aipw_scad_union, "aipw-scad-union"},
    {EstimatorTag::aipw_logistic_flex, "aipw-logistic-flex"},
}};

OutcomeFamily family_of(OutcomeKind kind) {
  return kind == OutcomeKind::logistic ? OutcomeFamily::logistic : OutcomeFamily::linear;
}

std::vector<std::string> names_of(const CombinedSample& sample, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (auto j : idx) out.push_back(sample.names()[j]);
  return out;
}

}  // namespace

std::string_view to_string(EstimatorTag tag) {
  for (const auto& t : kTags) {
    if (t.tag == tag) return t.name;
  }
  return "unknown";
}

EstimatorTag parse_estimator(std::string_view name) {
  for (const auto& t : kTags) {
    if (t.name == name) return t.tag;
  }
  throw ConfigError("unknown estimator '" + std::string(name) + "'");
}

std::vector<EstimatorTag> parse_estimators(std::string_view list) {
  std::vector<EstimatorTag> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    auto item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(parse_estimator(item));
    start = end + 1;
  }
  if (out.empty()) throw ConfigError("no estimators requested");
  return out;
}

bool is_aipw(EstimatorTag tag) {
  return tag != EstimatorTag::ipw_logistic && tag != EstimatorTag::ipw_lasso && tag != EstimatorTag::ipw_oalasso;
}

PropensityMethod propensity_method(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::ipw_lasso:
    case EstimatorTag::aipw_lasso:
      return PropensityMethod::lasso;
    case EstimatorTag::ipw_oalasso:
    case EstimatorTag::aipw_oalasso:
      return PropensityMethod::oalasso;
    case EstimatorTag::aipw_benkeser:
      return PropensityMethod::collaborative;
    case EstimatorTag::aipw_scad_union:
      return PropensityMethod::scad_union;
    default:
      return PropensityMethod::newton;
  }
}

EstimatorRunner::EstimatorRunner(const CombinedSample& sample, PipelineConfig config)
    : sample_(sample), config_(std::move(config)) {
  config_.penalty.family = family_of(config_.outcome);
  config_.penalty.check();
}

const OutcomeFit& EstimatorRunner::outcome(OutcomeKind kind) {
  auto& slot = outcomes_[static_cast<int>(kind)];
  if (!slot) {
    const auto all = all_covariates(sample_.p());
    switch (kind) {
      case OutcomeKind::linear:
      case OutcomeKind::logistic:
        slot = fit_outcome(sample_, family_of(kind), all, config_.penalty.solver);
        break;
      case OutcomeKind::flexible:
        slot = fit_outcome_flexible(sample_, config_.flexible);
        break;
      case OutcomeKind::zero:
        slot = OutcomeFit::zero(sample_.p());
        break;
    }
  }
  return *slot;
}

const PropensityFit& EstimatorRunner::propensity(PropensityMethod method) {
  switch (method) {
    case PropensityMethod::newton:
      if (!newton_) newton_ = fit_newton(sample_, all_covariates(sample_.p()), config_.penalty.newton);
      return *newton_;
    case PropensityMethod::lasso:
      if (!lasso_) lasso_ = fit_lasso(sample_, config_.penalty);
      return *lasso_;
    case PropensityMethod::oalasso:
      if (!oalasso_) oalasso_ = fit_oalasso(sample_, config_.penalty);
      return *oalasso_;
    case PropensityMethod::scad_union:
      if (!scad_) scad_ = fit_scad_union(sample_, config_.penalty, config_.penalty.family);
      return scad_->fit;
    case PropensityMethod::collaborative:
      if (!collaborative_) {
        const auto& ofit = outcome(config_.benkeser_outcome.value_or(config_.outcome));
        collaborative_ = fit_collaborative(sample_, predict(ofit, sample_.xa()), predict(ofit, sample_.xb()),
                                           config_.penalty.newton);
      }
      return *collaborative_;
  }
  throw ConfigError("unknown propensity method");
}

EstimateReport EstimatorRunner::run(EstimatorTag tag) {
  const auto method = propensity_method(tag);
  const PropensityFit& pfit = propensity(method);

  EstimateReport r;
  r.estimator = std::string(to_string(tag));
  r.propensity_method = std::string(to_string(method));
  r.lambda = pfit.lambda;
  r.active_index = method == PropensityMethod::collaborative ? std::vector<std::size_t>{} : pfit.active_set;
  r.active_set = names_of(sample_, r.active_index);
  r.variance_design = method == PropensityMethod::collaborative ? "intercept+mhat" : "intercept+active";
  r.design_variance = config_.design.name();
  r.iterations = pfit.iterations;
  r.clamp_count = pfit.clamp_count;
  r.converged = pfit.converged;
  r.ridged = pfit.ridged;
  r.cv = pfit.cv;

  VarianceResult var;
  if (!is_aipw(tag)) {
    r.mu_hat = ipw_mean(sample_, pfit);
    var = ipw_variance(sample_, pfit, r.mu_hat, config_.design);
  } else {
    OutcomeKind kind = config_.outcome;
    if (tag == EstimatorTag::aipw_logistic_flex) kind = OutcomeKind::flexible;
    if (tag == EstimatorTag::aipw_benkeser) kind = config_.benkeser_outcome.value_or(config_.outcome);
    Eigen::VectorXd mhat_a;
    Eigen::VectorXd mhat_b;
    if (tag == EstimatorTag::aipw_scad_union && kind != OutcomeKind::zero) {
      // Outcome refit on the selected union.
      const auto ofit = fit_outcome(sample_, config_.penalty.family, scad_->union_set, config_.penalty.solver);
      kind = ofit.kind;
      mhat_a = predict(ofit, sample_.xa());
      mhat_b = predict(ofit, sample_.xb());
    } else {
      const auto& ofit = outcome(kind);
      mhat_a = predict(ofit, sample_.xa());
      mhat_b = predict(ofit, sample_.xb());
    }
    r.outcome_model = std::string(to_string(kind));
    r.mu_hat = aipw_mean(sample_, pfit, mhat_a, mhat_b);
    var = aipw_variance(sample_, pfit, mhat_a, mhat_b, config_.design);
  }
  r.se = var.se;
  r.components = std::move(var.components);
  std::tie(r.ci_lo, r.ci_hi) = wald_ci(r.mu_hat, r.se);
  return r;
}

std::vector<EstimateReport> run_estimators(const CombinedSample& sample, const std::vector<EstimatorTag>& tags,
                                           const PipelineConfig& config) {
  EstimatorRunner runner(sample, config);
  std::vector<EstimateReport> out;
  out.reserve(tags.size());
  for (auto tag : tags) out.push_back(runner.run(tag));
  return out;
}

}  // namespace npmean
