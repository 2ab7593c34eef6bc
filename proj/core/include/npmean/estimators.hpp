#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "npmean/outcome.hpp"
#include "npmean/propensity.hpp"
#include "npmean/sample.hpp"

namespace npmean {

/// Poisson plug-in  sum_B (1 - pi_i) d_i^2 a_i^2.
double poisson_design_variance(const Eigen::VectorXd& pi, const Eigen::VectorXd& d, const Eigen::VectorXd& a);

/// Matrix form  sum_B (1 - pi_i) d_i^2 a_i a_i'  for rows a_i of `a`.
Eigen::MatrixXd poisson_design_covariance(const Eigen::VectorXd& pi, const Eigen::VectorXd& d,
                                          const Eigen::MatrixXd& a);

/// Design-based variance V_p of a weighted total sum_B d_i a_i over sample B.
class DesignVariance {
 public:
  /// Receives the sample and the n_b x k values a_i; returns the k x k variance.
  using Rule = std::function<Eigen::MatrixXd(const CombinedSample&, const Eigen::MatrixXd&)>;

  static DesignVariance poisson();
  static DesignVariance custom(std::string name, Rule rule);
  /// "poisson"; any other tag throws ConfigError.
  static DesignVariance from_tag(std::string_view tag);

  const std::string& name() const noexcept { return name_; }
  Eigen::MatrixXd matrix(const CombinedSample& sample, const Eigen::MatrixXd& values) const;
  double scalar(const CombinedSample& sample, const Eigen::VectorXd& values) const;

 private:
  DesignVariance(std::string name, Rule rule) : name_(std::move(name)), rule_(std::move(rule)) {}
  std::string name_;
  Rule rule_;
};

struct VarianceComponents {
  /// b2 (IPW) or b3 (AIPW), one entry per variance-design column.
  Eigen::VectorXd b;
  /// IPW: D-hat matrix.
  Eigen::MatrixXd d_hat;
  /// AIPW: W-hat, H_N and t_i on B.
  std::optional<double> w_hat;
  std::optional<double> h_n;
  std::optional<Eigen::VectorXd> t_vals;
  /// First (sample A) term and the design term of the variance.
  double a_term = 0.0;
  double design_term = 0.0;
  double n_hat_a = 0.0;
  double n_hat_b = 0.0;
};

struct VarianceResult {
  double variance = 0.0;
  double se = 0.0;
  VarianceComponents components;
};

/// sum_A Y_i/p_i over sum_A 1/p_i.
double ipw_mean(const CombinedSample& sample, const PropensityFit& pfit);

VarianceResult ipw_variance(const CombinedSample& sample, const PropensityFit& pfit, double mu_hat,
                            const DesignVariance& design = DesignVariance::poisson());

/// Residual term weighted by 1/p over A plus the design-weighted mean of m-hat over B.
double aipw_mean(const CombinedSample& sample, const PropensityFit& pfit, const Eigen::VectorXd& mhat_a,
                 const Eigen::VectorXd& mhat_b);
double aipw_mean(const CombinedSample& sample, const PropensityFit& pfit, const OutcomeFit& ofit);

VarianceResult aipw_variance(const CombinedSample& sample, const PropensityFit& pfit,
                             const Eigen::VectorXd& mhat_a, const Eigen::VectorXd& mhat_b,
                             const DesignVariance& design = DesignVariance::poisson());

/// (mu - 1.96 se, mu + 1.96 se).
std::pair<double, double> wald_ci(double mu_hat, double se);

struct EstimateReport {
  std::string estimator;
  double mu_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string propensity_method;
  /// Empty for IPW.
  std::string outcome_model;
  double lambda = 0.0;
  /// Covariate names of the propensity active set.
  std::vector<std::string> active_set;
  std::vector<std::size_t> active_index;
  /// Columns of the design entering b2/b3: "intercept+active" or "intercept+mhat".
  std::string variance_design;
  std::string design_variance;
  VarianceComponents components;
  int iterations = 0;
  int clamp_count = 0;
  bool converged = false;
  bool ridged = false;
  std::optional<CvCurve> cv;
};

nlohmann::json to_json(const EstimateReport& report);

}  // namespace npmean
