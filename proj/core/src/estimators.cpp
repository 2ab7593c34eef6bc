#include "npmean/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <Eigen/Dense>

#include "npmean/errors.hpp"

namespace npmean {
namespace {

void check_fit(const CombinedSample& sample, const PropensityFit& pfit) {
  if (sample.n_a() == 0) throw InsufficientDataError("estimator needs a non-empty sample A");
  if (sample.n_b() == 0) throw InsufficientDataError("estimator needs a non-empty sample B");
  if (static_cast<std::size_t>(pfit.p_a.size()) != sample.n_a() ||
      static_cast<std::size_t>(pfit.p_b.size()) != sample.n_b()) {
    throw DimensionError("propensity fit does not match the sample");
  }
  if (pfit.design_a.rows() != pfit.p_a.size() || pfit.design_b.rows() != pfit.p_b.size() ||
      pfit.design_a.cols() != pfit.design_b.cols()) {
    throw DimensionError("propensity fit carries inconsistent variance designs");
  }
}

// sum_B d p (1 - p) x x'
Eigen::MatrixXd b_information(const CombinedSample& sample, const PropensityFit& pfit) {
  const Eigen::ArrayXd w = sample.db().array() * pfit.p_b.array() * (1.0 - pfit.p_b.array());
  return pfit.design_b.transpose() * w.matrix().asDiagonal() * pfit.design_b;
}

// Shared by both variances: b = [sum_A (1/p - 1) r_i x_i'] [B information]^{-1} and
// the A term  N_A^-2 sum_A (1 - p) (r_i/p - b'x_i)^2.
std::pair<Eigen::VectorXd, double> sandwich(const CombinedSample& sample, const PropensityFit& pfit,
                                            const Eigen::VectorXd& resid, double n_hat_a) {
  const Eigen::ArrayXd pa = pfit.p_a.array();
  const Eigen::VectorXd lhs = pfit.design_a.transpose() * ((1.0 / pa - 1.0) * resid.array()).matrix();
  const Eigen::VectorXd b = solve_spd(b_information(sample, pfit), lhs, true);
  const Eigen::ArrayXd e = resid.array() / pa - (pfit.design_a * b).array();
  const double a_term = ((1.0 - pa) * e.square()).sum() / (n_hat_a * n_hat_a);
  return {b, a_term};
}

}  // namespace

double poisson_design_variance(const Eigen::VectorXd& pi, const Eigen::VectorXd& d, const Eigen::VectorXd& a) {
  if (pi.size() != d.size() || a.size() != d.size()) throw DimensionError("design variance: length mismatch");
  return ((1.0 - pi.array()) * d.array().square() * a.array().square()).sum();
}

Eigen::MatrixXd poisson_design_covariance(const Eigen::VectorXd& pi, const Eigen::VectorXd& d,
                                        const Eigen::MatrixXd& a) {
  if (pi.size() != d.size() || a.rows() != d.size()) throw DimensionError("design variance: length mismatch");
  const Eigen::VectorXd f = ((1.0 - pi.array()) * d.array().square()).matrix();
  return a.transpose() * f.asDiagonal() * a;
}

DesignVariance DesignVariance::poisson() {
  return DesignVariance("poisson", [](const CombinedSample& sample, const Eigen::MatrixXd& values) {
    return poisson_design_covariance(sample.pib(), sample.db(), values);
  });
}

DesignVariance DesignVariance::custom(std::string name, Rule rule) {
  if (!rule) throw ConfigError("custom design-variance rule is empty");
  return DesignVariance(std::move(name), std::move(rule));
}

DesignVariance DesignVariance::from_tag(std::string_view tag) {
  if (tag == "poisson") return poisson();
  throw ConfigError("unknown design '" + std::string(tag) +
                    "': only poisson is built in; supply a custom design-variance rule");
}

Eigen::MatrixXd DesignVariance::matrix(const CombinedSample& sample, const Eigen::MatrixXd& values) const {
  if (static_cast<std::size_t>(values.rows()) != sample.n_b()) {
    throw DimensionError("design variance: one row per B unit required");
  }
  Eigen::MatrixXd v = rule_(sample, values);
  if (v.rows() != values.cols() || v.cols() != values.cols()) {
    throw DimensionError("design-variance rule returned a matrix of the wrong shape");
  }
  return v;
}

double DesignVariance::scalar(const CombinedSample& sample, const Eigen::VectorXd& values) const {
  const Eigen::MatrixXd m = values;
  return matrix(sample, m)(0, 0);
}

double ipw_mean(const CombinedSample& sample, const PropensityFit& pfit) {
  check_fit(sample, pfit);
  const Eigen::ArrayXd w = 1.0 / pfit.p_a.array();
  return (w * sample.ya().array()).sum() / w.sum();
}

VarianceResult ipw_variance(const CombinedSample& sample, const PropensityFit& pfit, double mu_hat,
                            const DesignVariance& design) {
  check_fit(sample, pfit);
  VarianceResult out;
  auto& c = out.components;
  c.n_hat_a = (1.0 / pfit.p_a.array()).sum();
  c.n_hat_b = sample.db().sum();
  const Eigen::VectorXd resid = (sample.ya().array() - mu_hat).matrix();
  std::tie(c.b, c.a_term) = sandwich(sample, pfit, resid, c.n_hat_a);
  const Eigen::MatrixXd px = pfit.p_b.asDiagonal() * pfit.design_b;
  c.d_hat = design.matrix(sample, px) / (c.n_hat_b * c.n_hat_b);
  c.design_term = c.b.dot(c.d_hat * c.b);
  out.variance = c.a_term + c.design_term;
  out.se = std::sqrt(std::max(out.variance, 0.0));
  return out;
}

double aipw_mean(const CombinedSample& sample, const PropensityFit& pfit, const Eigen::VectorXd& mhat_a,
                 const Eigen::VectorXd& mhat_b) {
  check_fit(sample, pfit);
  if (static_cast<std::size_t>(mhat_a.size()) != sample.n_a() ||
      static_cast<std::size_t>(mhat_b.size()) != sample.n_b()) {
    throw DimensionError("m-hat must cover every unit of A and B");
  }
  const Eigen::ArrayXd w = 1.0 / pfit.p_a.array();
  const double h = (w * (sample.ya() - mhat_a).array()).sum() / w.sum();
  return h + sample.db().dot(mhat_b) / sample.db().sum();
}

double aipw_mean(const CombinedSample& sample, const PropensityFit& pfit, const OutcomeFit& ofit) {
  return aipw_mean(sample, pfit, predict(ofit, sample.xa()), predict(ofit, sample.xb()));
}

VarianceResult aipw_variance(const CombinedSample& sample, const PropensityFit& pfit,
                             const Eigen::VectorXd& mhat_a, const Eigen::VectorXd& mhat_b,
                             const DesignVariance& design) {
  check_fit(sample, pfit);
  if (static_cast<std::size_t>(mhat_a.size()) != sample.n_a() ||
      static_cast<std::size_t>(mhat_b.size()) != sample.n_b()) {
    throw DimensionError("m-hat must cover every unit of A and B");
  }
  VarianceResult out;
  auto& c = out.components;
  const Eigen::ArrayXd w = 1.0 / pfit.p_a.array();
  c.n_hat_a = w.sum();
  c.n_hat_b = sample.db().sum();
  const Eigen::VectorXd r = sample.ya() - mhat_a;
  const double h = (w * r.array()).sum() / c.n_hat_a;
  c.h_n = h;
  const Eigen::VectorXd resid = (r.array() - h).matrix();
  std::tie(c.b, c.a_term) = sandwich(sample, pfit, resid, c.n_hat_a);
  const double mbar = sample.db().dot(mhat_b) / c.n_hat_b;
  Eigen::VectorXd t = (pfit.p_b.array() * (pfit.design_b * c.b).array() + mhat_b.array() - mbar).matrix();
  c.w_hat = design.scalar(sample, t) / (c.n_hat_b * c.n_hat_b);
  c.design_term = *c.w_hat;
  c.t_vals = std::move(t);
  out.variance = c.a_term + c.design_term;
  out.se = std::sqrt(std::max(out.variance, 0.0));
  return out;
}

std::pair<double, double> wald_ci(double mu_hat, double se) {
  return {mu_hat - 1.96 * se, mu_hat + 1.96 * se};
}

namespace {

nlohmann::json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json mat(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

}  // namespace

nlohmann::json to_json(const EstimateReport& r) {
  nlohmann::json j;
  j["estimator"] = r.estimator;
  j["mu_hat"] = r.mu_hat;
  j["se"] = r.se;
  j["ci"] = {r.ci_lo, r.ci_hi};
  j["method"] = {{"propensity", r.propensity_method},
                 {"outcome_model", r.outcome_model},
                 {"lambda", r.lambda},
                 {"active_set", r.active_set},
                 {"variance_design", r.variance_design},
                 {"design_variance", r.design_variance}};
  const auto& c = r.components;
  nlohmann::json comp;
  comp["n_hat_a"] = c.n_hat_a;
  comp["n_hat_b"] = c.n_hat_b;
  comp["a_term"] = c.a_term;
  comp["design_term"] = c.design_term;
  if (c.w_hat) {
    comp["b3"] = vec(c.b);
    comp["w_hat"] = *c.w_hat;
    comp["h_n"] = c.h_n.value_or(0.0);
    if (c.t_vals) comp["t"] = vec(*c.t_vals);
  } else {
    comp["b2"] = vec(c.b);
    comp["d_hat"] = mat(c.d_hat);
  }
  j["variance_components"] = comp;
  j["diagnostics"] = {{"iterations", r.iterations},
                      {"clamp_count", r.clamp_count},
                      {"converged", r.converged},
                      {"ridged", r.ridged}};
  if (r.cv) {
    j["diagnostics"]["cv"] = {{"lambdas", r.cv->lambdas},
                              {"mean_loss", r.cv->mean_loss},
                              {"selected", r.cv->selected}};
  }
  return j;
}

}  // namespace npmean
