#include "npmean/report.hpp"

#include <limits>
#include <ostream>

namespace npmean {

void write_summary_csv(const std::vector<EstimateReport>& reports, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "estimator,mu_hat,se,ci_lo,ci_hi\n";
  for (const auto& r : reports) {
    out << r.estimator << ',' << r.mu_hat << ',' << r.se << ',' << r.ci_lo << ',' << r.ci_hi << '\n';
  }
  out.precision(old);
}

void write_cv_curve_csv(const CvCurve& curve, std::ostream& out) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  out << "lambda,mean_loss";
  for (std::size_t v = 0; v < curve.fold_loss.size(); ++v) out << ",fold_" << v + 1;
  out << ",selected\n";
  for (std::size_t k = 0; k < curve.lambdas.size(); ++k) {
    out << curve.lambdas[k] << ',' << curve.mean_loss[k];
    for (const auto& fold : curve.fold_loss) out << ',' << fold[k];
    out << ',' << (k == curve.selected_index ? 1 : 0) << '\n';
  }
  out.precision(old);
}

}  // namespace npmean
