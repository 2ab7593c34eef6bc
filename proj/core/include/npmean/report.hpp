#pragma once

#include <iosfwd>
#include <vector>

#include "npmean/cv.hpp"
#include "npmean/estimators.hpp"

namespace npmean {

/// `estimator,mu_hat,se,ci_lo,ci_hi`, one row per report.
void write_summary_csv(const std::vector<EstimateReport>& reports, std::ostream& out);

/// `lambda,mean_loss,fold_1..fold_V,selected`; `selected` is 1 on the chosen row.
void write_cv_curve_csv(const CvCurve& curve, std::ostream& out);

}  // namespace npmean
