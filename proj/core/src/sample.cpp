#include "npmean/sample.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "npmean/errors.hpp"

namespace npmean {

CombinedSample::CombinedSample(std::vector<UnitRecord> records, std::vector<std::string> names)
    : records_(std::move(records)), names_(std::move(names)) {
  const auto p = static_cast<Eigen::Index>(names_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].x.size() != p) {
      std::ostringstream msg;
      msg << "record " << i << " has " << records_[i].x.size() << " covariates, expected " << p;
      throw DimensionError(msg.str());
    }
    if (records_[i].delta) a_index_.push_back(i);
    if (records_[i].in_b) b_index_.push_back(i);
  }

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  xa_.resize(static_cast<Eigen::Index>(a_index_.size()), p);
  ya_.resize(static_cast<Eigen::Index>(a_index_.size()));
  for (std::size_t k = 0; k < a_index_.size(); ++k) {
    const auto& r = records_[a_index_[k]];
    const auto row = static_cast<Eigen::Index>(k);
    xa_.row(row) = r.x.transpose();
    ya_(row) = r.y.value_or(nan);
  }

  const auto nb = static_cast<Eigen::Index>(b_index_.size());
  xb_.resize(nb, p);
  db_.resize(nb);
  pib_.resize(nb);
  delta_b_.resize(nb);
  for (std::size_t k = 0; k < b_index_.size(); ++k) {
    const auto& r = records_[b_index_[k]];
    const auto row = static_cast<Eigen::Index>(k);
    xb_.row(row) = r.x.transpose();
    db_(row) = r.d.value_or(nan);
    pib_(row) = r.pi ? *r.pi : 1.0 / db_(row);
    delta_b_(row) = r.delta ? 1.0 : 0.0;
  }
}

std::optional<std::vector<std::int64_t>> CombinedSample::b_groups() const {
  std::vector<std::int64_t> out;
  out.reserve(b_index_.size());
  for (auto i : b_index_) {
    if (!records_[i].group) return std::nullopt;
    out.push_back(*records_[i].group);
  }
  return out;
}

CombinedSample CombinedSample::with_scaled_covariate(std::size_t j, double factor) const {
  auto recs = records_;
  for (auto& r : recs) r.x(static_cast<Eigen::Index>(j)) *= factor;
  return CombinedSample(std::move(recs), names_);
}

std::vector<std::string> validate(const CombinedSample& sample) {
  std::vector<std::string> report;
  const auto& recs = sample.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    const std::string where = "record " + std::to_string(i) + ": ";
    if (!r.delta && !r.in_b) report.push_back(where + "belongs to neither sample");
    if (r.delta && !r.y) report.push_back(where + "missing outcome");
    if (r.y && !std::isfinite(*r.y)) report.push_back(where + "non-finite outcome");
    if (r.in_b && !r.d) report.push_back(where + "missing design weight");
    if (r.d && !(std::isfinite(*r.d) && *r.d >= 1.0)) {
      report.push_back(where + "design weight must be finite and >= 1");
    }
    if (r.pi) {
      if (!(*r.pi > 0.0 && *r.pi <= 1.0)) {
        report.push_back(where + "inclusion probability outside (0,1]");
      } else if (r.d && std::abs(*r.pi * *r.d - 1.0) >= 1e-12) {
        report.push_back(where + "inclusion probability inconsistent with design weight");
      }
    }
    if (!r.x.allFinite()) report.push_back(where + "non-finite covariate");
  }
  if (sample.n_a() == 0) report.push_back("sample A is empty");
  if (sample.n_b() == 0) report.push_back("sample B is empty");
  std::set<std::string> seen;
  for (const auto& name : sample.names()) {
    if (!seen.insert(name).second) report.push_back("duplicate covariate label '" + name + "'");
  }
  return report;
}

void require_valid(const CombinedSample& sample) {
  const auto report = validate(sample);
  if (report.empty()) return;
  std::string msg = "invalid sample:";
  for (const auto& line : report) msg += "\n  " + line;
  throw ValidationError(msg);
}

Eigen::MatrixXd design_matrix(const CombinedSample& sample, std::span<const std::size_t> subset,
                              bool with_intercept, SampleSide side) {
  if (subset.empty() && !with_intercept) {
    throw DimensionError("design matrix needs at least one column");
  }
  for (auto j : subset) {
    if (j >= sample.p()) {
      throw DimensionError("covariate index " + std::to_string(j) + " out of range");
    }
  }
  std::vector<std::size_t> rows;
  switch (side) {
    case SampleSide::a:
      rows = sample.a_index();
      break;
    case SampleSide::b:
      rows = sample.b_index();
      break;
    case SampleSide::both:
      for (std::size_t i = 0; i < sample.records().size(); ++i) {
        const auto& r = sample.records()[i];
        if (r.delta || r.in_b) rows.push_back(i);
      }
      break;
  }
  const Eigen::Index offset = with_intercept ? 1 : 0;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      offset + static_cast<Eigen::Index>(subset.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& x = sample.records()[rows[k]].x;
    const auto row = static_cast<Eigen::Index>(k);
    if (with_intercept) out(row, 0) = 1.0;
    for (std::size_t c = 0; c < subset.size(); ++c) {
      out(row, offset + static_cast<Eigen::Index>(c)) = x(static_cast<Eigen::Index>(subset[c]));
    }
  }
  return out;
}

std::vector<std::size_t> all_covariates(std::size_t p) {
  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace npmean
