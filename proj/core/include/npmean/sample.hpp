#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace npmean {

/// One observed unit. The intercept is never stored in `x`.
///
/// A unit belongs to the non-probability sample A when `delta` is set and to
/// the probability sample B when `in_b` is set; both may hold at once.
/// Outcomes are required on A, design weights on B.
struct UnitRecord {
  Eigen::VectorXd x;
  bool delta = false;
  bool in_b = false;
  std::optional<double> y;
  std::optional<double> d;
  std::optional<double> pi;
  /// Cluster or stratum id of a B unit, used to keep groups together in CV folds.
  std::optional<std::int64_t> group;
};

/// Lower clamp applied to fitted propensities before any division.
struct PositivityConfig {
  double epsilon = 1e-6;
};

enum class SampleSide { a, b, both };

/// Non-probability sample A and probability sample B over a shared covariate schema.
///
/// Immutable once built. Construction only checks that every record has the
/// same dimension as `names`; semantic invariants are reported by `validate`.
/// Dense per-sample views (rows in stable record order) are cached at
/// construction for the estimators.
class CombinedSample {
 public:
  CombinedSample(std::vector<UnitRecord> records, std::vector<std::string> names);

  const std::vector<UnitRecord>& records() const noexcept { return records_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t p() const noexcept { return names_.size(); }
  std::size_t n_a() const noexcept { return a_index_.size(); }
  std::size_t n_b() const noexcept { return b_index_.size(); }

  /// Record indices of A (resp. B) members, ascending.
  const std::vector<std::size_t>& a_index() const noexcept { return a_index_; }
  const std::vector<std::size_t>& b_index() const noexcept { return b_index_; }

  /// n_a x p covariates of A.
  const Eigen::MatrixXd& xa() const noexcept { return xa_; }
  /// n_b x p covariates of B.
  const Eigen::MatrixXd& xb() const noexcept { return xb_; }
  /// Outcomes on A (NaN where missing; see validate).
  const Eigen::VectorXd& ya() const noexcept { return ya_; }
  /// Design weights on B.
  const Eigen::VectorXd& db() const noexcept { return db_; }
  /// Inclusion probabilities on B; 1/d where not stored.
  const Eigen::VectorXd& pib() const noexcept { return pib_; }
  /// Observed A-membership of B units (0 where overlap is unknown).
  const Eigen::VectorXd& delta_b() const noexcept { return delta_b_; }

  /// Group labels of B units when every B unit carries one.
  std::optional<std::vector<std::int64_t>> b_groups() const;

  /// Copy with every outcome transformed by `f` (used by equivariance checks).
  template <typename F>
  CombinedSample with_outcomes(F&& f) const {
    auto recs = records_;
    for (auto& r : recs) {
      if (r.y) r.y = f(*r.y);
    }
    return CombinedSample(std::move(recs), names_);
  }

  /// Copy with covariate `j` multiplied by `factor`.
  CombinedSample with_scaled_covariate(std::size_t j, double factor) const;

 private:
  std::vector<UnitRecord> records_;
  std::vector<std::string> names_;
  std::vector<std::size_t> a_index_;
  std::vector<std::size_t> b_index_;
  Eigen::MatrixXd xa_;
  Eigen::MatrixXd xb_;
  Eigen::VectorXd ya_;
  Eigen::VectorXd db_;
  Eigen::VectorXd pib_;
  Eigen::VectorXd delta_b_;
};

/// Lists every violated invariant; empty means valid. Never throws.
std::vector<std::string> validate(const CombinedSample& sample);

/// Throws ValidationError carrying the joined report when `validate` is non-empty.
void require_valid(const CombinedSample& sample);

/// Rows of A, B, or both (stable record order) restricted to `subset`, with
/// an optional leading column of ones.
Eigen::MatrixXd design_matrix(const CombinedSample& sample, std::span<const std::size_t> subset,
                              bool with_intercept, SampleSide side);

/// All covariate indices 0..p-1.
std::vector<std::size_t> all_covariates(std::size_t p);

// ---------------------------------------------------------------- CSV I/O

/// Explicit column mapping for CSV ingestion.
///
/// Key-value form (one `key=value` per line, `#` comments):
///   covariates=x1,x2,x3
///   delta=delta
///   in_b=in_b
///   outcome=y        (alias: y)
///   weight=d         (alias: d)
///   pi=pi            (optional)
///   group=cluster    (optional)
struct CsvSchema {
  std::vector<std::string> covariates;
  std::string delta = "delta";
  std::string in_b = "in_b";
  std::string outcome = "y";
  std::string weight = "d";
  std::string pi;
  std::string group;

  static CsvSchema parse(std::istream& in);
  static CsvSchema from_file(const std::string& path);
};

/// Reads one combined file holding both samples. Throws ParseError on a
/// malformed row and ValidationError when the parsed sample is invalid.
CombinedSample load_csv(const std::string& path, const CsvSchema& schema);
CombinedSample load_csv(std::istream& in, const CsvSchema& schema);

/// Reads A and B from separate files. A rows get delta=1 (in_b from its
/// column when present, else 0); B rows get in_b=1 (delta from its column
/// when present, else 0).
CombinedSample load_csv_pair(const std::string& path_a, const std::string& path_b,
                             const CsvSchema& schema);
CombinedSample load_csv_pair(std::istream& in_a, std::istream& in_b, const CsvSchema& schema);

/// Writes the combined layout read by `load_csv`, numbers at full precision.
void write_csv(const CombinedSample& sample, std::ostream& out, const CsvSchema& schema);
void write_csv(const CombinedSample& sample, const std::string& path, const CsvSchema& schema);

}  // namespace npmean
