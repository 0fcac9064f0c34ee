#pragma once

#include "mmc/numerics.hpp"
#include "mmc/target.hpp"

#include <cstddef>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace mmc {

/// Raised when the signed reference sum is zero.
class ZeroDenominatorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// sum_d |est_d - ref_d| / sum_d ref_d. The denominator keeps its sign.
double rem(const Vec& estimate, const Vec& reference);
/// sum_ij |est_ij - ref_ij| / sum_ij ref_ij.
double recov(const Mat& estimate, const Mat& reference);

struct RelativeError {
  double value = 0.0;
  /// True when the reference sum was zero and value is the mean absolute
  /// error instead.
  bool fallback = false;
};

RelativeError rem_or_fallback(const Vec& estimate, const Vec& reference);
RelativeError recov_or_fallback(const Mat& estimate, const Mat& reference);

/// (n1 m1 + n2 m2) / (n1 + n2)
Vec pooled_mean(std::size_t n1, const Vec& mean1, std::size_t n2,
                const Vec& mean2);

/// Running mean and covariance (Welford updates, Chan merges). The
/// covariance uses the unbiased N - 1 normalization.
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  explicit MomentAccumulator(Eigen::Index dim);

  void add(const Vec& x);
  void merge(const MomentAccumulator& other);

  std::size_t count() const { return n_; }
  Eigen::Index dimension() const { return mean_.size(); }
  const Vec& mean() const { return mean_; }
  /// Zero matrix for fewer than two samples.
  Mat covariance() const;

 private:
  std::size_t n_ = 0;
  Vec mean_;
  Mat m2_;
};

struct DiagnosticsRecord {
  double t_seconds = 0.0;
  double rem = 0.0;
  double recov = 0.0;
  double rem_window = 0.0;
  long n_bfgs = 0;
  std::size_t modes_found = 0;
};

class DiagnosticsSeries {
 public:
  /// Throws std::invalid_argument on a non-finite entry or a time that does
  /// not increase.
  void add(const DiagnosticsRecord& r);
  const std::vector<DiagnosticsRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  const DiagnosticsRecord& back() const { return records_.back(); }

  /// Header t_seconds,rem,recov,rem_window1000,n_bfgs,modes_found.
  void write_csv(std::ostream& out) const;

 private:
  std::vector<DiagnosticsRecord> records_;
};

/// Moment accumulators keyed by the registry size at draw time.
using TaggedMoments = std::map<std::size_t, MomentAccumulator>;

struct BiasReport {
  std::size_t full_tag = 0;
  std::size_t n_pooled = 0;
  std::size_t n_full = 0;
  std::size_t n_partial = 0;
  RelativeError pooled_rem, pooled_recov;
  bool full_available = false;
  RelativeError full_rem, full_recov;
  bool partial_available = false;
  RelativeError partial_rem, partial_recov;
  /// pooled REM minus full-registry REM; 0 when no partial samples exist.
  double bias_rem = 0.0;
};

/// Splits samples into those drawn with the full registry (tag == full_tag)
/// and the rest, and reports REM/RECOV for the pool and both parts.
BiasReport bias_report(const TaggedMoments& moments, std::size_t full_tag,
                       const Moments& reference);

struct TaggedSample {
  Vec x;
  std::size_t tag = 0;
};

BiasReport bias_report(const std::vector<TaggedSample>& samples,
                       std::size_t full_tag, const Moments& reference);

void write_bias_report(std::ostream& out, const BiasReport& r);

}  // namespace mmc
