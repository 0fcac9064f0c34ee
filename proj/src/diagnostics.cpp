#include "mmc/diagnostics.hpp"

#include "mmc/keyvalue.hpp"

#include <cmath>

namespace mmc {

double rem(const Vec& estimate, const Vec& reference) {
  if (estimate.size() != reference.size()) {
    throw std::invalid_argument("rem: dimension mismatch");
  }
  const double denom = reference.sum();
  if (denom == 0.0) {
    throw ZeroDenominatorError(
        "rem: reference mean sums to zero; use rem_or_fallback");
  }
  return (estimate - reference).cwiseAbs().sum() / denom;
}

double recov(const Mat& estimate, const Mat& reference) {
  if (estimate.rows() != reference.rows() || estimate.cols() != reference.cols()) {
    throw std::invalid_argument("recov: dimension mismatch");
  }
  const double denom = reference.sum();
  if (denom == 0.0) {
    throw ZeroDenominatorError(
        "recov: reference covariance sums to zero; use recov_or_fallback");
  }
  return (estimate - reference).cwiseAbs().sum() / denom;
}

RelativeError rem_or_fallback(const Vec& estimate, const Vec& reference) {
  try {
    return {rem(estimate, reference), false};
  } catch (const ZeroDenominatorError&) {
    return {(estimate - reference).cwiseAbs().mean(), true};
  }
}

RelativeError recov_or_fallback(const Mat& estimate, const Mat& reference) {
  try {
    return {recov(estimate, reference), false};
  } catch (const ZeroDenominatorError&) {
    return {(estimate - reference).cwiseAbs().mean(), true};
  }
}

Vec pooled_mean(std::size_t n1, const Vec& mean1, std::size_t n2,
                const Vec& mean2) {
  if (n1 + n2 == 0) throw std::invalid_argument("pooled_mean: both partitions empty");
  if (n1 == 0) return mean2;
  if (n2 == 0) return mean1;
  return (static_cast<double>(n1) * mean1 + static_cast<double>(n2) * mean2) /
         static_cast<double>(n1 + n2);
}

MomentAccumulator::MomentAccumulator(Eigen::Index dim)
    : mean_(Vec::Zero(dim)), m2_(Mat::Zero(dim, dim)) {}

void MomentAccumulator::add(const Vec& x) {
  if (mean_.size() == 0 && n_ == 0) *this = MomentAccumulator(x.size());
  ++n_;
  const Vec delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_.noalias() += delta * (x - mean_).transpose();
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  const Vec delta = other.mean_ - mean_;
  mean_ = pooled_mean(n_, mean_, other.n_, other.mean_);
  m2_ += other.m2_ + (na * nb / n) * (delta * delta.transpose());
  n_ += other.n_;
}

Mat MomentAccumulator::covariance() const {
  if (n_ < 2) return Mat::Zero(mean_.size(), mean_.size());
  const Mat c = m2_ / static_cast<double>(n_ - 1);
  return 0.5 * (c + c.transpose());
}

void DiagnosticsSeries::add(const DiagnosticsRecord& r) {
  if (!std::isfinite(r.t_seconds) || !std::isfinite(r.rem) ||
      !std::isfinite(r.recov) || !std::isfinite(r.rem_window)) {
    throw std::invalid_argument("DiagnosticsSeries: non-finite entry");
  }
  if (!records_.empty() && !(r.t_seconds > records_.back().t_seconds)) {
    throw std::invalid_argument("DiagnosticsSeries: time must increase");
  }
  records_.push_back(r);
}

void DiagnosticsSeries::write_csv(std::ostream& out) const {
  out << "t_seconds,rem,recov,rem_window1000,n_bfgs,modes_found\n";
  for (const auto& r : records_) {
    out << format_double(r.t_seconds) << ',' << format_double(r.rem) << ','
        << format_double(r.recov) << ',' << format_double(r.rem_window) << ','
        << r.n_bfgs << ',' << r.modes_found << '\n';
  }
}

BiasReport bias_report(const TaggedMoments& moments, std::size_t full_tag,
                       const Moments& reference) {
  MomentAccumulator pooled, full, partial;
  for (const auto& [tag, acc] : moments) {
    pooled.merge(acc);
    (tag >= full_tag ? full : partial).merge(acc);
  }
  if (pooled.count() == 0) throw std::invalid_argument("bias_report: no samples");
  BiasReport r;
  r.full_tag = full_tag;
  r.n_pooled = pooled.count();
  r.n_full = full.count();
  r.n_partial = partial.count();
  r.pooled_rem = rem_or_fallback(pooled.mean(), reference.mean);
  r.pooled_recov = recov_or_fallback(pooled.covariance(), reference.covariance);
  r.full_available = full.count() > 0;
  if (r.full_available) {
    r.full_rem = rem_or_fallback(full.mean(), reference.mean);
    r.full_recov = recov_or_fallback(full.covariance(), reference.covariance);
  }
  r.partial_available = partial.count() > 0;
  if (r.partial_available) {
    r.partial_rem = rem_or_fallback(partial.mean(), reference.mean);
    r.partial_recov = recov_or_fallback(partial.covariance(), reference.covariance);
    if (r.full_available) r.bias_rem = r.pooled_rem.value - r.full_rem.value;
  }
  return r;
}

BiasReport bias_report(const std::vector<TaggedSample>& samples,
                       std::size_t full_tag, const Moments& reference) {
  TaggedMoments moments;
  for (const auto& s : samples) moments[s.tag].add(s.x);
  return bias_report(moments, full_tag, reference);
}

void write_bias_report(std::ostream& out, const BiasReport& r) {
  auto line = [&out](const char* name, bool available, const RelativeError& rem_v,
                     const RelativeError& recov_v, std::size_t n) {
    out << name << "_samples = " << n << '\n';
    if (!available) {
      out << name << "_rem = unavailable\n" << name << "_recov = unavailable\n";
      return;
    }
    out << name << "_rem = " << format_double(rem_v.value)
        << (rem_v.fallback ? "  # mean absolute error" : "") << '\n';
    out << name << "_recov = " << format_double(recov_v.value)
        << (recov_v.fallback ? "  # mean absolute error" : "") << '\n';
  };
  out << "full_registry_size = " << r.full_tag << '\n';
  line("pooled", true, r.pooled_rem, r.pooled_recov, r.n_pooled);
  line("full", r.full_available, r.full_rem, r.full_recov, r.n_full);
  line("partial", r.partial_available, r.partial_rem, r.partial_recov, r.n_partial);
  out << "bias_rem = " << format_double(r.bias_rem) << '\n';
}

}  // namespace mmc
