#include "mmc/target.hpp"

namespace mmc {

Vec Box::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(lower.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = lower[i] + unit(rng) * (upper[i] - lower[i]);
  }
  return x;
}

bool Box::contains(const Vec& x) const {
  return (x.array() >= lower.array()).all() &&
         (x.array() <= upper.array()).all();
}

double TargetDistribution::log_density_and_gradient(const Vec& x,
                                                    Vec& grad) const {
  const double lp = log_density(x);
  if (lp != kLogZero) grad = gradient(x);
  return lp;
}

double CountingTarget::log_density(const Vec& x) const {
  count_.fetch_add(1, std::memory_order_relaxed);
  return inner_->log_density(x);
}

Vec CountingTarget::gradient(const Vec& x) const {
  count_.fetch_add(1, std::memory_order_relaxed);
  return inner_->gradient(x);
}

double CountingTarget::log_density_and_gradient(const Vec& x,
                                                Vec& grad) const {
  count_.fetch_add(1, std::memory_order_relaxed);
  return inner_->log_density_and_gradient(x, grad);
}

}  // namespace mmc
