#pragma once

#include "mmc/numerics.hpp"

#include <atomic>
#include <cstdint>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace mmc {

/// Log-density of a zero-probability state. Proposals landing here are
/// always rejected.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct Moments {
  Vec mean;
  Mat covariance;
};

/// Axis-aligned box, used as search region and as chain start region.
struct Box {
  Vec lower;
  Vec upper;

  double diameter() const { return (upper - lower).norm(); }
  Vec sample(std::mt19937_64& rng) const;
  bool contains(const Vec& x) const;
};

/// pi(x) with U(x) = -log pi(x). Implementations are immutable after
/// construction and safe to share between chains.
class TargetDistribution {
 public:
  virtual ~TargetDistribution() = default;

  virtual std::size_t dimension() const = 0;
  virtual double log_density(const Vec& x) const = 0;
  /// Gradient of log_density. Throws std::domain_error at a log-zero point.
  virtual Vec gradient(const Vec& x) const = 0;
  /// Both at once; returns kLogZero (and leaves grad unspecified) outside
  /// the support.
  virtual double log_density_and_gradient(const Vec& x, Vec& grad) const;

  virtual std::optional<Moments> reference_moments() const {
    return std::nullopt;
  }
  /// Region where modes are searched and chains start.
  virtual Box search_box() const = 0;
  virtual std::string describe() const = 0;
};

/// Forwards to another target and counts evaluations; the count drives the
/// deterministic work clock.
class CountingTarget final : public TargetDistribution {
 public:
  explicit CountingTarget(std::shared_ptr<const TargetDistribution> inner)
      : inner_(std::move(inner)) {}

  std::size_t dimension() const override { return inner_->dimension(); }
  double log_density(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  double log_density_and_gradient(const Vec& x, Vec& grad) const override;
  std::optional<Moments> reference_moments() const override {
    return inner_->reference_moments();
  }
  Box search_box() const override { return inner_->search_box(); }
  std::string describe() const override { return inner_->describe(); }

  std::uint64_t evaluations() const { return count_.load(); }
  const TargetDistribution& inner() const { return *inner_; }

 private:
  std::shared_ptr<const TargetDistribution> inner_;
  mutable std::atomic<std::uint64_t> count_{0};
};

// ---------------------------------------------------------------------------
// Gaussian mixtures

enum class WeightScheme { equal, proportional };

class GaussianMixture final : public TargetDistribution {
 public:
  GaussianMixture(std::vector<double> weights, std::vector<Vec> means,
                  std::vector<Mat> covariances);

  std::size_t dimension() const override { return dim_; }
  std::size_t components() const { return weights_.size(); }
  double log_density(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  double log_density_and_gradient(const Vec& x, Vec& grad) const override;
  std::optional<Moments> reference_moments() const override {
    return moments_;
  }
  Box search_box() const override { return box_; }
  std::string describe() const override;

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vec>& means() const { return means_; }
  const std::vector<Mat>& covariances() const { return covs_; }
  /// Log-density of a single weighted component, log(w_k N(x|mu_k, S_k)).
  double component_log_density(std::size_t k, const Vec& x) const;

  void set_search_box(Box box) { box_ = std::move(box); }
  /// One exact draw from the mixture.
  Vec sample(std::mt19937_64& rng) const;

  void write(std::ostream& out) const;
  static GaussianMixture read(std::istream& in);

 private:
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<Vec> means_;
  std::vector<Mat> covs_;
  std::vector<Mat> chol_;
  std::vector<double> log_norm_;  // log w_k - D/2 log 2pi - 1/2 log|S_k|
  Moments moments_;
  Box box_;
};

std::vector<double> mixture_weights(std::size_t k, WeightScheme scheme);

/// K unit-covariance components with means uniform in a hypercube, rescaled
/// so every pair of means is at least 8 apart. Means lie in the positive
/// orthant. The search box is the hypercube inflated by 20%.
GaussianMixture gmm_generate_benchmark(std::size_t dim, std::size_t k,
                                       WeightScheme scheme,
                                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Sensor network localization

struct SensorPair {
  std::size_t i = 0;
  std::size_t j = 0;
  bool observed = false;
  double distance = 0.0;
};

struct PinnedSensor {
  std::size_t index = 0;
  Eigen::Vector2d position;
};

/// Posterior over sensor positions under a uniform prior on a square
/// support. Coordinates of pinned sensors are fixed and not part of x.
class SensorNetwork final : public TargetDistribution {
 public:
  SensorNetwork(std::size_t sensors, double range, double sigma,
                std::vector<SensorPair> pairs,
                std::vector<PinnedSensor> pinned = {}, double support_lo = -0.5,
                double support_hi = 1.5);

  std::size_t dimension() const override { return 2 * free_.size(); }
  double log_density(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  double log_density_and_gradient(const Vec& x, Vec& grad) const override;
  Box search_box() const override;
  std::string describe() const override;

  std::size_t sensors() const { return sensors_; }
  double range() const { return range_; }
  double sigma() const { return sigma_; }
  const std::vector<SensorPair>& pairs() const { return pairs_; }
  const std::vector<PinnedSensor>& pinned() const { return pinned_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }

  /// All 2-D positions (pinned ones filled in) for a free-coordinate vector.
  std::vector<Eigen::Vector2d> positions(const Vec& x) const;
  /// Free-coordinate vector for a full set of positions.
  Vec coordinates(const std::vector<Eigen::Vector2d>& positions) const;

  void set_truth(std::vector<Eigen::Vector2d> truth) {
    truth_ = std::move(truth);
  }
  const std::vector<Eigen::Vector2d>& truth() const { return truth_; }

  void write(std::ostream& out) const;
  static SensorNetwork read(std::istream& in);

 private:
  double evaluate(const Vec& x, Vec* grad) const;

  std::size_t sensors_;
  double range_;
  double sigma_;
  std::vector<SensorPair> pairs_;
  std::vector<PinnedSensor> pinned_;
  double lo_;
  double hi_;
  std::vector<std::size_t> free_;       // free sensor ids in x order
  std::vector<long> slot_;              // sensor id -> slot in x, -1 if pinned
  std::vector<Eigen::Vector2d> truth_;  // optional ground truth
};

/// Ground truth uniform in the unit square; pair (i,j) observed with
/// probability P_o at the true positions; measured distance is the true one
/// plus N(0, sigma^2) noise (reflected at zero).
SensorNetwork sensor_generate_instance(std::size_t sensors, double range,
                                       double sigma, std::uint64_t seed);

}  // namespace mmc
