#pragma once

#include "mmc/numerics.hpp"
#include "mmc/target.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mmc {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); chains never share streams.
Rng make_stream(std::uint64_t seed, std::uint64_t stream);

/// Constant mass matrix. An empty matrix means identity, which takes a
/// dedicated code path.
class MassMatrix {
 public:
  MassMatrix() = default;
  explicit MassMatrix(const Mat& m);

  bool identity() const { return identity_; }
  const Mat& matrix() const { return m_; }
  Vec sample_momentum(const Vec& z) const;   // L z
  Vec velocity(const Vec& p) const;          // M^-1 p
  double kinetic(const Vec& p) const;        // 1/2 p^T M^-1 p

 private:
  bool identity_ = true;
  Mat m_;
  Mat chol_;
};

struct HmcParams {
  double step_size = 0.1;
  int steps = 15;
  /// Per-trajectory step size is uniform in [eps(1-j), eps(1+j)].
  double jitter = 0.1;
  MassMatrix mass;

  double trajectory_length() const { return step_size * steps; }
  void validate() const;
};

struct ChainState {
  Vec x;
  double log_density = kLogZero;
  Vec grad;
  Rng rng;
  long accepted = 0;
  long proposed = 0;

  double acceptance_rate() const {
    return proposed ? static_cast<double>(accepted) / proposed : 0.0;
  }
};

/// Throws std::domain_error when x has zero density.
ChainState make_chain(const TargetDistribution& target, const Vec& x, Rng rng);

struct LeapfrogResult {
  Vec x;
  Vec p;
  double log_density = kLogZero;
  Vec grad;
  bool ok = false;
};

/// n half-kick / drift / half-kick steps of size eps under U = -log pi.
LeapfrogResult leapfrog(const TargetDistribution& target, const Vec& x,
                        const Vec& p, double eps, int n,
                        const MassMatrix& mass = {});

/// Same, starting from a known log-density and gradient at x.
LeapfrogResult leapfrog_from(const TargetDistribution& target, const Vec& x,
                             double log_density, const Vec& grad, const Vec& p,
                             double eps, int n, const MassMatrix& mass);

/// min{1, exp[H(s) - H(s')]}; zero when either energy is not finite.
double acceptance_probability(double h_current, double h_proposed);

struct StepInfo {
  bool accepted = false;
  double accept_prob = 0.0;
  double step_size = 0.0;
  bool aborted = false;
};

/// One HMC transition: fresh momentum, leapfrog trajectory, Metropolis
/// correction. An aborted trajectory counts as a rejection.
StepInfo hmc_step(ChainState& state, const TargetDistribution& target,
                  const HmcParams& params);

/// Draws the per-trajectory step size.
double jittered_step(double eps, double jitter, Rng& rng);

struct TuneOptions {
  int window = 200;
  double tolerance = 0.05;
  /// Consecutive in-band windows required before stopping.
  int confirm_windows = 2;
  double gain = 2.0;
  double gain_decay = 0.6;
};

struct TuneResult {
  HmcParams params;
  double trailing_acceptance = 0.0;
  int steps_used = 0;
  bool in_band = false;
  std::vector<double> step_history;
  Vec final_position;
};

/// Stochastic-approximation tuning of the step size toward `goal`. Runs
/// windows at a fixed step size; a window whose mean acceptance probability
/// is off by more than the tolerance triggers a multiplicative update with
/// decaying gain. The trajectory length eps * N is held fixed. Returns the
/// last step size with in_band = false when the budget runs out.
TuneResult tune_step_size(const TargetDistribution& target,
                          const HmcParams& params, double goal,
                          int trial_steps, const Vec& start,
                          std::uint64_t seed, const TuneOptions& options = {});

}  // namespace mmc
