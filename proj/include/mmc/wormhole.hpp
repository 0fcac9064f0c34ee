#pragma once

#include "mmc/hmc.hpp"
#include "mmc/numerics.hpp"
#include "mmc/target.hpp"

#include <vector>

namespace mmc {

struct WormholeParams {
  /// Influence factor F of the mollifier.
  double influence = 0.1;
  /// Contraction of the intermodal direction, 0 < eps_W <= 1.
  double epsilon_w = 1e-4;
  /// Per-iteration probability of routing the chain through a wormhole.
  double jump_prob = 0.68;
  /// Include the log-determinant of the metric in the energy.
  bool metric_logdet = true;
  double fixed_point_tol = 1e-8;
  int fixed_point_max_iter = 100;

  void validate() const;
};

/// Straight tube between two mode locations.
struct Wormhole {
  Vec start;
  Vec end;
  Vec direction;  // unit vector from start to end
  double length = 0.0;
  double epsilon_w = 1e-4;
  double influence = 0.1;

  static Wormhole connect(const Vec& start, const Vec& end, double epsilon_w,
                          double influence);
};

/// exp{-(|x - x1| + |x2 - x| - |x2 - x1|) / F}; 1 exactly on the segment.
double mollifier(const Wormhole& w, const Vec& x);
Vec mollifier_gradient(const Wormhole& w, const Vec& x);

/// G_W = I - (1 - eps_W) v_W v_W^T
Mat wormhole_metric(const Wormhole& w);

/// Location and covariance factor of a registered mode; the wormhole jump
/// maps neighbourhoods of one mode onto another through these frames.
struct ModeFrame {
  Vec location;
  Mat chol;  // lower Cholesky factor of the mode covariance
  double log_det_chol = 0.0;

  static ModeFrame make(const Vec& location, const Mat& covariance);
};

/// Complete graph of wormholes over the known modes. Immutable once built.
class WormholeNetwork {
 public:
  WormholeNetwork() = default;
  WormholeNetwork(std::vector<ModeFrame> modes, const WormholeParams& params);

  bool empty() const { return wormholes_.empty(); }
  const std::vector<Wormhole>& wormholes() const { return wormholes_; }
  const std::vector<ModeFrame>& modes() const { return modes_; }
  const WormholeParams& params() const { return params_; }

  struct Active {
    const Wormhole* wormhole = nullptr;
    double m = 0.0;
  };
  /// The wormhole with the largest mollifier value at x.
  Active active(const Vec& x) const;

  /// Mode with the smallest Mahalanobis distance to x.
  std::size_t nearest_mode(const Vec& x) const;

 private:
  std::vector<ModeFrame> modes_;
  std::vector<Wormhole> wormholes_;
  WormholeParams params_;
};

/// G(x) = (1 - m) I + m G_W for the active wormhole; identity when empty.
Mat metric(const WormholeNetwork& net, const Vec& x);

/// f(x, v) = m(x) <v, v_W> v_W for the active wormhole.
Vec vector_field(const WormholeNetwork& net, const Vec& x, const Vec& v);

struct GeneralizedLeapfrogResult {
  Vec x;
  Vec v;
  double log_density = kLogZero;
  Vec grad;
  bool ok = false;
  /// Fixed-point iterations of the implicit position update (max over steps).
  int iterations = 0;
  /// log |det d(x', v') / d(x, v)| accumulated over the steps.
  double log_jacobian = 0.0;
};

/// n steps of: explicit half-step on v; implicit position update
/// x' = x + eps (v + (f(x,v) + f(x',v)) / 2) solved by fixed-point iteration
/// from the explicit predictor; explicit half-step on v. With an empty
/// network this is exactly the plain leapfrog.
GeneralizedLeapfrogResult generalized_leapfrog(
    const WormholeNetwork& net, const TargetDistribution& target, const Vec& x,
    double log_density, const Vec& grad, const Vec& v, double eps, int n);

GeneralizedLeapfrogResult generalized_leapfrog_step(
    const WormholeNetwork& net, const TargetDistribution& target, const Vec& x,
    const Vec& v, double eps);

/// -log pi(x) + 1/2 v^T G v - 1/2 log det G (the last term only when
/// metric_logdet is on). This is the momentum-form energy expressed in
/// velocity coordinates.
double whmc_energy(const WormholeNetwork& net, double log_density,
                   const Vec& x, const Vec& v);

struct WhmcStepInfo {
  StepInfo trajectory;
  int fixed_point_iterations = 0;
  bool jump_attempted = false;
  bool jump_accepted = false;
};

/// Velocity from N(0, G(x)^-1), generalized leapfrog trajectory, Metropolis
/// correction with the metric energy and the integrator Jacobian; then with
/// probability jump_prob a wormhole jump from the nearest mode to a uniformly
/// chosen other mode. With an empty network this consumes the random stream
/// exactly like hmc_step.
WhmcStepInfo whmc_step(ChainState& state, const TargetDistribution& target,
                       const WormholeNetwork& net, const HmcParams& params);

/// The jump alone: affine map x -> mu_j + L_j L_i^-1 (x - mu_i) accepted
/// with min{1, pi(x') |L_j| / (pi(x) |L_i|)}, rejected when x' is not
/// closest to mode j.
bool wormhole_jump(ChainState& state, const TargetDistribution& target,
                   const WormholeNetwork& net);

}  // namespace mmc
