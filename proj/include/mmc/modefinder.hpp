#pragma once

#include "mmc/hmc.hpp"
#include "mmc/numerics.hpp"
#include "mmc/target.hpp"
#include "mmc/wormhole.hpp"

#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mmc {

enum class ModelKind { gaussian_from_hessian, kde_from_samples };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

/// Gaussian kernel density estimate with a shared bandwidth matrix.
class KdeModel {
 public:
  KdeModel(std::vector<Vec> centers, const Mat& bandwidth);

  /// Silverman's rule: H = (4 / ((D + 2) n))^(2 / (D + 4)) * sample cov.
  static KdeModel silverman(std::vector<Vec> samples);

  double log_density(const Vec& x) const;
  /// Returns log density, writes the gradient of the log density.
  double log_density_and_gradient(const Vec& x, Vec& grad) const;
  Vec sample(Rng& rng) const;

  const std::vector<Vec>& centers() const { return centers_; }
  const Mat& bandwidth() const { return bandwidth_; }

 private:
  std::vector<Vec> centers_;
  Mat bandwidth_;
  Mat chol_;
  Mat whitened_;  // L^-1 c_i as columns
  double log_norm_ = 0.0;
};

/// A mode of the target and the local density model fitted around it.
struct ModeRecord {
  Vec location;
  Mat covariance;
  Mat chol;
  /// Laplace estimate of the probability mass near the mode:
  /// f(x*) (2 pi)^(D/2) |covariance|^(1/2).
  double log_mass = 0.0;
  /// log_mass normalized over the registry.
  double weight = 0.0;
  ModelKind kind = ModelKind::gaussian_from_hessian;
  std::shared_ptr<const KdeModel> kde;
  std::size_t index = 0;  // discovery order, from 1
  double wall_time = 0.0;
  /// N_BFGS counter value when this mode was registered.
  long bfgs_calls_at_discovery = 0;
  std::string note;

  /// Density of the local model (not weighted).
  double model_log_density(const Vec& x) const;
  double model_log_density_and_gradient(const Vec& x, Vec& grad) const;
  Vec sample_model(Rng& rng) const;
  /// log of mass * model density at the mode location.
  double log_peak() const;
};

/// Ordered, deduplicated collection of discovered modes with the N_BFGS
/// cost counters.
class ModeRegistry {
 public:
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<ModeRecord>& records() const { return records_; }
  const ModeRecord& operator[](std::size_t k) const { return records_[k]; }

  /// Appends, assigns the discovery index and renormalizes weights.
  const ModeRecord& add(ModeRecord record);
  /// Nearest registered mode within `radius` of x, if any.
  std::optional<std::size_t> duplicate_of(const Vec& x, double radius) const;

  /// log f_hat(x) = log sum_k mass_k model_k(x); -inf when empty.
  double log_estimate(const Vec& x) const;
  double log_estimate_and_gradient(const Vec& x, Vec& grad) const;
  double max_log_peak() const;

  std::vector<ModeFrame> frames() const;

  long n_bfgs = 0;
  long successes = 0;
  long duplicates = 0;
  /// Replaces the record at k (used by the audit tests to inject faults).
  void replace_location(std::size_t k, const Vec& x) { records_[k].location = x; }

  /// Plain-text form: comment header, then one line per mode.
  void write(std::ostream& out, const std::string& target_descriptor) const;
  /// Reads a registry file; the target descriptor from the header is
  /// returned through `target_descriptor` when non-null.
  static ModeRegistry read(std::istream& in, std::string* target_descriptor);

 private:
  void renormalize();
  std::vector<ModeRecord> records_;
};

/// f_hat(x) = sum_k w_k model_k(x); 0 for an empty registry.
double mode_density_estimate(const ModeRegistry& reg, const Vec& x);

/// phi(x) = log f(x) - log(f_hat(x) + delta).
Objective residual_objective(const TargetDistribution& target,
                             const ModeRegistry& reg, double delta);

/// Floor used when none is configured: 1e-12 times the largest registered
/// peak density, or 1 for an empty registry.
double default_residual_floor(const ModeRegistry& reg);

/// Integrates the geodesic of the conformal metric exp(2 alpha phi) I with
/// unit Euclidean speed: dT/ds = alpha (grad phi - (grad phi . T) T),
/// dx/ds = T. The tangent is updated first, then the position. Returns the
/// trajectory point with the largest phi (the latest one on ties). Stops at
/// the first non-finite phi.
Vec geodesic_start_proposal(const Objective& phi, const Vec& x0, const Vec& v0,
                            int steps, double h, double alpha);

struct ModeFinderConfig {
  /// Geodesic curvature scale; 0 means 1/D.
  double alpha = 0.0;
  int geodesic_steps = 500;
  /// Step length; 0 means search-box diameter / steps.
  double geodesic_h = 0.0;
  /// Geodesics traced per attempt; the best start over all is used.
  int restarts = 8;
  /// Attempts (BFGS calls) per find_new_mode.
  int budget = 3;
  /// Residual floor; 0 means default_residual_floor.
  double delta = 0.0;
  /// Dedup radius; 0 means 0.5 sqrt(smallest eigenvalue of new covariance).
  double dedup_radius = 0.0;
  ModelKind model = ModelKind::gaussian_from_hessian;
  int kde_samples = 500;
  BfgsOptions bfgs;
  int max_modes = 64;

  void validate() const;
};

/// Fits the local model at a stationary point x* and returns an unregistered
/// record. A Hessian that stays indefinite after regularization falls back
/// to the KDE model.
ModeRecord fit_mode_model(const TargetDistribution& target, const Vec& x_star,
                          ModelKind kind, const HmcParams& hmc,
                          int kde_samples, Rng& rng);

struct FindResult {
  std::optional<std::size_t> index;  // registry slot of the new mode
  int attempts = 0;
  int duplicates = 0;
  int failures = 0;
};

/// Up to `budget` attempts of (geodesic start proposal on phi, BFGS on the
/// original log f). Every BFGS call increments reg.n_bfgs. A new mode is
/// fitted and registered.
FindResult find_new_mode(const TargetDistribution& target, ModeRegistry& reg,
                         int budget, const ModeFinderConfig& config,
                         const HmcParams& hmc, Rng& rng,
                         double wall_time = 0.0);

struct AuditRow {
  std::size_t k = 0;
  double delta_x = 0.0;
  double cumulative = 0.0;
  bool ok = true;
};

/// Re-runs BFGS on log f from every recorded location. Failed
/// re-convergences are flagged and left out of the running sum.
std::vector<AuditRow> fictitious_mode_audit(const TargetDistribution& target,
                                            const ModeRegistry& reg,
                                            const BfgsOptions& bfgs = {});

void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows);

}  // namespace mmc
