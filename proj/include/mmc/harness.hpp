#pragma once

#include "mmc/regeneration.hpp"
#include "mmc/target.hpp"

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mmc {

/// Everything a run needs. Fields holding std::nullopt are "auto" and get a
/// per-target value when the run is resolved.
struct ExperimentConfig {
  std::string id;
  std::uint64_t seed = 1;
  std::string out = "out";

  std::string preset;
  std::string target_file;
  std::uint64_t instance_seed = 1;

  SamplerKind sampler = SamplerKind::whmc;
  ScheduleMode schedule = ScheduleMode::all_modes_first;
  long period = 100;
  std::optional<long> chains;
  long samples = 20000;
  long warmup = 200;
  double budget_seconds = 60.0;
  long workers = 0;
  ClockKind clock = ClockKind::virtual_clock;

  std::optional<double> step_size;
  std::optional<long> steps;
  double jitter = 0.1;
  double target_acceptance = 0.65;
  long tune_steps = 5000;

  std::optional<double> influence;
  double epsilon_w = 1e-4;
  double jump_prob = 0.68;
  bool metric_logdet = true;
  double fixed_point_tol = 1e-8;
  long fixed_point_max_iter = 100;

  bool search = true;
  double alpha = 0.0;
  long geodesic_steps = 500;
  double geodesic_h = 0.0;
  long restarts = 8;
  long budget = 3;
  double delta = 0.0;
  double dedup_radius = 0.0;
  std::optional<std::string> model;
  long kde_samples = 500;
  std::optional<long> max_modes;
  double bfgs_tol = 1e-6;
  long bfgs_max_iter = 500;

  bool regeneration = true;
  double regeneration_c = 0.0;
  long c_window = 200;
  long cooldown = 200;
  long stop_after_misses = 5;
  bool initial_search = true;

  long reference_samples = 100000;

  bool operator==(const ExperimentConfig&) const = default;

  /// Range checks; throws ConfigError naming the key.
  void validate() const;
};

/// Parses `key = value` lines (sections allowed). Unknown keys, malformed
/// values and out-of-range values raise ConfigError naming key and line.
ExperimentConfig parse_config(const std::string& text);
/// Every key, in the order of explain_defaults; reparses to an equal config.
std::string serialize_config(const ExperimentConfig& cfg);
/// One line per key: key, default, meaning.
std::string explain_defaults();

struct PresetInfo {
  std::string id;
  std::string description;
};
const std::vector<PresetInfo>& presets();
std::string list_presets();

enum class TargetFamily { gmm, sensor };

struct TargetBundle {
  std::shared_ptr<const TargetDistribution> target;
  TargetFamily family = TargetFamily::gmm;
  /// "preset:<id>:<instance seed>" or "file:<path>"; make_target(descriptor)
  /// rebuilds the same target.
  std::string descriptor;
};

TargetBundle make_target(const ExperimentConfig& cfg);
TargetBundle make_target(const std::string& descriptor);

/// Auto fields filled in; the step size is tuned for GMM targets.
struct ResolvedRun {
  TargetBundle target;
  SamplerConfig sampler;
  double tuned_acceptance = 0.0;
};
ResolvedRun resolve(const ExperimentConfig& cfg);

struct ExperimentOutcome {
  SamplerResult result;
  Moments reference;
  std::string stem;  // output path prefix
  double final_rem = 0.0;
  double final_recov = 0.0;
  double cumulative_delta_x = 0.0;
};

/// Resolves, obtains reference moments (running and caching a long
/// reference run for targets without closed-form moments), samples and
/// writes <out>/<id>-s<seed>-{diagnostics.csv,regeneration.csv,
/// registry.txt,audit.csv,summary.txt}.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// Long all-modes-first run used as ground truth for the sensor problem.
Moments reference_run(const TargetDistribution& target,
                      const SamplerConfig& base, long samples,
                      std::uint64_t seed);

/// Reads a registry file, rebuilds its target and writes the audit CSV.
/// Returns the cumulative displacement.
double audit_registry_file(const std::string& path, std::ostream& csv);

}  // namespace mmc
