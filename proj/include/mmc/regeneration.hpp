#pragma once

#include "mmc/diagnostics.hpp"
#include "mmc/hmc.hpp"
#include "mmc/modefinder.hpp"
#include "mmc/target.hpp"
#include "mmc/wormhole.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mmc {

/// S(x_t) Q(x_{t+1}) / T(x_{t+1} | x_t) with
///   S = min{1, c / (pi_t / q_t)}
///   Q = q_{t+1} min{1, (pi_{t+1} / q_{t+1}) / c}
///   T = q_{t+1} min{1, (pi_{t+1} / q_{t+1}) / (pi_t / q_t)}.
/// Returns 0 for zero or non-finite densities.
double regeneration_probability(double pi_t, double q_t, double pi_t1,
                                double q_t1, double c);

/// Same quantity from log ratios log(pi/q) and log c.
double regeneration_probability_log(double log_ratio_t, double log_ratio_t1,
                                    double log_c);

/// Mixture of the registry's local models with the registry weights.
class IndependenceProposal {
 public:
  IndependenceProposal(const ModeRegistry& reg, double c);

  double log_density(const Vec& x) const;
  Vec sample(Rng& rng) const;

  double c() const { return c_; }
  double log_c() const { return log_c_; }
  void set_c(double c);
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<ModeRecord> modes_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<double> cumulative_;
  double c_ = 1.0;
  double log_c_ = 0.0;
};

/// The proposal with c set to the median of pi/q over `recent` states, or
/// over the mode locations when `recent` is empty.
IndependenceProposal build_independence_proposal(
    const ModeRegistry& reg, const TargetDistribution& target,
    const std::vector<Vec>& recent = {});

enum class SamplerKind { hmc, whmc };
enum class ScheduleMode { all_modes_first, on_the_fly, forced_update };
enum class ClockKind { virtual_clock, wall };

const char* to_string(SamplerKind k);
const char* to_string(ScheduleMode m);
const char* to_string(ClockKind k);
SamplerKind sampler_kind_from_string(const std::string& s);
ScheduleMode schedule_mode_from_string(const std::string& s);
ClockKind clock_kind_from_string(const std::string& s);

struct Schedule {
  ScheduleMode mode = ScheduleMode::all_modes_first;
  /// Samples per chain between forced searches.
  long period = 100;
};

struct SamplerConfig {
  SamplerKind sampler = SamplerKind::whmc;
  Schedule schedule;
  std::size_t chains = 4;
  long samples_per_chain = 20000;
  /// Leading samples per chain left out of all estimates.
  long warmup = 200;
  HmcParams hmc;
  WormholeParams wormhole;
  ModeFinderConfig finder;
  /// Master switch for every mode search.
  bool mode_search = true;
  /// On-the-fly and forced-update runs look for one mode before sampling.
  bool initial_search = true;
  bool regeneration = true;
  /// Fixed c; 0 selects the median heuristic.
  double regeneration_c = 0.0;
  /// States used by the median heuristic.
  int c_window = 200;
  /// Samples a chain must draw between two searches it triggers.
  long search_cooldown = 200;
  /// On-the-fly searching stops after this many fruitless searches in a row.
  int stop_after_misses = 5;
  /// Steps a chain takes between synchronization points.
  int block = 50;
  /// Worker threads; 0 means min(chains, hardware threads).
  std::size_t workers = 0;
  bool store_samples = false;
  /// Wall-clock limit checked at synchronization points; 0 disables it.
  double budget_seconds = 0.0;
  /// Virtual time is target evaluations times 1e-6 seconds, which keeps
  /// outputs reproducible.
  ClockKind clock = ClockKind::virtual_clock;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RegenerationEvent {
  std::size_t chain = 0;
  long step = 0;
  double r = 0.0;
  bool triggered = false;
  std::size_t registry_before = 0;
  std::size_t registry_after = 0;
};

void write_regeneration_csv(std::ostream& out,
                            const std::vector<RegenerationEvent>& events);

struct SamplerResult {
  /// Per chain, only when store_samples is set. Warmup draws are included
  /// in neither samples nor moments.
  std::vector<std::vector<TaggedSample>> samples;
  std::vector<TaggedMoments> chain_moments;
  TaggedMoments moments;
  DiagnosticsSeries diagnostics;
  /// REM or RECOV in the series fell back to mean absolute error.
  bool diagnostics_fallback = false;
  ModeRegistry registry;
  std::vector<RegenerationEvent> events;
  std::vector<double> acceptance;
  std::vector<Vec> final_positions;
  long regenerations = 0;
  long searches = 0;
  long jumps_attempted = 0;
  long jumps_accepted = 0;
  std::uint64_t evaluations = 0;
  double wall_seconds = 0.0;
  bool budget_exhausted = false;

  MomentAccumulator pooled() const;
};

/// Random start in the search box with positive density.
Vec chain_start(const TargetDistribution& target, Rng& rng);

/// Runs the configured chains under the schedule. Chain c draws from
/// make_stream(seed, c); mode searches run in chain order at
/// synchronization points on their own stream, so results do not depend on
/// the number of workers. `reference` overrides the target's own reference
/// moments for the diagnostics.
SamplerResult run_sampler(const TargetDistribution& target,
                          const SamplerConfig& config,
                          const std::optional<Moments>& reference = std::nullopt);

}  // namespace mmc
