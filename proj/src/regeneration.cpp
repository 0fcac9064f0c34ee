#include "mmc/regeneration.hpp"

#include "mmc/keyvalue.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <thread>

namespace mmc {

double regeneration_probability(double pi_t, double q_t, double pi_t1,
                                double q_t1, double c) {
  const double vals[] = {pi_t, q_t, pi_t1, q_t1, c};
  for (double v : vals) {
    if (!(v > 0.0) || !std::isfinite(v)) return 0.0;
  }
  const double w_t = pi_t / q_t;
  const double w_t1 = pi_t1 / q_t1;
  const double s = std::min(1.0, c / w_t);
  const double q = q_t1 * std::min(1.0, w_t1 / c);
  const double t = q_t1 * std::min(1.0, w_t1 / w_t);
  if (!(t > 0.0)) return 0.0;
  return std::clamp(s * q / t, 0.0, 1.0);
}

double regeneration_probability_log(double log_ratio_t, double log_ratio_t1,
                                    double log_c) {
  if (!std::isfinite(log_ratio_t) || !std::isfinite(log_ratio_t1) ||
      !std::isfinite(log_c)) {
    return 0.0;
  }
  const double log_s = std::min(0.0, log_c - log_ratio_t);
  const double log_q = std::min(0.0, log_ratio_t1 - log_c);
  const double log_t = std::min(0.0, log_ratio_t1 - log_ratio_t);
  return std::min(1.0, std::exp(log_s + log_q - log_t));
}

// ---------------------------------------------------------------------------

IndependenceProposal::IndependenceProposal(const ModeRegistry& reg, double c)
    : modes_(reg.records()) {
  if (reg.empty()) {
    throw std::invalid_argument(
        "independence proposal: registry is empty, no regeneration until a "
        "mode is found");
  }
  double acc = 0.0;
  for (const auto& m : modes_) {
    weights_.push_back(m.weight);
    log_weights_.push_back(std::log(m.weight));
    acc += m.weight;
    cumulative_.push_back(acc);
  }
  set_c(c);
}

void IndependenceProposal::set_c(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("independence proposal: c must be > 0");
  }
  c_ = c;
  log_c_ = std::log(c);
}

double IndependenceProposal::log_density(const Vec& x) const {
  double acc = kLogZero;
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    acc = log_add_exp(acc, log_weights_[k] + modes_[k].model_log_density(x));
  }
  return acc;
}

Vec IndependenceProposal::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, cumulative_.back());
  const double u = unit(rng);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const std::size_t k = std::min<std::size_t>(
      static_cast<std::size_t>(it - cumulative_.begin()), modes_.size() - 1);
  return modes_[k].sample_model(rng);
}

IndependenceProposal build_independence_proposal(
    const ModeRegistry& reg, const TargetDistribution& target,
    const std::vector<Vec>& recent) {
  IndependenceProposal q(reg, 1.0);
  std::vector<double> log_ratios;
  auto collect = [&](const Vec& x) {
    const double lr = target.log_density(x) - q.log_density(x);
    if (std::isfinite(lr)) log_ratios.push_back(lr);
  };
  if (recent.empty()) {
    for (const auto& r : reg.records()) collect(r.location);
  } else {
    for (const auto& x : recent) collect(x);
  }
  if (!log_ratios.empty()) {
    auto mid = log_ratios.begin() + static_cast<long>(log_ratios.size() / 2);
    std::nth_element(log_ratios.begin(), mid, log_ratios.end());
    const double c = std::exp(*mid);
    if (c > 0.0 && std::isfinite(c)) q.set_c(c);
  }
  return q;
}

// ---------------------------------------------------------------------------

const char* to_string(SamplerKind k) {
  return k == SamplerKind::hmc ? "hmc" : "whmc";
}

const char* to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::all_modes_first: return "all-modes-first";
    case ScheduleMode::on_the_fly: return "on-the-fly";
    case ScheduleMode::forced_update: return "forced-update";
  }
  return "?";
}

const char* to_string(ClockKind k) {
  return k == ClockKind::virtual_clock ? "virtual" : "wall";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "hmc") return SamplerKind::hmc;
  if (s == "whmc") return SamplerKind::whmc;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

ScheduleMode schedule_mode_from_string(const std::string& s) {
  if (s == "all-modes-first") return ScheduleMode::all_modes_first;
  if (s == "on-the-fly") return ScheduleMode::on_the_fly;
  if (s == "forced-update") return ScheduleMode::forced_update;
  throw std::invalid_argument("unknown schedule '" + s + "'");
}

ClockKind clock_kind_from_string(const std::string& s) {
  if (s == "virtual") return ClockKind::virtual_clock;
  if (s == "wall") return ClockKind::wall;
  throw std::invalid_argument("unknown clock '" + s + "'");
}

void SamplerConfig::validate() const {
  hmc.validate();
  wormhole.validate();
  finder.validate();
  if (schedule.mode == ScheduleMode::forced_update && schedule.period < 1) {
    throw std::invalid_argument("schedule: forced-update needs period >= 1");
  }
  if (chains < 1) throw std::invalid_argument("sampler: chains must be >= 1");
  if (samples_per_chain < 1) {
    throw std::invalid_argument("sampler: samples per chain must be >= 1");
  }
  if (warmup < 0 || search_cooldown < 0 || stop_after_misses < 1 ||
      c_window < 1 || block < 1) {
    throw std::invalid_argument("sampler: counts out of range");
  }
  if (regeneration_c < 0.0 || budget_seconds < 0.0) {
    throw std::invalid_argument("sampler: negative setting");
  }
  if (sampler == SamplerKind::whmc && !hmc.mass.identity()) {
    throw std::invalid_argument("sampler: whmc requires an identity mass matrix");
  }
}

void write_regeneration_csv(std::ostream& out,
                            const std::vector<RegenerationEvent>& events) {
  out << "chain,step,r,triggered,registry_before,registry_after\n";
  for (const auto& e : events) {
    out << e.chain << ',' << e.step << ',' << format_double(e.r) << ','
        << (e.triggered ? 1 : 0) << ',' << e.registry_before << ','
        << e.registry_after << '\n';
  }
}

MomentAccumulator SamplerResult::pooled() const {
  MomentAccumulator acc;
  for (const auto& [tag, m] : moments) acc.merge(m);
  return acc;
}

Vec chain_start(const TargetDistribution& target, Rng& rng) {
  const Box box = target.search_box();
  for (int i = 0; i < 10000; ++i) {
    Vec x = box.sample(rng);
    if (std::isfinite(target.log_density(x))) return x;
  }
  throw std::runtime_error("chain_start: no point of positive density found");
}

// ---------------------------------------------------------------------------

namespace {

struct ChainWork {
  ChainState state;
  long drawn = 0;
  TaggedMoments moments;
  std::deque<Vec> window;
  std::deque<Vec> recent;
  long last_trigger = 0;
  bool triggered_once = false;
  bool request = false;
  double last_r = 0.0;
  std::vector<TaggedSample> samples;
  std::vector<RegenerationEvent> events;
  long regenerations = 0;
  long jumps_attempted = 0;
  long jumps_accepted = 0;
};

// Immutable view of the registry handed to the chains between barriers.
struct Snapshot {
  std::size_t tag = 0;
  WormholeNetwork network;
  std::optional<IndependenceProposal> proposal;
};

class Orchestrator {
 public:
  Orchestrator(const TargetDistribution& target, const SamplerConfig& cfg,
               const std::optional<Moments>& reference)
      : counting_(std::shared_ptr<const TargetDistribution>(
            &target, [](const TargetDistribution*) {})),
        cfg_(cfg),
        reference_(reference ? reference : target.reference_moments()),
        search_rng_(make_stream(cfg.seed, 0x5eac4ull)),
        start_(std::chrono::steady_clock::now()) {}

  SamplerResult run();

 private:
  double now() const {
    if (cfg_.clock == ClockKind::virtual_clock) {
      return static_cast<double>(counting_.evaluations()) * 1e-6;
    }
    return elapsed();
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }
  bool searching(ScheduleMode mode) const {
    return cfg_.mode_search && cfg_.schedule.mode == mode;
  }
  bool search_once();
  void rebuild();
  void advance(ChainWork& w) const;
  void record_diagnostics();
  long total_per_chain() const { return cfg_.warmup + cfg_.samples_per_chain; }

  CountingTarget counting_;
  const SamplerConfig& cfg_;
  std::optional<Moments> reference_;
  Rng search_rng_;
  std::chrono::steady_clock::time_point start_;
  ModeRegistry registry_;
  Snapshot snap_;
  std::vector<ChainWork> chains_;
  SamplerResult result_;
  int misses_ = 0;
  std::size_t window_len_ = 1000;
  std::size_t recent_len_ = 200;
};

bool Orchestrator::search_once() {
  if (static_cast<int>(registry_.size()) >= cfg_.finder.max_modes) return false;
  ++result_.searches;
  const auto found = find_new_mode(counting_, registry_, cfg_.finder.budget,
                                   cfg_.finder, cfg_.hmc, search_rng_, now());
  return found.index.has_value();
}

void Orchestrator::rebuild() {
  snap_.tag = registry_.size();
  if (cfg_.sampler == SamplerKind::whmc && registry_.size() >= 2) {
    snap_.network = WormholeNetwork(registry_.frames(), cfg_.wormhole);
  } else {
    snap_.network = WormholeNetwork();
  }
  snap_.proposal.reset();
  if (cfg_.regeneration && !registry_.empty()) {
    std::vector<Vec> recent;
    for (const auto& w : chains_) {
      recent.insert(recent.end(), w.recent.begin(), w.recent.end());
    }
    snap_.proposal = build_independence_proposal(registry_, counting_, recent);
    if (cfg_.regeneration_c > 0.0) snap_.proposal->set_c(cfg_.regeneration_c);
  }
}

void Orchestrator::advance(ChainWork& w) const {
  const bool on_the_fly = cfg_.mode_search &&
                          cfg_.schedule.mode == ScheduleMode::on_the_fly &&
                          misses_ < cfg_.stop_after_misses;
  const bool forced = cfg_.mode_search &&
                      cfg_.schedule.mode == ScheduleMode::forced_update;
  const bool room =
      static_cast<int>(snap_.tag) < cfg_.finder.max_modes;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto& st = w.state;

  for (int b = 0; b < cfg_.block && w.drawn < total_per_chain(); ++b) {
    bool moved = false;
    if (cfg_.sampler == SamplerKind::whmc) {
      const auto info = whmc_step(st, counting_, snap_.network, cfg_.hmc);
      moved = info.trajectory.accepted || info.jump_accepted;
      w.jumps_attempted += info.jump_attempted;
      w.jumps_accepted += info.jump_accepted;
    } else {
      moved = hmc_step(st, counting_, cfg_.hmc).accepted;
    }

    bool regenerated = false;
    if (snap_.proposal) {
      const auto& q = *snap_.proposal;
      const Vec y = q.sample(st.rng);
      const double u = unit(st.rng);
      Vec gy;
      const double ly = counting_.log_density_and_gradient(y, gy);
      if (std::isfinite(ly) && all_finite(gy)) {
        const double wx = st.log_density - q.log_density(st.x);
        const double wy = ly - q.log_density(y);
        if (std::log(u) < wy - wx) {
          st.x = y;
          st.log_density = ly;
          st.grad = std::move(gy);
          moved = true;
          w.last_r = regeneration_probability_log(wx, wy, q.log_c());
          regenerated = unit(st.rng) < w.last_r;
        }
      }
    }

    ++w.drawn;
    if (w.drawn > cfg_.warmup) {
      w.moments[snap_.tag].add(st.x);
      w.window.push_back(st.x);
      if (w.window.size() > window_len_) w.window.pop_front();
      if (cfg_.store_samples) w.samples.push_back({st.x, snap_.tag});
    }
    if (moved) {
      w.recent.push_back(st.x);
      if (w.recent.size() > recent_len_) w.recent.pop_front();
    }

    const bool cooled =
        !w.triggered_once || w.drawn - w.last_trigger >= cfg_.search_cooldown;
    if (regenerated) {
      ++w.regenerations;
      if ((on_the_fly || forced) && room && cooled) {
        w.request = true;
        return;
      }
      w.events.push_back({0, w.drawn, w.last_r, false, snap_.tag, snap_.tag});
    }
    if (forced && w.drawn % cfg_.schedule.period == 0) {
      w.request = true;
      return;
    }
  }
}

void Orchestrator::record_diagnostics() {
  if (!reference_) return;
  MomentAccumulator all, window;
  for (const auto& w : chains_) {
    for (const auto& [tag, m] : w.moments) all.merge(m);
    for (const auto& x : w.window) window.add(x);
  }
  if (all.count() < 2) return;
  const double t = now();
  if (!result_.diagnostics.empty() && !(t > result_.diagnostics.back().t_seconds)) {
    return;
  }
  const auto r = rem_or_fallback(all.mean(), reference_->mean);
  const auto c = recov_or_fallback(all.covariance(), reference_->covariance);
  const auto rw = rem_or_fallback(window.mean(), reference_->mean);
  result_.diagnostics_fallback |= r.fallback || c.fallback || rw.fallback;
  result_.diagnostics.add(
      {t, r.value, c.value, rw.value, registry_.n_bfgs, registry_.size()});
}

SamplerResult Orchestrator::run() {
  cfg_.validate();
  const std::size_t n = cfg_.chains;
  window_len_ = (1000 + n - 1) / n;
  recent_len_ = (static_cast<std::size_t>(cfg_.c_window) + n - 1) / n;

  if (cfg_.mode_search) {
    if (cfg_.schedule.mode == ScheduleMode::all_modes_first) {
      while (search_once()) {
      }
    } else if (cfg_.initial_search) {
      search_once();
    }
  }

  chains_.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    Rng rng = make_stream(cfg_.seed, c);
    const Vec x0 = chain_start(counting_, rng);
    chains_[c].state = make_chain(counting_, x0, std::move(rng));
  }
  rebuild();

  std::size_t workers = cfg_.workers;
  if (workers == 0) {
    workers = std::max(1u, std::thread::hardware_concurrency());
  }
  workers = std::min(workers, n);

  while (true) {
    if (workers <= 1) {
      for (auto& w : chains_) advance(w);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([this, t, workers] {
          for (std::size_t c = t; c < chains_.size(); c += workers) {
            advance(chains_[c]);
          }
        });
      }
      for (auto& th : pool) th.join();
    }

    bool changed = false;
    for (std::size_t c = 0; c < n; ++c) {
      auto& w = chains_[c];
      for (auto& e : w.events) {
        e.chain = c;
        result_.events.push_back(e);
      }
      w.events.clear();
      if (!w.request) continue;
      w.request = false;
      w.last_trigger = w.drawn;
      w.triggered_once = true;
      const std::size_t before = registry_.size();
      const bool found = search_once();
      misses_ = found ? 0 : misses_ + 1;
      changed |= found;
      result_.events.push_back({c, w.drawn, w.last_r, true, before, registry_.size()});
    }
    if (changed) rebuild();
    record_diagnostics();

    const bool done = std::all_of(chains_.begin(), chains_.end(), [&](const ChainWork& w) {
      return w.drawn >= total_per_chain();
    });
    if (done) break;
    if (cfg_.budget_seconds > 0.0 && elapsed() > cfg_.budget_seconds) {
      result_.budget_exhausted = true;
      break;
    }
  }

  result_.registry = registry_;
  for (auto& w : chains_) {
    result_.chain_moments.push_back(w.moments);
    for (const auto& [tag, m] : w.moments) result_.moments[tag].merge(m);
    result_.samples.push_back(std::move(w.samples));
    result_.acceptance.push_back(w.state.acceptance_rate());
    result_.final_positions.push_back(w.state.x);
    result_.regenerations += w.regenerations;
    result_.jumps_attempted += w.jumps_attempted;
    result_.jumps_accepted += w.jumps_accepted;
  }
  if (!cfg_.store_samples) result_.samples.clear();
  result_.evaluations = counting_.evaluations();
  result_.wall_seconds = elapsed();
  return std::move(result_);
}

}  // namespace

SamplerResult run_sampler(const TargetDistribution& target,
                          const SamplerConfig& config,
                          const std::optional<Moments>& reference) {
  Orchestrator orchestrator(target, config, reference);
  return orchestrator.run();
}

}  // namespace mmc
