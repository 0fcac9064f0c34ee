#include "mmc/harness.hpp"

#include "mmc/keyvalue.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace mmc {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const KeyValueEntry& e, const std::string& what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + ": " + what +
                    " (got '" + e.value + "')");
}

void read_value(const KeyValueEntry& e, double& out) { out = parse_double(e); }
void read_value(const KeyValueEntry& e, long& out) {
  out = static_cast<long>(parse_integer(e));
}
void read_value(const KeyValueEntry& e, std::uint64_t& out) {
  const long long v = parse_integer(e);
  if (v < 0) fail(e, "must be non-negative");
  out = static_cast<std::uint64_t>(v);
}
void read_value(const KeyValueEntry& e, bool& out) { out = parse_bool(e); }
void read_value(const KeyValueEntry& e, std::string& out) { out = e.value; }

template <class Enum, class Parse>
void read_enum(const KeyValueEntry& e, Enum& out, Parse parse) {
  try {
    out = parse(e.value);
  } catch (const std::invalid_argument& ex) {
    fail(e, ex.what());
  }
}
void read_value(const KeyValueEntry& e, SamplerKind& out) {
  read_enum(e, out, sampler_kind_from_string);
}
void read_value(const KeyValueEntry& e, ScheduleMode& out) {
  read_enum(e, out, schedule_mode_from_string);
}
void read_value(const KeyValueEntry& e, ClockKind& out) {
  read_enum(e, out, clock_kind_from_string);
}
template <class T>
void read_value(const KeyValueEntry& e, std::optional<T>& out) {
  if (e.value == "auto") {
    out.reset();
    return;
  }
  T v{};
  read_value(e, v);
  out = v;
}

std::string show(double v) { return format_double(v); }
std::string show(long v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }
std::string show(SamplerKind v) { return to_string(v); }
std::string show(ScheduleMode v) { return to_string(v); }
std::string show(ClockKind v) { return to_string(v); }
template <class T>
std::string show(const std::optional<T>& v) {
  return v ? show(*v) : std::string("auto");
}

// A range check returns an error text, empty when the value is fine.
using Check = std::function<std::string(double)>;

Check positive() {
  return [](double v) { return v > 0.0 ? "" : std::string("must be > 0"); };
}
Check non_negative() {
  return [](double v) { return v >= 0.0 ? "" : std::string("must be >= 0"); };
}
Check at_least(double lo) {
  return [lo](double v) {
    return v >= lo ? "" : "must be >= " + format_double(lo);
  };
}
Check between(double lo, double hi) {
  return [lo, hi](double v) {
    return (v >= lo && v <= hi)
               ? ""
               : "must be in [" + format_double(lo) + ", " + format_double(hi) + "]";
  };
}

double as_number(double v) { return v; }
double as_number(long v) { return static_cast<double>(v); }

struct Field {
  std::string key;
  std::string help;
  std::function<void(ExperimentConfig&, const KeyValueEntry&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  // Error text for the current value, empty when valid.
  std::function<std::string(const ExperimentConfig&)> check;
};

template <class T>
Field field(std::string key, T ExperimentConfig::*member, std::string help,
            Check check = {}) {
  Field f;
  f.key = std::move(key);
  f.help = std::move(help);
  f.set = [member](ExperimentConfig& c, const KeyValueEntry& e) {
    read_value(e, c.*member);
  };
  f.get = [member](const ExperimentConfig& c) { return show(c.*member); };
  f.check = [member, check](const ExperimentConfig& c) -> std::string {
    if (!check) return "";
    const auto& v = c.*member;
    if constexpr (std::is_same_v<T, double> || std::is_same_v<T, long>) {
      return check(as_number(v));
    } else if constexpr (std::is_same_v<T, std::optional<double>> ||
                         std::is_same_v<T, std::optional<long>>) {
      return v ? check(as_number(*v)) : "";
    } else {
      return "";
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      field("experiment.id", &C::id, "name used for output files; empty means the preset id or file stem"),
      field("experiment.seed", &C::seed, "master random seed"),
      field("experiment.out", &C::out, "output directory"),
      field("target.preset", &C::preset, "preset id (see `presets`); exclusive with target.file"),
      field("target.file", &C::target_file, "GMM ([gmm] key-value) or sensor instance file"),
      field("target.instance_seed", &C::instance_seed, "seed of the generated benchmark instance"),
      field("sampler.kind", &C::sampler, "whmc, or hmc for the plain baseline (no mode search, no regeneration)"),
      field("sampler.schedule", &C::schedule, "all-modes-first | on-the-fly | forced-update"),
      field("sampler.period", &C::period, "samples per chain between forced searches", at_least(1)),
      field("sampler.chains", &C::chains, "parallel chains; auto is 4 for GMM and 2 for sensor targets", at_least(1)),
      field("sampler.samples", &C::samples, "retained samples per chain", at_least(1)),
      field("sampler.warmup", &C::warmup, "discarded leading samples per chain", non_negative()),
      field("sampler.budget_seconds", &C::budget_seconds, "wall-clock limit, 0 for none", non_negative()),
      field("sampler.workers", &C::workers, "worker threads, 0 for min(chains, cores)", non_negative()),
      field("sampler.clock", &C::clock, "virtual (target evaluations x 1e-6 s, reproducible) or wall"),
      field("hmc.step_size", &C::step_size, "leapfrog step; auto tunes GMM runs and uses 0.014 for sensor runs", positive()),
      field("hmc.steps", &C::steps, "leapfrog steps per trajectory; auto is 15 for GMM and 10 for sensor runs", at_least(1)),
      field("hmc.jitter", &C::jitter, "relative step-size jitter per trajectory", between(0.0, 0.99)),
      field("hmc.target_acceptance", &C::target_acceptance, "tuning goal", between(0.01, 0.99)),
      field("hmc.tune_steps", &C::tune_steps, "tuning budget in trajectories", at_least(1)),
      field("wormhole.F", &C::influence, "mollifier influence factor; auto is 0.1 for GMM and 0.01 for sensor runs", positive()),
      field("wormhole.epsilon_w", &C::epsilon_w, "contraction along the wormhole direction", between(1e-300, 1.0)),
      field("wormhole.jump_prob", &C::jump_prob, "probability of a mode jump after each trajectory", between(0.0, 1.0)),
      field("wormhole.metric_logdet", &C::metric_logdet, "include the metric log-determinant in the energy"),
      field("wormhole.fixed_point_tol", &C::fixed_point_tol, "implicit update tolerance", positive()),
      field("wormhole.fixed_point_max_iter", &C::fixed_point_max_iter, "implicit update iteration cap", at_least(1)),
      field("modefinder.enabled", &C::search, "run mode searches at all"),
      field("modefinder.alpha", &C::alpha, "geodesic curvature scale, 0 for 1/D", non_negative()),
      field("modefinder.steps", &C::geodesic_steps, "geodesic integration steps", at_least(1)),
      field("modefinder.h", &C::geodesic_h, "geodesic step length, 0 for box diameter / steps", non_negative()),
      field("modefinder.restarts", &C::restarts, "geodesics per attempt", at_least(1)),
      field("modefinder.budget", &C::budget, "BFGS attempts per search", at_least(1)),
      field("modefinder.delta", &C::delta, "residual floor, 0 for 1e-12 x largest peak", non_negative()),
      field("modefinder.dedup_radius", &C::dedup_radius, "duplicate radius, 0 for half the smallest mode standard deviation", non_negative()),
      field("modefinder.model", &C::model, "gaussian-from-hessian | kde-from-samples; auto is gaussian for GMM and kde for sensor runs"),
      field("modefinder.kde_samples", &C::kde_samples, "HMC samples behind each KDE model", at_least(2)),
      field("modefinder.max_modes", &C::max_modes, "registry cap; auto is 64 for GMM and 16 for sensor runs", at_least(1)),
      field("modefinder.bfgs_tol", &C::bfgs_tol, "BFGS gradient-norm tolerance", positive()),
      field("modefinder.bfgs_max_iter", &C::bfgs_max_iter, "BFGS iteration cap", at_least(1)),
      field("regeneration.enabled", &C::regeneration, "independence steps and regeneration checks"),
      field("regeneration.c", &C::regeneration_c, "regeneration constant, 0 for the median of pi/q", non_negative()),
      field("regeneration.c_window", &C::c_window, "recent states used for the median", at_least(1)),
      field("regeneration.cooldown", &C::cooldown, "samples per chain between triggered searches", non_negative()),
      field("regeneration.stop_after_misses", &C::stop_after_misses, "on-the-fly searching stops after this many fruitless searches", at_least(1)),
      field("regeneration.initial_search", &C::initial_search, "on-the-fly and forced-update runs find one mode first"),
      field("reference.samples", &C::reference_samples, "total samples of the reference run for targets without exact moments", at_least(2)),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

void ExperimentConfig::validate() const {
  for (const auto& f : fields()) {
    const std::string err = f.check(*this);
    if (!err.empty()) throw ConfigError(f.key + ": " + err);
  }
  if (preset.empty() == target_file.empty()) {
    throw ConfigError("target: set exactly one of target.preset and target.file");
  }
  if (model) {
    try {
      model_kind_from_string(*model);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("modefinder.model: ") + e.what());
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  for (const auto& e : parse_key_values(text)) {
    const Field* f = find_field(e.key);
    if (!f) {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" +
                        e.key + "'");
    }
    if (!seen.insert(e.key).second) fail(e, "key given twice");
    f->set(cfg, e);
    const std::string err = f->check(cfg);
    if (!err.empty()) fail(e, err);
  }
  cfg.validate();
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

std::string explain_defaults() {
  const ExperimentConfig defaults;
  std::ostringstream out;
  for (const auto& f : fields()) {
    std::string value = f.get(defaults);
    if (value.empty()) value = "\"\"";
    out << f.key << " = " << value << "\n    " << f.help << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> list = {
      {"gmm-d10-k10-equal", "D=10, K=10, equal weights (benchmark scale)"},
      {"gmm-d10-k10-prop", "D=10, K=10, weights proportional to k (benchmark scale)"},
      {"gmm-d20-k10-equal", "D=20, K=10, equal weights (benchmark scale)"},
      {"gmm-d20-k10-prop", "D=20, K=10, weights proportional to k (benchmark scale)"},
      {"gmm-d40-k10-equal", "D=40, K=10, equal weights (benchmark scale)"},
      {"gmm-d40-k10-prop", "D=40, K=10, weights proportional to k (benchmark scale)"},
      {"gmm-d100-k10-equal", "D=100, K=10, equal weights (benchmark scale)"},
      {"gmm-d100-k10-prop", "D=100, K=10, weights proportional to k (benchmark scale)"},
      {"gmm-d20-k20-equal", "D=20, K=20, equal weights (many-mode HMC comparison)"},
      {"gmm-d20-k20-prop", "D=20, K=20, weights proportional to k (many-mode HMC comparison)"},
      {"gmm-d10-k5-equal", "D=10, K=5, equal weights (desk scale)"},
      {"gmm-d10-k5-prop", "D=10, K=5, weights proportional to k (desk scale)"},
      {"gmm-d2-k2-equal", "D=2, K=2, equal weights (desk scale, occupancy checks)"},
      {"sensor-ns8", "sensor network N_s=8, R=0.3, sigma=0.02 (full scale)"},
      {"sensor-ns3", "sensor network N_s=3, R=0.3, sigma=0.02 (desk scale)"},
  };
  return list;
}

std::string list_presets() {
  std::ostringstream out;
  for (const auto& p : presets()) out << p.id << "  " << p.description << '\n';
  return out.str();
}

namespace {

TargetBundle preset_target(const std::string& id, std::uint64_t instance_seed) {
  TargetBundle b;
  b.descriptor = "preset:" + id + ":" + std::to_string(instance_seed);
  static const std::regex gmm_re("gmm-d([0-9]+)-k([0-9]+)-(equal|prop)");
  static const std::regex sensor_re("sensor-ns([0-9]+)");
  std::smatch m;
  if (std::regex_match(id, m, gmm_re)) {
    const auto d = std::stoul(m[1]);
    const auto k = std::stoul(m[2]);
    if (d < 1 || k < 1) throw ConfigError("target.preset: bad preset '" + id + "'");
    const auto scheme =
        m[3] == "equal" ? WeightScheme::equal : WeightScheme::proportional;
    b.target = std::make_shared<GaussianMixture>(
        gmm_generate_benchmark(d, k, scheme, instance_seed));
    b.family = TargetFamily::gmm;
    return b;
  }
  if (std::regex_match(id, m, sensor_re)) {
    const auto n = std::stoul(m[1]);
    if (n < 2) throw ConfigError("target.preset: bad preset '" + id + "'");
    const double range = 0.3;
    b.target = std::make_shared<SensorNetwork>(
        sensor_generate_instance(n, range, 0.02, instance_seed));
    b.family = TargetFamily::sensor;
    return b;
  }
  throw ConfigError("target.preset: unknown preset '" + id + "'");
}

TargetBundle file_target(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("target.file: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  TargetBundle b;
  b.descriptor = "file:" + path;
  std::istringstream is(text);
  if (text.find("[gmm]") != std::string::npos) {
    b.target = std::make_shared<GaussianMixture>(GaussianMixture::read(is));
    b.family = TargetFamily::gmm;
  } else {
    b.target = std::make_shared<SensorNetwork>(SensorNetwork::read(is));
    b.family = TargetFamily::sensor;
  }
  return b;
}

std::string run_id(const ExperimentConfig& cfg) {
  if (!cfg.id.empty()) return cfg.id;
  if (!cfg.preset.empty()) return cfg.preset;
  return fs::path(cfg.target_file).stem().string();
}

void write_moments(std::ostream& out, const Moments& m) {
  out << m.mean.size() << '\n';
  for (Eigen::Index i = 0; i < m.mean.size(); ++i) out << format_double(m.mean[i]) << ' ';
  out << '\n';
  for (Eigen::Index i = 0; i < m.covariance.size(); ++i) {
    out << format_double(m.covariance.data()[i]) << ' ';
  }
  out << '\n';
}

std::optional<Moments> read_moments(std::istream& in) {
  Eigen::Index d = 0;
  if (!(in >> d) || d < 1) return std::nullopt;
  Moments m{Vec(d), Mat(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) in >> m.mean[i];
  for (Eigen::Index i = 0; i < d * d; ++i) in >> m.covariance.data()[i];
  if (!in) return std::nullopt;
  return m;
}

}  // namespace

TargetBundle make_target(const ExperimentConfig& cfg) {
  if (!cfg.preset.empty()) return preset_target(cfg.preset, cfg.instance_seed);
  return file_target(cfg.target_file);
}

TargetBundle make_target(const std::string& descriptor) {
  if (descriptor.rfind("file:", 0) == 0) return file_target(descriptor.substr(5));
  if (descriptor.rfind("preset:", 0) == 0) {
    const std::string rest = descriptor.substr(7);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) {
      throw ConfigError("target descriptor '" + descriptor + "' has no instance seed");
    }
    return preset_target(rest.substr(0, colon), std::stoull(rest.substr(colon + 1)));
  }
  throw ConfigError("unrecognized target descriptor '" + descriptor + "'");
}

ResolvedRun resolve(const ExperimentConfig& cfg) {
  cfg.validate();
  ResolvedRun run;
  run.target = make_target(cfg);
  const bool gmm = run.target.family == TargetFamily::gmm;
  const TargetDistribution& target = *run.target.target;

  SamplerConfig& s = run.sampler;
  s.sampler = cfg.sampler;
  s.schedule = {cfg.schedule, cfg.period};
  s.chains = static_cast<std::size_t>(cfg.chains.value_or(gmm ? 4 : 2));
  s.samples_per_chain = cfg.samples;
  s.warmup = cfg.warmup;
  s.budget_seconds = cfg.budget_seconds;
  s.workers = static_cast<std::size_t>(cfg.workers);
  s.clock = cfg.clock;
  s.seed = cfg.seed;

  s.hmc.jitter = cfg.jitter;
  s.hmc.steps = static_cast<int>(cfg.steps.value_or(gmm ? 15 : 10));
  s.hmc.step_size = cfg.step_size.value_or(gmm ? 0.1 : 0.014);

  s.wormhole.influence = cfg.influence.value_or(gmm ? 0.1 : 0.01);
  s.wormhole.epsilon_w = cfg.epsilon_w;
  s.wormhole.jump_prob = cfg.jump_prob;
  s.wormhole.metric_logdet = cfg.metric_logdet;
  s.wormhole.fixed_point_tol = cfg.fixed_point_tol;
  s.wormhole.fixed_point_max_iter = static_cast<int>(cfg.fixed_point_max_iter);

  auto& f = s.finder;
  f.alpha = cfg.alpha;
  f.geodesic_steps = static_cast<int>(cfg.geodesic_steps);
  f.geodesic_h = cfg.geodesic_h;
  f.restarts = static_cast<int>(cfg.restarts);
  f.budget = static_cast<int>(cfg.budget);
  f.delta = cfg.delta;
  f.dedup_radius = cfg.dedup_radius;
  f.model = model_kind_from_string(
      cfg.model.value_or(gmm ? "gaussian-from-hessian" : "kde-from-samples"));
  f.kde_samples = static_cast<int>(cfg.kde_samples);
  f.max_modes = static_cast<int>(cfg.max_modes.value_or(gmm ? 64 : 16));
  f.bfgs.grad_tol = cfg.bfgs_tol;
  f.bfgs.max_iter = static_cast<int>(cfg.bfgs_max_iter);

  const bool plain = cfg.sampler == SamplerKind::hmc;
  s.mode_search = cfg.search && !plain;
  s.regeneration = cfg.regeneration && !plain;
  s.regeneration_c = cfg.regeneration_c;
  s.c_window = static_cast<int>(cfg.c_window);
  s.search_cooldown = cfg.cooldown;
  s.stop_after_misses = static_cast<int>(cfg.stop_after_misses);
  s.initial_search = cfg.initial_search;

  if (gmm && !cfg.step_size) {
    Rng rng = make_stream(cfg.seed, 0x7475ull);
    const Vec start = chain_start(target, rng);
    const auto tuned = tune_step_size(target, s.hmc, cfg.target_acceptance,
                                      static_cast<int>(cfg.tune_steps), start,
                                      cfg.seed);
    s.hmc = tuned.params;
    run.tuned_acceptance = tuned.trailing_acceptance;
  }
  s.validate();
  return run;
}

Moments reference_run(const TargetDistribution& target,
                      const SamplerConfig& base, long samples,
                      std::uint64_t seed) {
  SamplerConfig cfg = base;
  cfg.schedule.mode = ScheduleMode::all_modes_first;
  cfg.sampler = SamplerKind::whmc;
  cfg.mode_search = true;
  cfg.regeneration = true;
  cfg.chains = 2;
  cfg.samples_per_chain = std::max(1L, samples / 2);
  cfg.budget_seconds = 0.0;
  cfg.store_samples = false;
  cfg.seed = seed;
  const auto result = run_sampler(target, cfg);
  const auto acc = result.pooled();
  return {acc.mean(), acc.covariance()};
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  const ResolvedRun run = resolve(cfg);
  const TargetDistribution& target = *run.target.target;

  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) {
    throw std::runtime_error("cannot create output directory '" + cfg.out + "'");
  }

  ExperimentOutcome outcome;
  if (auto exact = target.reference_moments()) {
    outcome.reference = *exact;
  } else {
    std::string tag = run.target.descriptor;
    for (char& ch : tag) {
      if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
    }
    const fs::path cache = fs::path(cfg.out) /
                           ("reference-" + tag + "-n" +
                            std::to_string(cfg.reference_samples) + ".txt");
    std::optional<Moments> cached;
    if (std::ifstream in(cache); in) cached = read_moments(in);
    if (cached && cached->mean.size() == static_cast<Eigen::Index>(target.dimension())) {
      outcome.reference = *cached;
    } else {
      outcome.reference = reference_run(target, run.sampler, cfg.reference_samples,
                                        cfg.instance_seed + 0x9e3779b9ull);
      std::ofstream out(cache);
      write_moments(out, outcome.reference);
    }
  }

  outcome.result = run_sampler(target, run.sampler, outcome.reference);
  const SamplerResult& r = outcome.result;
  outcome.stem = (fs::path(cfg.out) / (run_id(cfg) + "-s" + std::to_string(cfg.seed))).string();

  auto open = [](const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    return f;
  };
  {
    auto f = open(outcome.stem + "-diagnostics.csv");
    r.diagnostics.write_csv(f);
  }
  {
    auto f = open(outcome.stem + "-regeneration.csv");
    write_regeneration_csv(f, r.events);
  }
  {
    auto f = open(outcome.stem + "-registry.txt");
    r.registry.write(f, run.target.descriptor);
  }
  {
    auto f = open(outcome.stem + "-audit.csv");
    std::vector<AuditRow> rows;
    if (!r.registry.empty()) {
      rows = fictitious_mode_audit(target, r.registry, run.sampler.finder.bfgs);
      outcome.cumulative_delta_x = rows.back().cumulative;
    }
    write_audit_csv(f, rows);
  }

  const auto pooled = r.pooled();
  outcome.final_rem = rem_or_fallback(pooled.mean(), outcome.reference.mean).value;
  outcome.final_recov =
      recov_or_fallback(pooled.covariance(), outcome.reference.covariance).value;
  {
    auto f = open(outcome.stem + "-summary.txt");
    f << "experiment = " << run_id(cfg) << '\n';
    f << "seed = " << cfg.seed << '\n';
    f << "target = " << run.target.descriptor << '\n';
    f << "sampler = " << to_string(run.sampler.sampler) << '\n';
    f << "schedule = " << to_string(run.sampler.schedule.mode) << '\n';
    f << "chains = " << run.sampler.chains << '\n';
    f << "step_size = " << format_double(run.sampler.hmc.step_size) << '\n';
    f << "steps = " << run.sampler.hmc.steps << '\n';
    f << "final_rem = " << format_double(outcome.final_rem) << '\n';
    f << "final_recov = " << format_double(outcome.final_recov) << '\n';
    f << "n_bfgs = " << r.registry.n_bfgs << '\n';
    f << "modes_found = " << r.registry.size() << '\n';
    f << "cumulative_delta_x = " << format_double(outcome.cumulative_delta_x) << '\n';
    f << "samples = " << pooled.count() << '\n';
    f << "evaluations = " << r.evaluations << '\n';
    f << "wall_seconds = " << format_double(r.wall_seconds) << '\n';
    f << "regenerations = " << r.regenerations << '\n';
    f << "searches = " << r.searches << '\n';
    double acc = 0.0;
    for (double a : r.acceptance) acc += a;
    f << "acceptance = " << format_double(acc / static_cast<double>(r.acceptance.size()))
      << '\n';
    f << "budget_exhausted = " << (r.budget_exhausted ? "true" : "false") << '\n';
    f << "diagnostics_fallback = " << (r.diagnostics_fallback ? "true" : "false") << '\n';
    if (pooled.count() > 0) {
      write_bias_report(f, bias_report(r.moments, r.registry.size(), outcome.reference));
    }
  }
  return outcome;
}

double audit_registry_file(const std::string& path, std::ostream& csv) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open registry '" + path + "'");
  std::string descriptor;
  const ModeRegistry reg = ModeRegistry::read(in, &descriptor);
  if (descriptor.empty()) {
    throw ConfigError("registry '" + path + "' does not name its target");
  }
  const TargetBundle target = make_target(descriptor);
  std::vector<AuditRow> rows;
  if (!reg.empty()) rows = fictitious_mode_audit(*target.target, reg);
  write_audit_csv(csv, rows);
  return rows.empty() ? 0.0 : rows.back().cumulative;
}

}  // namespace mmc
