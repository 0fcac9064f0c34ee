#include "mmc/regeneration.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace mmc;

namespace {

SamplerConfig quick_config() {
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.samples_per_chain = 1000;
  cfg.warmup = 50;
  cfg.hmc.step_size = 0.3;
  cfg.hmc.steps = 5;
  cfg.seed = 3;
  return cfg;
}

ModeRegistry registry_from(const GaussianMixture& g, std::size_t count) {
  ModeRegistry reg;
  Rng rng(1);
  for (std::size_t k = 0; k < count; ++k) {
    reg.add(fit_mode_model(g, g.means()[k], ModelKind::gaussian_from_hessian, HmcParams{}, 500, rng));
  }
  return reg;
}

// Mean of r over consecutive independent draws from the target.
double mean_r(const GaussianMixture& g, const IndependenceProposal& q, int n, std::uint64_t seed) {
  Rng rng(seed);
  Vec prev = g.sample(rng);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec next = g.sample(rng);
    sum += regeneration_probability_log(g.log_density(prev) - q.log_density(prev),
                                        g.log_density(next) - q.log_density(next), q.log_c());
    prev = next;
  }
  return sum / n;
}

}  // namespace

TEST_CASE("regeneration probability examples") {
  CHECK(regeneration_probability(0.3, 0.3, 0.7, 0.7, 1.0) == 1.0);
  CHECK(regeneration_probability_log(0.0, 0.0, 0.0) == 1.0);
  // Ratios 2 and 0.5 with c = 1: S = 1/2, Q = q/2, T = q/4.
  CHECK(regeneration_probability(2.0, 1.0, 0.5, 1.0, 1.0) == doctest::Approx(1.0));
  CHECK(regeneration_probability(2.0, 1.0, 1.5, 1.0, 1e-12) < 1e-11);
  CHECK(regeneration_probability(0.0, 1.0, 1.0, 1.0, 1.0) == 0.0);
  CHECK(regeneration_probability(1.0, 1.0, INFINITY, 1.0, 1.0) == 0.0);
  CHECK(regeneration_probability_log(NAN, 0.0, 0.0) == 0.0);
}

TEST_CASE("r grows linearly with c while S is unsaturated") {
  // Ratios 4 and 8: S = c/4, Q and T saturate at q.
  const double r1 = regeneration_probability(4.0, 1.0, 8.0, 1.0, 1.0);
  const double r2 = regeneration_probability(4.0, 1.0, 8.0, 1.0, 2.0);
  CHECK(r1 == doctest::Approx(0.25));
  CHECK(r2 == doctest::Approx(2.0 * r1));
}

TEST_CASE("r stays in the unit interval and both forms agree") {
  Rng rng(17);
  std::uniform_real_distribution<double> lu(-8.0, 8.0);
  for (int i = 0; i < 100000; ++i) {
    const double pt = std::exp(lu(rng)), qt = std::exp(lu(rng));
    const double pt1 = std::exp(lu(rng)), qt1 = std::exp(lu(rng));
    const double c = std::exp(lu(rng));
    const double r = regeneration_probability(pt, qt, pt1, qt1, c);
    REQUIRE(r >= 0.0);
    REQUIRE(r <= 1.0);
    const double rl = regeneration_probability_log(std::log(pt / qt), std::log(pt1 / qt1), std::log(c));
    REQUIRE(std::abs(r - rl) <= 1e-10);
  }
}

TEST_CASE("independence proposal") {
  CHECK_THROWS(IndependenceProposal(ModeRegistry{}, 1.0));
  const auto g = gmm_generate_benchmark(2, 2, WeightScheme::proportional, 3);
  const auto reg = registry_from(g, 2);
  const IndependenceProposal q(reg, 1.0);
  CHECK_THROWS(IndependenceProposal(reg, 0.0));
  // A full set of exact gaussian models reproduces the mixture.
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Vec x = g.sample(rng);
    CHECK(q.log_density(x) == doctest::Approx(g.log_density(x)).epsilon(1e-5));
  }
  int first = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec y = q.sample(rng);
    if ((y - g.means()[0]).norm() < (y - g.means()[1]).norm()) ++first;
  }
  CHECK(first / 20000.0 == doctest::Approx(g.weights()[0]).epsilon(0.05));
}

TEST_CASE("a near-perfect proposal regenerates often") {
  GaussianMixture normal({1.0}, {Vec::Zero(3)}, {Mat::Identity(3, 3)});
  const auto reg = registry_from(normal, 1);
  const auto q = build_independence_proposal(reg, normal);
  CHECK(q.c() == doctest::Approx(1.0).epsilon(1e-5));

  HmcParams params;
  params.step_size = 0.4;
  params.steps = 4;
  auto chain = make_chain(normal, Vec::Zero(3), Rng(4));
  double sum = 0.0;
  Vec prev = chain.x;
  for (int i = 0; i < 1000; ++i) {
    hmc_step(chain, normal, params);
    sum += regeneration_probability_log(normal.log_density(prev) - q.log_density(prev),
                                        chain.log_density - q.log_density(chain.x), q.log_c());
    prev = chain.x;
  }
  CHECK(sum / 1000 >= 0.5);
}

TEST_CASE("a proposal missing a mode rarely regenerates") {
  const auto g = gmm_generate_benchmark(4, 2, WeightScheme::equal, 7);
  HmcParams params;
  params.step_size = 0.4;
  params.steps = 4;

  // HMC step, then an independence step whose transition the formula
  // describes; a rejected proposal cannot regenerate. c comes from the
  // chain's own recent states, as in the sampler.
  const auto per_step_r = [&](std::size_t registered, const Vec& start) {
    auto chain = make_chain(g, start, Rng(10));
    std::vector<Vec> recent;
    for (int i = 0; i < 200; ++i) {
      hmc_step(chain, g, params);
      recent.push_back(chain.x);
    }
    const auto q = build_independence_proposal(registry_from(g, registered), g, recent);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i) {
      hmc_step(chain, g, params);
      const Vec y = q.sample(chain.rng);
      const double wx = chain.log_density - q.log_density(chain.x);
      const double wy = g.log_density(y) - q.log_density(y);
      if (std::log(unit(chain.rng)) < wy - wx) {
        sum += regeneration_probability_log(wx, wy, q.log_c());
        chain = make_chain(g, y, chain.rng);
      }
    }
    return sum / 1000;
  };

  const Vec& uncovered = g.means()[1];
  CHECK(per_step_r(2, uncovered) >= 10.0 * per_step_r(1, uncovered));
  // Inside the covered mode the half proposal is locally exact.
  CHECK(per_step_r(1, g.means()[0]) == doctest::Approx(per_step_r(2, g.means()[0])).epsilon(0.1));

  // Exact draws mixing over both modes lose regenerations too, by less.
  Rng rng(8);
  std::vector<Vec> mixed;
  for (int i = 0; i < 200; ++i) mixed.push_back(g.sample(rng));
  const auto half = build_independence_proposal(registry_from(g, 1), g, mixed);
  const auto full = build_independence_proposal(registry_from(g, 2), g, mixed);
  CHECK(mean_r(g, full, 2000, 9) > mean_r(g, half, 2000, 9));
}

TEST_CASE("names round trip") {
  for (auto m : {ScheduleMode::all_modes_first, ScheduleMode::on_the_fly, ScheduleMode::forced_update}) {
    CHECK(schedule_mode_from_string(to_string(m)) == m);
  }
  CHECK(sampler_kind_from_string("hmc") == SamplerKind::hmc);
  CHECK(clock_kind_from_string("wall") == ClockKind::wall);
  CHECK_THROWS(schedule_mode_from_string("sometimes"));
}

TEST_CASE("config contradictions are rejected before any work") {
  auto cfg = quick_config();
  cfg.schedule.mode = ScheduleMode::forced_update;
  cfg.schedule.period = 0;
  const auto g = gmm_generate_benchmark(2, 2, WeightScheme::equal, 1);
  CountingTarget counted(std::make_shared<GaussianMixture>(g));
  CHECK_THROWS(run_sampler(counted, cfg));
  CHECK(counted.evaluations() == 0);
}

TEST_CASE("with its features off the orchestrator is plain hmc") {
  const auto g = gmm_generate_benchmark(3, 3, WeightScheme::equal, 2);
  for (auto kind : {SamplerKind::hmc, SamplerKind::whmc}) {
    auto cfg = quick_config();
    cfg.sampler = kind;
    cfg.chains = 1;
    cfg.warmup = 0;
    cfg.mode_search = false;
    cfg.regeneration = false;
    cfg.store_samples = true;
    const auto res = run_sampler(g, cfg);

    Rng rng = make_stream(cfg.seed, 0);
    const Vec x0 = chain_start(g, rng);
    auto chain = make_chain(g, x0, std::move(rng));
    REQUIRE(res.samples[0].size() == 1000);
    for (int i = 0; i < 1000; ++i) {
      hmc_step(chain, g, cfg.hmc);
      REQUIRE(res.samples[0][i].x == chain.x);
      REQUIRE(res.samples[0][i].tag == 0);
    }
  }
}

TEST_CASE("all-modes-first tags every sample with the full registry") {
  const auto g = gmm_generate_benchmark(10, 5, WeightScheme::equal, 1);
  auto cfg = quick_config();
  cfg.store_samples = true;
  const auto res = run_sampler(g, cfg);
  CHECK(res.registry.size() == 5);
  REQUIRE(res.moments.size() == 1);
  CHECK(res.moments.begin()->first == 5);
  for (const auto& chain : res.samples) {
    for (const auto& s : chain) REQUIRE(s.tag == 5);
  }
  CHECK_FALSE(res.diagnostics.empty());
  CHECK(res.jumps_attempted > 0);
}

TEST_CASE("on-the-fly runs sample before the registry is complete") {
  const auto g = gmm_generate_benchmark(10, 5, WeightScheme::equal, 1);
  auto cfg = quick_config();
  cfg.schedule.mode = ScheduleMode::on_the_fly;
  cfg.store_samples = true;
  const auto res = run_sampler(g, cfg);
  REQUIRE_FALSE(res.moments.empty());
  CHECK(res.moments.begin()->first < 5);
  for (const auto& chain : res.samples) {
    for (std::size_t i = 1; i < chain.size(); ++i) REQUIRE(chain[i].tag >= chain[i - 1].tag);
  }
}

TEST_CASE("forced updates search on schedule") {
  const auto g = gmm_generate_benchmark(2, 2, WeightScheme::equal, 4);
  auto cfg = quick_config();
  cfg.schedule.mode = ScheduleMode::forced_update;
  cfg.schedule.period = 100;
  cfg.regeneration_c = 1e-300;  // keeps r essentially at zero
  const auto res = run_sampler(g, cfg);
  for (std::size_t c = 0; c < cfg.chains; ++c) {
    std::vector<long> steps;
    for (const auto& e : res.events) {
      if (e.chain == c && e.triggered) steps.push_back(e.step);
    }
    REQUIRE(steps.size() >= 10);
    long prev = 0;
    for (long s : steps) {
      CHECK(s - prev <= 100);
      prev = s;
    }
  }
  std::ostringstream out;
  write_regeneration_csv(out, res.events);
  CHECK(out.str().rfind("chain,step,r,triggered,registry_before,registry_after\n", 0) == 0);
}

TEST_CASE("results do not depend on the worker count") {
  const auto g = gmm_generate_benchmark(3, 3, WeightScheme::proportional, 5);
  auto cfg = quick_config();
  cfg.schedule.mode = ScheduleMode::on_the_fly;
  cfg.chains = 3;
  cfg.workers = 1;
  const auto a = run_sampler(g, cfg);
  cfg.workers = 3;
  const auto b = run_sampler(g, cfg);
  CHECK(a.pooled().mean() == b.pooled().mean());
  CHECK(a.registry.size() == b.registry.size());
  CHECK(a.events.size() == b.events.size());
  std::ostringstream da, db;
  a.diagnostics.write_csv(da);
  b.diagnostics.write_csv(db);
  CHECK(da.str() == db.str());
}
