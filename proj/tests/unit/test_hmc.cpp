#include "mmc/hmc.hpp"
#include "mmc/target.hpp"

#include <doctest.h>

#include <cmath>

using namespace mmc;

namespace {

GaussianMixture standard_normal(Eigen::Index d) {
  return GaussianMixture({1.0}, {Vec::Zero(d)}, {Mat::Identity(d, d)});
}

double energy(const TargetDistribution& t, const Vec& x, const Vec& p) {
  return -t.log_density(x) + 0.5 * p.squaredNorm();
}

}  // namespace

TEST_CASE("leapfrog single step by hand") {
  const auto t = standard_normal(1);
  const auto r = leapfrog(t, Vec::Constant(1, 1.0), Vec::Constant(1, 0.0), 0.1, 1);
  REQUIRE(r.ok);
  CHECK(r.x[0] == doctest::Approx(0.995).epsilon(1e-14));
  CHECK(r.p[0] == doctest::Approx(-0.09975).epsilon(1e-14));
}

TEST_CASE("leapfrog with a vanishing step leaves the state alone") {
  const auto t = standard_normal(3);
  const Vec x = (Vec(3) << 0.3, -1.0, 2.0).finished();
  const Vec p = (Vec(3) << 1.0, 0.5, -0.2).finished();
  const auto r = leapfrog(t, x, p, 1e-12, 1);
  CHECK((r.x - x).norm() < 1e-10);
  CHECK((r.p - p).norm() < 1e-10);
}

TEST_CASE("harmonic oscillator stays on the shadow energy ellipse") {
  // Kick-drift-kick conserves p^2 / (1 - eps^2/4) + x^2 exactly for this
  // potential, which pins H between (1 - eps^2/4)/2 and 1/2.
  const auto t = standard_normal(1);
  const double eps = 0.1;
  Vec x = Vec::Constant(1, 1.0);
  Vec p = Vec::Constant(1, 0.0);
  for (int i = 0; i < 2000; ++i) {
    const auto r = leapfrog(t, x, p, eps, 1);
    x = r.x;
    p = r.p;
    const double shadow = p[0] * p[0] / (1.0 - eps * eps / 4.0) + x[0] * x[0];
    CHECK(shadow == doctest::Approx(1.0).epsilon(1e-12));
    const double h = 0.5 * (x[0] * x[0] + p[0] * p[0]);
    CHECK(h <= 0.5 + 1e-12);
    CHECK(h >= 0.5 * (1.0 - eps * eps / 4.0) - 1e-12);
  }
}

TEST_CASE("leapfrog is reversible") {
  const auto t = gmm_generate_benchmark(4, 3, WeightScheme::equal, 2);
  Rng rng(5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = t.means()[trial % 3] + 0.5 * Vec::NullaryExpr(4, [&] { return n01(rng); });
    const Vec p = Vec::NullaryExpr(4, [&] { return n01(rng); });
    const auto fwd = leapfrog(t, x, p, 0.05, 30);
    const auto back = leapfrog(t, fwd.x, -fwd.p, 0.05, 30);
    CHECK((back.x - x).norm() <= 1e-10);
    CHECK((back.p + p).norm() <= 1e-10);
  }
}

TEST_CASE("energy error is second order in the step size") {
  const auto t = standard_normal(2);
  const Vec x = (Vec(2) << 1.0, -0.5).finished();
  const Vec p = (Vec(2) << 0.3, 0.8).finished();
  const double h0 = energy(t, x, p);
  const double length = 1.0;
  const auto err = [&](double eps) {
    const int n = static_cast<int>(std::lround(length / eps));
    const auto r = leapfrog(t, x, p, eps, n);
    return std::abs(energy(t, r.x, r.p) - h0);
  };
  const double ratio = err(0.02) / err(0.01);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("leapfrog aborts on a non-finite gradient") {
  SensorNetwork s(2, 0.3, 0.02, {{0, 1, true, 0.3}});
  const Vec x = (Vec(4) << 1.4, 0.5, 0.2, 0.5).finished();
  const Vec p = (Vec(4) << 50.0, 0.0, 0.0, 0.0).finished();
  const auto r = leapfrog(s, x, p, 0.1, 5);
  CHECK_FALSE(r.ok);
}

TEST_CASE("acceptance probability") {
  CHECK(acceptance_probability(3.0, 3.0) == 1.0);
  CHECK(acceptance_probability(3.0, 3.0 + std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(acceptance_probability(3.0, 1.0) == 1.0);
  CHECK(acceptance_probability(3.0, INFINITY) == 0.0);
  CHECK(acceptance_probability(NAN, 1.0) == 0.0);
}

TEST_CASE("hmc samples a standard normal") {
  const auto t = standard_normal(2);
  HmcParams params;
  params.step_size = 0.3;
  params.steps = 5;
  auto chain = make_chain(t, Vec::Zero(2), make_stream(3, 0));
  Vec sum = Vec::Zero(2);
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    hmc_step(chain, t, params);
    sum += chain.x;
    sq += chain.x.squaredNorm();
  }
  CHECK((sum / n).norm() < 0.1);
  CHECK(sq / (2.0 * n) == doctest::Approx(1.0).epsilon(0.08));
  CHECK(chain.acceptance_rate() > 0.8);
}

TEST_CASE("make_chain rejects zero density starts") {
  SensorNetwork s(2, 0.3, 0.02, {});
  CHECK_THROWS_AS(make_chain(s, (Vec(4) << 0.2, 0.2, 0.2, 0.2).finished(), Rng(1)),
                  std::domain_error);
}

TEST_CASE("streams differ and repeat") {
  auto a = make_stream(1, 0);
  auto b = make_stream(1, 1);
  auto c = make_stream(1, 0);
  const auto av = a();
  CHECK(av != b());
  CHECK(av == c());
}

TEST_CASE("tuned step size lands in the acceptance band") {
  const auto t = standard_normal(10);
  HmcParams params;
  params.step_size = 0.1;
  params.steps = 15;
  const auto tuned = tune_step_size(t, params, 0.65, 5000, Vec::Zero(10), 1);
  CHECK(tuned.in_band);
  CHECK(tuned.steps_used <= 5000);

  // Fresh chain at the tuned parameters over 1e4 steps.
  auto chain = make_chain(t, tuned.final_position, make_stream(11, 0));
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += hmc_step(chain, t, tuned.params).accept_prob;
  const double mean = sum / 10000;
  CHECK(mean >= 0.6);
  CHECK(mean <= 0.7);
}

TEST_CASE("tuner shrinks an oversized step") {
  const auto t = standard_normal(10);
  HmcParams params;
  params.step_size = 100.0;
  params.steps = 1;
  const auto tuned = tune_step_size(t, params, 0.65, 5000, Vec::Zero(10), 2);
  REQUIRE(tuned.step_history.size() >= 4);
  for (int i = 1; i < 4; ++i) CHECK(tuned.step_history[i] < tuned.step_history[i - 1]);
}

TEST_CASE("tuner leaves an in-band step alone") {
  const auto t = standard_normal(10);
  HmcParams params;
  params.step_size = 0.1;
  params.steps = 15;
  const auto first = tune_step_size(t, params, 0.65, 5000, Vec::Zero(10), 1);
  REQUIRE(first.in_band);
  const auto second = tune_step_size(t, first.params, 0.65, 5000, Vec::Zero(10), 3);
  CHECK(second.in_band);
  // At most one multiplicative adjustment away.
  int changes = 0;
  for (std::size_t i = 1; i < second.step_history.size(); ++i) {
    if (second.step_history[i] != second.step_history[i - 1]) ++changes;
  }
  if (second.params.step_size != second.step_history.back()) ++changes;
  CHECK(changes <= 1);
}

TEST_CASE("hmc params validation") {
  HmcParams p;
  p.step_size = -1.0;
  CHECK_THROWS(p.validate());
  p.step_size = 0.1;
  p.steps = 0;
  CHECK_THROWS(p.validate());
}
