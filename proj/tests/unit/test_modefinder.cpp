#include "mmc/modefinder.hpp"
#include "mmc/numerics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

using namespace mmc;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

GaussianMixture two_bumps() {
  return GaussianMixture({0.5, 0.5}, {v1(-5.0), v1(5.0)},
                         {Mat::Identity(1, 1), Mat::Identity(1, 1)});
}

// Registers the mode BFGS finds from `start`.
void register_from(const TargetDistribution& t, ModeRegistry& reg, const Vec& start) {
  const Objective lf{[&](const Vec& x) { return t.log_density(x); },
                     [&](const Vec& x) { return t.gradient(x); }};
  const auto opt = bfgs_maximize(lf, start);
  REQUIRE(opt.converged);
  Rng rng(1);
  reg.add(fit_mode_model(t, opt.maximizer, ModelKind::gaussian_from_hessian, HmcParams{}, 500, rng));
}

ModeRegistry all_modes(const GaussianMixture& g) {
  ModeRegistry reg;
  for (const auto& m : g.means()) register_from(g, reg, m);
  return reg;
}

double brute_kde(const std::vector<Vec>& centers, const Mat& h, const Vec& x) {
  const Mat inv = h.inverse();
  const double d = static_cast<double>(x.size());
  const double norm = std::pow(2.0 * std::numbers::pi, -d / 2) / std::sqrt(h.determinant());
  double sum = 0.0;
  for (const auto& c : centers) sum += norm * std::exp(-0.5 * (x - c).dot(inv * (x - c)));
  return sum / static_cast<double>(centers.size());
}

}  // namespace

TEST_CASE("kde matches a direct sum") {
  Rng rng(3);
  std::normal_distribution<double> n01;
  std::vector<Vec> centers;
  for (int i = 0; i < 40; ++i) centers.push_back(Vec::NullaryExpr(3, [&] { return n01(rng); }));
  Mat h(3, 3);
  h << 0.5, 0.1, 0.0, 0.1, 0.4, 0.05, 0.0, 0.05, 0.3;
  const KdeModel kde(centers, h);
  for (int i = 0; i < 20; ++i) {
    const Vec x = Vec::NullaryExpr(3, [&] { return 1.5 * n01(rng); });
    const double direct = brute_kde(centers, h, x);
    CHECK(std::exp(kde.log_density(x)) == doctest::Approx(direct).epsilon(1e-10));
    Vec g;
    kde.log_density_and_gradient(x, g);
    const Vec fd = finite_diff_gradient([&](const Vec& z) { return kde.log_density(z); }, x, 1e-6);
    CHECK((g - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("silverman bandwidth") {
  std::vector<Vec> s = {v1(0.0), v1(1.0), v1(2.0), v1(3.0)};
  const auto kde = KdeModel::silverman(s);
  // Sample variance 5/3, factor (4 / (3 * 4))^(2/5).
  CHECK(kde.bandwidth()(0, 0) == doctest::Approx(5.0 / 3.0 * std::pow(1.0 / 3.0, 0.4)).epsilon(1e-12));
  CHECK_THROWS(KdeModel::silverman({v1(1.0)}));
}

TEST_CASE("mode density estimate") {
  ModeRegistry empty;
  CHECK(mode_density_estimate(empty, Vec::Zero(2)) == 0.0);

  Mat s(2, 2);
  s << 2.0, 0.3, 0.3, 1.0;
  GaussianMixture single({1.0}, {Vec::Zero(2)}, {s});
  ModeRegistry one;
  register_from(single, one, Vec::Constant(2, 0.5));
  REQUIRE(one.size() == 1);
  CHECK(one[0].weight == 1.0);
  const double peak = one[0].weight / (2.0 * std::numbers::pi * std::sqrt(s.determinant()));
  CHECK(mode_density_estimate(one, one[0].location) == doctest::Approx(peak).epsilon(1e-5));
}

TEST_CASE("registered gaussian model reproduces its component") {
  const auto g = gmm_generate_benchmark(4, 3, WeightScheme::proportional, 8);
  ModeRegistry reg;
  register_from(g, reg, g.means()[1] + Vec::Constant(4, 0.2));
  Rng rng(6);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 100; ++i) {
    Vec z = Vec::NullaryExpr(4, [&] { return n01(rng); });
    z *= std::uniform_real_distribution<double>(0.0, 2.0)(rng) / z.norm();
    const Vec x = g.means()[1] + z;
    const double truth = std::exp(g.component_log_density(1, x));
    CHECK(mode_density_estimate(reg, x) == doctest::Approx(truth).epsilon(0.05));
  }
}

TEST_CASE("residual objective with an empty registry keeps the argmax") {
  const auto g = two_bumps();
  GaussianMixture lopsided({0.3, 0.7}, {v1(-5.0), v1(5.0)}, {Mat::Identity(1, 1), Mat::Identity(1, 1)});
  ModeRegistry empty;
  const auto phi = residual_objective(lopsided, empty, default_residual_floor(empty));
  double best_phi = -INFINITY, best_f = -INFINITY, at_phi = 0, at_f = 0;
  for (int i = 0; i <= 20000; ++i) {
    const double x = -10.0 + i * 1e-3;
    const double p = phi.value(v1(x));
    const double f = lopsided.log_density(v1(x));
    if (p > best_phi) { best_phi = p; at_phi = x; }
    if (f > best_f) { best_f = f; at_f = x; }
  }
  CHECK(at_phi == at_f);
  CHECK(phi.value(v1(1.0)) == lopsided.log_density(v1(1.0)));
}

TEST_CASE("residual objective suppresses a registered mode") {
  const auto g = two_bumps();
  ModeRegistry reg;
  register_from(g, reg, v1(4.0));
  const double delta = default_residual_floor(reg);
  const auto phi = residual_objective(g, reg, delta);

  const double depressed = phi.value(v1(5.0));
  const double open = phi.value(v1(-5.0));
  CHECK(open - depressed >= g.log_density(v1(-5.0)) - std::log(delta) - 1.0);

  double best = -INFINITY, at = 0.0;
  for (int i = 0; i <= 20000; ++i) {
    const double x = -10.0 + i * 1e-3;
    const double p = phi.value(v1(x));
    if (p > best) { best = p; at = x; }
  }
  CHECK(std::abs(at + 5.0) <= 0.1);

  // Analytic gradient against finite differences.
  for (double x : {-7.0, -2.0, 0.5, 3.0, 6.0}) {
    const Vec fd = finite_diff_gradient(phi.value, v1(x), 1e-6);
    CHECK(phi.gradient(v1(x))[0] == doctest::Approx(fd[0]).epsilon(1e-5));
  }
  CHECK_THROWS(residual_objective(g, reg, 0.0));
}

TEST_CASE("geodesic is a straight line on a flat field") {
  const Objective flat{[](const Vec&) { return 2.0; },
                       [](const Vec& x) { return Vec(Vec::Zero(x.size())); }};
  const Vec x0 = (Vec(2) << 1.0, -1.0).finished();
  const Vec v0 = (Vec(2) << 0.6, 0.8).finished();
  const Vec end = geodesic_start_proposal(flat, x0, v0, 100, 0.05, 1.0);
  CHECK((end - (x0 + 100 * 0.05 * v0)).norm() < 1e-12);
}

TEST_CASE("geodesic never returns a worse point than its start") {
  const Objective bowl{[](const Vec& x) { return -x.squaredNorm(); },
                       [](const Vec& x) { return Vec(-2.0 * x); }};
  const Vec x0 = (Vec(2) << 3.0, 0.0).finished();
  Rng rng(9);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 20; ++i) {
    Vec v0 = Vec::NullaryExpr(2, [&] { return n01(rng); });
    v0.normalize();
    const Vec best = geodesic_start_proposal(bowl, x0, v0, 200, 0.05, 0.5);
    CHECK(bowl.value(best) >= bowl.value(x0));
  }
}

TEST_CASE("geodesic crosses into the unexplored basin") {
  const auto g = two_bumps();
  ModeRegistry reg;
  register_from(g, reg, v1(4.0));
  const auto phi = residual_objective(g, reg, default_residual_floor(reg));
  const Vec left = geodesic_start_proposal(phi, v1(4.0), v1(-1.0), 400, 0.05, 1.0);
  const Vec right = geodesic_start_proposal(phi, v1(4.0), v1(1.0), 400, 0.05, 1.0);
  CHECK((left[0] < 0.0 || right[0] < 0.0));
}

TEST_CASE("find_new_mode in one dimension") {
  const auto g = two_bumps();
  ModeRegistry reg;
  register_from(g, reg, v1(4.0));
  const long before = reg.n_bfgs;
  Rng rng(2);
  ModeFinderConfig cfg;
  const auto found = find_new_mode(g, reg, 3, cfg, HmcParams{}, rng);
  REQUIRE(found.index);
  // Root of the mixture gradient near -5, located by bisection.
  const auto slope = [&](double x) { return g.gradient(v1(x))[0]; };
  double lo = -6.0, hi = -4.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > 0.0 ? lo : hi) = mid;
  }
  CHECK(std::abs(reg[*found.index].location[0] - lo) <= 1e-4);
  CHECK(reg.n_bfgs - before == 1);
  CHECK(reg[*found.index].index == 2);
}

TEST_CASE("nothing left to find") {
  const auto g = gmm_generate_benchmark(10, 5, WeightScheme::equal, 1);
  auto reg = all_modes(g);
  const auto locations = reg.records();
  Rng rng(1);
  const auto res = find_new_mode(g, reg, 3, ModeFinderConfig{}, HmcParams{}, rng);
  CHECK_FALSE(res.index);
  CHECK(res.attempts == 3);
  CHECK(reg.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(reg[k].location == locations[k].location);
}

TEST_CASE("desk mixture modes are genuine and distinct") {
  const auto g = gmm_generate_benchmark(10, 5, WeightScheme::equal, 4);
  ModeRegistry reg;
  Rng rng(make_stream(4, 1));
  ModeFinderConfig cfg;
  while (find_new_mode(g, reg, cfg.budget, cfg, HmcParams{}, rng).index) {
  }
  CHECK(reg.size() == 5);
  for (std::size_t a = 0; a < reg.size(); ++a) {
    CHECK(g.gradient(reg[a].location).norm() <= 1e-6);
    CHECK(reg[a].index == a + 1);
    for (std::size_t b = a + 1; b < reg.size(); ++b) {
      CHECK((reg[a].location - reg[b].location).norm() > 0.5);
    }
  }
  double total = 0.0;
  for (const auto& r : reg.records()) total += r.weight;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fitted gaussian models") {
  GaussianMixture normal({1.0}, {Vec::Zero(3)}, {Mat::Identity(3, 3)});
  Rng rng(1);
  const auto r = fit_mode_model(normal, Vec::Zero(3), ModelKind::gaussian_from_hessian, HmcParams{}, 500, rng);
  CHECK(r.kind == ModelKind::gaussian_from_hessian);
  CHECK((r.covariance - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(r.log_mass == doctest::Approx(0.0).epsilon(1e-6));

  Mat s = Mat::Zero(2, 2);
  s.diagonal() << 1.0, 4.0;
  GaussianMixture stretched({0.5, 0.5}, {Vec::Zero(2), Vec::Constant(2, 30.0)}, {s, s});
  const auto fit = fit_mode_model(stretched, Vec::Zero(2), ModelKind::gaussian_from_hessian, HmcParams{}, 500, rng);
  CHECK(fit.covariance(0, 0) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(fit.covariance(1, 1) == doctest::Approx(4.0).epsilon(0.02));
  CHECK(std::abs(fit.covariance(0, 1)) <= 0.02);

  const auto g = gmm_generate_benchmark(2, 2, WeightScheme::equal, 7);
  const auto reg = all_modes(g);
  const double ratio = reg[0].weight / reg[1].weight;
  CHECK(ratio >= 0.8);
  CHECK(ratio <= 1.25);
}

TEST_CASE("kde model from local samples") {
  GaussianMixture normal({1.0}, {Vec::Zero(2)}, {Mat::Identity(2, 2)});
  Rng rng(4);
  HmcParams hmc;
  hmc.step_size = 0.3;
  hmc.steps = 5;
  const auto r = fit_mode_model(normal, Vec::Zero(2), ModelKind::kde_from_samples, hmc, 500, rng);
  CHECK(r.kind == ModelKind::kde_from_samples);
  REQUIRE(r.kde);
  CHECK(r.kde->centers().size() == 500);
  CHECK(r.covariance(0, 0) == doctest::Approx(1.0).epsilon(0.3));
  CHECK(r.covariance(1, 1) == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("registry bookkeeping and text form") {
  const auto g = gmm_generate_benchmark(3, 3, WeightScheme::proportional, 2);
  auto reg = all_modes(g);
  reg.n_bfgs = 7;
  CHECK(reg.duplicate_of(g.means()[2] + Vec::Constant(3, 0.01), 0.5) == std::optional<std::size_t>(2));
  CHECK_FALSE(reg.duplicate_of(g.means()[2] + Vec::Constant(3, 2.0), 0.5));

  std::stringstream io;
  reg.write(io, "preset:gmm-x:1");
  const std::string text = io.str();
  CHECK(text.rfind("# mmc mode registry", 0) == 0);
  std::string desc;
  const auto back = ModeRegistry::read(io, &desc);
  CHECK(desc == "preset:gmm-x:1");
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back[k].index == k + 1);
    CHECK(back[k].location == reg[k].location);
    CHECK(back[k].covariance == reg[k].covariance);
    CHECK(back[k].weight == doctest::Approx(reg[k].weight).epsilon(1e-15));
  }
}

TEST_CASE("fictitious mode audit") {
  const auto g = gmm_generate_benchmark(10, 5, WeightScheme::equal, 2);
  auto reg = all_modes(g);
  const auto clean = fictitious_mode_audit(g, reg);
  REQUIRE(clean.size() == 5);
  for (const auto& row : clean) {
    CHECK(row.ok);
    CHECK(row.delta_x == 0.0);
  }
  CHECK(clean.back().cumulative <= 5e-4);

  Vec offset = Vec::Zero(10);
  offset[3] = 0.5;
  reg.replace_location(2, reg[2].location + offset);
  const auto poisoned = fictitious_mode_audit(g, reg);
  CHECK(poisoned[2].delta_x == doctest::Approx(0.5).epsilon(0.05));
  CHECK(poisoned[4].cumulative == doctest::Approx(poisoned[2].delta_x).epsilon(1e-9));

  std::ostringstream csv;
  write_audit_csv(csv, poisoned);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "k,delta_x,cumulative");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
  }
  CHECK(rows == 5);

  CHECK_THROWS(fictitious_mode_audit(g, ModeRegistry{}));
}

TEST_CASE("model kind names") {
  CHECK(std::string(to_string(ModelKind::kde_from_samples)) == "kde-from-samples");
  CHECK(model_kind_from_string("gaussian-from-hessian") == ModelKind::gaussian_from_hessian);
  CHECK_THROWS(model_kind_from_string("spline"));
}
