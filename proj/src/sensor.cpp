#include "mmc/keyvalue.hpp"
#include "mmc/target.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace mmc {

SensorNetwork::SensorNetwork(std::size_t sensors, double range, double sigma,
                             std::vector<SensorPair> pairs,
                             std::vector<PinnedSensor> pinned,
                             double support_lo, double support_hi)
    : sensors_(sensors),
      range_(range),
      sigma_(sigma),
      pinned_(std::move(pinned)),
      lo_(support_lo),
      hi_(support_hi) {
  if (sensors_ < 2) throw std::invalid_argument("SensorNetwork: need >= 2 sensors");
  if (!(range_ > 0.0)) throw std::invalid_argument("SensorNetwork: R must be > 0");
  if (!(sigma_ >= 0.0)) throw std::invalid_argument("SensorNetwork: sigma must be >= 0");
  if (!(hi_ > lo_)) throw std::invalid_argument("SensorNetwork: empty support");

  // Complete, ordered pair list; unlisted pairs are unobserved.
  std::map<std::pair<std::size_t, std::size_t>, SensorPair> given;
  for (auto p : pairs) {
    if (p.i == p.j || p.i >= sensors_ || p.j >= sensors_) {
      throw std::invalid_argument("SensorNetwork: bad pair index");
    }
    if (p.i > p.j) std::swap(p.i, p.j);
    if (p.observed && !(p.distance >= 0.0)) {
      throw std::invalid_argument("SensorNetwork: negative distance");
    }
    if (!p.observed) p.distance = 0.0;
    given[{p.i, p.j}] = p;
  }
  for (std::size_t i = 0; i < sensors_; ++i) {
    for (std::size_t j = i + 1; j < sensors_; ++j) {
      auto it = given.find({i, j});
      pairs_.push_back(it != given.end() ? it->second
                                         : SensorPair{i, j, false, 0.0});
    }
  }

  slot_.assign(sensors_, 0);
  for (const auto& p : pinned_) {
    if (p.index >= sensors_) throw std::invalid_argument("SensorNetwork: bad pin");
    slot_[p.index] = -1;
  }
  for (std::size_t s = 0; s < sensors_; ++s) {
    if (slot_[s] == -1) continue;
    slot_[s] = static_cast<long>(free_.size());
    free_.push_back(s);
  }
  if (free_.empty()) throw std::invalid_argument("SensorNetwork: every sensor pinned");
}

std::vector<Eigen::Vector2d> SensorNetwork::positions(const Vec& x) const {
  std::vector<Eigen::Vector2d> pos(sensors_);
  for (const auto& p : pinned_) pos[p.index] = p.position;
  for (std::size_t f = 0; f < free_.size(); ++f) {
    pos[free_[f]] = x.segment<2>(static_cast<Eigen::Index>(2 * f));
  }
  return pos;
}

Vec SensorNetwork::coordinates(
    const std::vector<Eigen::Vector2d>& positions) const {
  Vec x(static_cast<Eigen::Index>(2 * free_.size()));
  for (std::size_t f = 0; f < free_.size(); ++f) {
    x.segment<2>(static_cast<Eigen::Index>(2 * f)) = positions[free_[f]];
  }
  return x;
}

double SensorNetwork::evaluate(const Vec& x, Vec* grad) const {
  if (static_cast<std::size_t>(x.size()) != dimension()) {
    throw std::invalid_argument("SensorNetwork: dimension mismatch");
  }
  if (!(sigma_ > 0.0)) {
    throw std::domain_error("SensorNetwork: density undefined for sigma = 0");
  }
  if ((x.array() < lo_).any() || (x.array() > hi_).any() || !x.allFinite()) {
    return kLogZero;
  }
  const auto pos = positions(x);
  const double r2_scale = 1.0 / (range_ * range_);
  const double s2 = sigma_ * sigma_;
  const double log_noise_norm =
      -std::log(sigma_ * std::sqrt(2.0 * std::numbers::pi));
  if (grad) *grad = Vec::Zero(x.size());

  double total = 0.0;
  for (const auto& p : pairs_) {
    const Eigen::Vector2d delta = pos[p.i] - pos[p.j];
    const double r = delta.norm();
    const double a = 0.5 * r * r * r2_scale;
    double slope = 0.0;  // d/dr of the pair term
    if (!p.observed) {
      if (r == 0.0) return kLogZero;
      total += std::log(-std::expm1(-a));
      slope = r * r2_scale / std::expm1(a);
    } else {
      const double resid = p.distance - r;
      total += -a - 0.5 * resid * resid / s2 + log_noise_norm;
      slope = -r * r2_scale + resid / s2;
    }
    if (grad && r > 0.0) {
      const Eigen::Vector2d g = slope * delta / r;
      if (slot_[p.i] >= 0) grad->segment<2>(2 * slot_[p.i]) += g;
      if (slot_[p.j] >= 0) grad->segment<2>(2 * slot_[p.j]) -= g;
    }
  }
  return total;
}

double SensorNetwork::log_density(const Vec& x) const {
  return evaluate(x, nullptr);
}

Vec SensorNetwork::gradient(const Vec& x) const {
  Vec g;
  if (evaluate(x, &g) == kLogZero) {
    throw std::domain_error("SensorNetwork: gradient at a zero-density point");
  }
  return g;
}

double SensorNetwork::log_density_and_gradient(const Vec& x, Vec& grad) const {
  return evaluate(x, &grad);
}

Box SensorNetwork::search_box() const {
  const auto d = static_cast<Eigen::Index>(dimension());
  return {Vec::Constant(d, lo_), Vec::Constant(d, hi_)};
}

std::string SensorNetwork::describe() const {
  std::ostringstream out;
  out << "sensor network N_s=" << sensors_ << " R=" << range_
      << " sigma=" << sigma_ << " pinned=" << pinned_.size();
  return out.str();
}

void SensorNetwork::write(std::ostream& out) const {
  out << sensors_ << ' ' << format_double(range_) << ' '
      << format_double(sigma_) << '\n';
  for (const auto& p : pairs_) {
    out << p.i << ' ' << p.j << ' ' << (p.observed ? 1 : 0) << ' '
        << format_double(p.distance) << '\n';
  }
  out << "box " << format_double(lo_) << ' ' << format_double(hi_) << '\n';
  for (const auto& p : pinned_) {
    out << "pin " << p.index << ' ' << format_double(p.position.x()) << ' '
        << format_double(p.position.y()) << '\n';
  }
  for (std::size_t s = 0; s < truth_.size(); ++s) {
    out << "truth " << s << ' ' << format_double(truth_[s].x()) << ' '
        << format_double(truth_[s].y()) << '\n';
  }
}

SensorNetwork SensorNetwork::read(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      const auto hash = out.find('#');
      if (hash != std::string::npos) out.resize(hash);
      out = trim(out);
      if (!out.empty()) return true;
    }
    return false;
  };
  auto bad = [&](const std::string& what) {
    return ConfigError("sensor file line " + std::to_string(line_no) + ": " +
                       what);
  };
  if (!next(line)) throw bad("missing header 'N_s R sigma'");
  std::size_t n = 0;
  double range = 0.0;
  double sigma = 0.0;
  {
    std::istringstream h(line);
    if (!(h >> n >> range >> sigma)) throw bad("malformed header");
  }
  std::vector<SensorPair> pairs;
  std::vector<PinnedSensor> pins;
  std::vector<Eigen::Vector2d> truth;
  double lo = -0.5;
  double hi = 1.5;
  while (next(line)) {
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "box") {
      if (!(ls >> lo >> hi)) throw bad("malformed box line");
    } else if (head == "pin" || head == "truth") {
      std::size_t idx = 0;
      double px = 0.0;
      double py = 0.0;
      if (!(ls >> idx >> px >> py)) throw bad("malformed " + head + " line");
      if (head == "pin") {
        pins.push_back({idx, Eigen::Vector2d(px, py)});
      } else {
        if (truth.size() <= idx) truth.resize(idx + 1);
        truth[idx] = Eigen::Vector2d(px, py);
      }
    } else {
      std::istringstream ps(line);
      SensorPair p;
      int o = 0;
      if (!(ps >> p.i >> p.j >> o >> p.distance)) throw bad("malformed pair line");
      p.observed = o != 0;
      pairs.push_back(p);
    }
  }
  SensorNetwork net(n, range, sigma, std::move(pairs), std::move(pins), lo, hi);
  if (truth.size() == n) net.set_truth(std::move(truth));
  return net;
}

SensorNetwork sensor_generate_instance(std::size_t sensors, double range,
                                       double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  std::vector<Eigen::Vector2d> truth(sensors);
  for (auto& t : truth) {
    const double px = unit(rng);
    const double py = unit(rng);
    t = Eigen::Vector2d(px, py);
  }
  std::vector<SensorPair> pairs;
  for (std::size_t i = 0; i < sensors; ++i) {
    for (std::size_t j = i + 1; j < sensors; ++j) {
      const double r = (truth[i] - truth[j]).norm();
      const double p_obs = std::exp(-r * r / (2.0 * range * range));
      const bool observed = unit(rng) < p_obs;
      const double noise = normal(rng);
      pairs.push_back({i, j, observed,
                       observed ? std::abs(r + sigma * noise) : 0.0});
    }
  }
  SensorNetwork net(sensors, range, sigma, std::move(pairs));
  net.set_truth(std::move(truth));
  return net;
}

}  // namespace mmc
