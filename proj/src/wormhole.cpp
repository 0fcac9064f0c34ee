#include "mmc/wormhole.hpp"

#include <cmath>
#include <stdexcept>

namespace mmc {

void WormholeParams::validate() const {
  if (!(influence > 0.0)) throw std::invalid_argument("wormhole: F must be > 0");
  if (!(epsilon_w > 0.0 && epsilon_w <= 1.0)) {
    throw std::invalid_argument("wormhole: epsilon_w must be in (0,1]");
  }
  if (!(jump_prob >= 0.0 && jump_prob <= 1.0)) {
    throw std::invalid_argument("wormhole: jump_prob must be in [0,1]");
  }
  if (!(fixed_point_tol > 0.0) || fixed_point_max_iter < 1) {
    throw std::invalid_argument("wormhole: bad fixed-point settings");
  }
}

Wormhole Wormhole::connect(const Vec& start, const Vec& end, double epsilon_w,
                           double influence) {
  Wormhole w;
  w.start = start;
  w.end = end;
  w.length = (end - start).norm();
  if (!(w.length > 0.0)) {
    throw std::invalid_argument("Wormhole: endpoints must be distinct");
  }
  w.direction = (end - start) / w.length;
  w.epsilon_w = epsilon_w;
  w.influence = influence;
  return w;
}

namespace {

double detour(const Wormhole& w, const Vec& x) {
  const double excess = (x - w.start).norm() + (w.end - x).norm() - w.length;
  return std::max(0.0, excess);
}

}  // namespace

double mollifier(const Wormhole& w, const Vec& x) {
  return std::exp(-detour(w, x) / w.influence);
}

Vec mollifier_gradient(const Wormhole& w, const Vec& x) {
  Vec g = Vec::Zero(x.size());
  const Vec a = x - w.start;
  const Vec b = x - w.end;
  const double na = a.norm();
  const double nb = b.norm();
  if (na > 0.0) g += a / na;
  if (nb > 0.0) g += b / nb;
  return -(mollifier(w, x) / w.influence) * g;
}

namespace {

// v v^T, symmetric bit for bit.
Mat outer(const Vec& v) {
  Mat o = v * v.transpose();
  return 0.5 * (o + o.transpose());
}

}  // namespace

Mat wormhole_metric(const Wormhole& w) {
  const auto d = w.direction.size();
  return Mat::Identity(d, d) - (1.0 - w.epsilon_w) * outer(w.direction);
}

ModeFrame ModeFrame::make(const Vec& location, const Mat& covariance) {
  ModeFrame f;
  f.location = location;
  f.chol = regularized_cholesky(covariance).lower;
  f.log_det_chol = f.chol.diagonal().array().log().sum();
  return f;
}

WormholeNetwork::WormholeNetwork(std::vector<ModeFrame> modes,
                                 const WormholeParams& params)
    : modes_(std::move(modes)), params_(params) {
  params_.validate();
  for (std::size_t a = 0; a < modes_.size(); ++a) {
    for (std::size_t b = a + 1; b < modes_.size(); ++b) {
      wormholes_.push_back(Wormhole::connect(modes_[a].location,
                                             modes_[b].location,
                                             params_.epsilon_w,
                                             params_.influence));
    }
  }
}

WormholeNetwork::Active WormholeNetwork::active(const Vec& x) const {
  Active best;
  double best_detour = std::numeric_limits<double>::infinity();
  for (const auto& w : wormholes_) {
    const double e = detour(w, x);
    if (e < best_detour) {
      best_detour = e;
      best.wormhole = &w;
    }
  }
  if (best.wormhole) best.m = std::exp(-best_detour / params_.influence);
  return best;
}

std::size_t WormholeNetwork::nearest_mode(const Vec& x) const {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    const double d = modes_[k]
                         .chol.triangularView<Eigen::Lower>()
                         .solve(x - modes_[k].location)
                         .squaredNorm();
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

Mat metric(const WormholeNetwork& net, const Vec& x) {
  const auto d = x.size();
  Mat g = Mat::Identity(d, d);
  const auto act = net.active(x);
  if (!act.wormhole) return g;
  g -= act.m * (1.0 - act.wormhole->epsilon_w) * outer(act.wormhole->direction);
  return g;
}

Vec vector_field(const WormholeNetwork& net, const Vec& x, const Vec& v) {
  const auto act = net.active(x);
  if (!act.wormhole) return Vec::Zero(x.size());
  const Vec& dir = act.wormhole->direction;
  return (act.m * v.dot(dir)) * dir;
}

namespace {

// log|det(I + s * d/dx f(x, v))| with f = m <v, v_W> v_W for fixed v. The
// derivative is rank one: <v, v_W> v_W grad(m)^T.
double log_abs_det_shear(const WormholeNetwork& net, const Vec& x,
                         const Vec& v, double s) {
  const auto act = net.active(x);
  if (!act.wormhole || act.m == 0.0) return 0.0;
  const Wormhole& w = *act.wormhole;
  const double c = v.dot(w.direction);
  const double dm = mollifier_gradient(w, x).dot(w.direction);
  return std::log(std::abs(1.0 + s * c * dm));
}

}  // namespace

GeneralizedLeapfrogResult generalized_leapfrog(
    const WormholeNetwork& net, const TargetDistribution& target, const Vec& x,
    double log_density, const Vec& grad, const Vec& v, double eps, int n) {
  GeneralizedLeapfrogResult out{x, v, log_density, grad, false, 0, 0.0};
  const auto& params = net.params();
  for (int step = 0; step < n; ++step) {
    out.v += (0.5 * eps) * out.grad;
    if (net.empty()) {
      out.x += eps * out.v;
    } else {
      const Vec f0 = vector_field(net, out.x, out.v);
      const Vec base = out.x + eps * (out.v + 0.5 * f0);
      const Vec predictor = out.x + eps * (out.v + f0);
      const Vec& vh = out.v;
      const auto solved = fixed_point_solve(
          [&](const Vec& z) -> Vec {
            return base + (0.5 * eps) * vector_field(net, z, vh);
          },
          predictor, params.fixed_point_tol, params.fixed_point_max_iter);
      out.iterations = std::max(out.iterations, solved.iterations);
      if (!solved.converged) return out;
      out.log_jacobian += log_abs_det_shear(net, out.x, out.v, 0.5 * eps) -
                          log_abs_det_shear(net, solved.solution, out.v,
                                            -0.5 * eps);
      out.x = solved.solution;
    }
    out.log_density = target.log_density_and_gradient(out.x, out.grad);
    if (!std::isfinite(out.log_density) || !all_finite(out.grad)) return out;
    out.v += (0.5 * eps) * out.grad;
  }
  out.ok = all_finite(out.x) && all_finite(out.v) &&
           std::isfinite(out.log_jacobian);
  return out;
}

GeneralizedLeapfrogResult generalized_leapfrog_step(
    const WormholeNetwork& net, const TargetDistribution& target, const Vec& x,
    const Vec& v, double eps) {
  Vec grad;
  const double lp = target.log_density_and_gradient(x, grad);
  if (!std::isfinite(lp)) return {x, v, lp, grad, false, 0, 0.0};
  return generalized_leapfrog(net, target, x, lp, grad, v, eps, 1);
}

double whmc_energy(const WormholeNetwork& net, double log_density,
                   const Vec& x, const Vec& v) {
  const auto act = net.active(x);
  if (!act.wormhole) return -log_density + 0.5 * v.squaredNorm();
  const double shrink = act.m * (1.0 - act.wormhole->epsilon_w);
  const double along = v.dot(act.wormhole->direction);
  double e = -log_density + 0.5 * (v.squaredNorm() - shrink * along * along);
  if (net.params().metric_logdet) e -= 0.5 * std::log1p(-shrink);
  return e;
}

bool wormhole_jump(ChainState& state, const TargetDistribution& target,
                   const WormholeNetwork& net) {
  const auto& modes = net.modes();
  if (modes.size() < 2) return false;
  const std::size_t from = net.nearest_mode(state.x);
  std::uniform_int_distribution<std::size_t> pick(0, modes.size() - 2);
  std::size_t to = pick(state.rng);
  if (to >= from) ++to;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(state.rng);

  const ModeFrame& a = modes[from];
  const ModeFrame& b = modes[to];
  const Vec standardized =
      a.chol.triangularView<Eigen::Lower>().solve(state.x - a.location);
  const Vec proposal = b.location + b.chol * standardized;
  if (net.nearest_mode(proposal) != to) return false;
  Vec grad;
  const double lp = target.log_density_and_gradient(proposal, grad);
  if (!std::isfinite(lp) || !all_finite(grad)) return false;
  const double log_ratio =
      lp - state.log_density + b.log_det_chol - a.log_det_chol;
  if (!(std::log(u) < log_ratio)) return false;
  state.x = proposal;
  state.log_density = lp;
  state.grad = std::move(grad);
  return true;
}

WhmcStepInfo whmc_step(ChainState& state, const TargetDistribution& target,
                       const WormholeNetwork& net, const HmcParams& params) {
  if (!params.mass.identity()) {
    throw std::invalid_argument("whmc_step: the metric replaces the mass matrix");
  }
  WhmcStepInfo info;
  auto& traj_info = info.trajectory;
  traj_info.step_size =
      jittered_step(params.step_size, params.jitter, state.rng);
  std::normal_distribution<double> normal;
  Vec v(state.x.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(state.rng);

  // v ~ N(0, G^-1): stretch the component along the active direction.
  const auto act = net.active(state.x);
  if (act.wormhole) {
    const double lambda = 1.0 - act.m * (1.0 - act.wormhole->epsilon_w);
    const Vec& dir = act.wormhole->direction;
    v += (1.0 / std::sqrt(lambda) - 1.0) * v.dot(dir) * dir;
  }
  const double e0 = whmc_energy(net, state.log_density, state.x, v);

  const auto traj =
      generalized_leapfrog(net, target, state.x, state.log_density,
                           state.grad, v, traj_info.step_size, params.steps);
  info.fixed_point_iterations = traj.iterations;
  traj_info.aborted = !traj.ok;
  if (traj.ok) {
    const double e1 = whmc_energy(net, traj.log_density, traj.x, traj.v);
    traj_info.accept_prob = acceptance_probability(e0, e1 - traj.log_jacobian);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(state.rng);
  ++state.proposed;
  if (traj.ok && u < traj_info.accept_prob) {
    state.x = traj.x;
    state.log_density = traj.log_density;
    state.grad = traj.grad;
    ++state.accepted;
    traj_info.accepted = true;
  }

  const auto& wp = net.params();
  if (net.modes().size() >= 2 && wp.jump_prob > 0.0) {
    if (unit(state.rng) < wp.jump_prob) {
      info.jump_attempted = true;
      info.jump_accepted = wormhole_jump(state, target, net);
    }
  }
  return info;
}

}  // namespace mmc
