#include "mmc/hmc.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mmc {

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x6d6d63u};
  return Rng(seq);
}

MassMatrix::MassMatrix(const Mat& m)
    : identity_(false), m_(m), chol_(cholesky_spd(m)) {}

Vec MassMatrix::sample_momentum(const Vec& z) const {
  return identity_ ? z : Vec(chol_ * z);
}

Vec MassMatrix::velocity(const Vec& p) const {
  if (identity_) return p;
  return chol_.transpose().triangularView<Eigen::Upper>().solve(
      chol_.triangularView<Eigen::Lower>().solve(p));
}

double MassMatrix::kinetic(const Vec& p) const {
  if (identity_) return 0.5 * p.squaredNorm();
  return 0.5 * chol_.triangularView<Eigen::Lower>().solve(p).squaredNorm();
}

void HmcParams::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("HmcParams: step size must be > 0");
  if (steps < 1) throw std::invalid_argument("HmcParams: steps must be >= 1");
  if (!(jitter >= 0.0 && jitter < 1.0)) {
    throw std::invalid_argument("HmcParams: jitter must be in [0,1)");
  }
}

ChainState make_chain(const TargetDistribution& target, const Vec& x, Rng rng) {
  ChainState s;
  s.x = x;
  s.log_density = target.log_density_and_gradient(x, s.grad);
  if (s.log_density == kLogZero || !std::isfinite(s.log_density)) {
    throw std::domain_error("make_chain: start point has zero density");
  }
  s.rng = std::move(rng);
  return s;
}

LeapfrogResult leapfrog_from(const TargetDistribution& target, const Vec& x,
                             double log_density, const Vec& grad, const Vec& p,
                             double eps, int n, const MassMatrix& mass) {
  LeapfrogResult out{x, p, log_density, grad, false};
  for (int i = 0; i < n; ++i) {
    out.p += (0.5 * eps) * out.grad;
    if (mass.identity()) {
      out.x += eps * out.p;
    } else {
      out.x += eps * mass.velocity(out.p);
    }
    out.log_density = target.log_density_and_gradient(out.x, out.grad);
    if (!std::isfinite(out.log_density) || !all_finite(out.grad)) return out;
    out.p += (0.5 * eps) * out.grad;
  }
  out.ok = all_finite(out.x) && all_finite(out.p);
  return out;
}

LeapfrogResult leapfrog(const TargetDistribution& target, const Vec& x,
                        const Vec& p, double eps, int n,
                        const MassMatrix& mass) {
  Vec grad;
  const double lp = target.log_density_and_gradient(x, grad);
  if (!std::isfinite(lp)) return {x, p, lp, grad, false};
  return leapfrog_from(target, x, lp, grad, p, eps, n, mass);
}

double acceptance_probability(double h_current, double h_proposed) {
  const double diff = h_current - h_proposed;
  if (std::isnan(diff) || !std::isfinite(h_proposed)) return 0.0;
  return diff >= 0.0 ? 1.0 : std::exp(diff);
}

double jittered_step(double eps, double jitter, Rng& rng) {
  if (jitter <= 0.0) return eps;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return eps * (1.0 + jitter * (2.0 * unit(rng) - 1.0));
}

StepInfo hmc_step(ChainState& state, const TargetDistribution& target,
                  const HmcParams& params) {
  StepInfo info;
  info.step_size = jittered_step(params.step_size, params.jitter, state.rng);
  std::normal_distribution<double> normal;
  Vec z(state.x.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(state.rng);
  const Vec p = params.mass.sample_momentum(z);
  const double h0 = -state.log_density + params.mass.kinetic(p);

  const auto traj = leapfrog_from(target, state.x, state.log_density,
                                  state.grad, p, info.step_size, params.steps,
                                  params.mass);
  info.aborted = !traj.ok;
  if (traj.ok) {
    const double h1 = -traj.log_density + params.mass.kinetic(traj.p);
    info.accept_prob = acceptance_probability(h0, h1);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(state.rng);
  ++state.proposed;
  if (traj.ok && u < info.accept_prob) {
    state.x = traj.x;
    state.log_density = traj.log_density;
    state.grad = traj.grad;
    ++state.accepted;
    info.accepted = true;
  }
  return info;
}

TuneResult tune_step_size(const TargetDistribution& target,
                          const HmcParams& params, double goal,
                          int trial_steps, const Vec& start,
                          std::uint64_t seed, const TuneOptions& options) {
  if (!(goal > 0.0 && goal < 1.0)) {
    throw std::invalid_argument("tune_step_size: goal must be in (0,1)");
  }
  params.validate();
  TuneResult out;
  out.params = params;
  const double length = params.trajectory_length();
  auto chain = make_chain(target, start, make_stream(seed, 0x74756e65ull));

  double log_eps = std::log(params.step_size);
  int in_band_windows = 0;
  int window_index = 0;
  while (out.steps_used + options.window <= trial_steps) {
    double sum = 0.0;
    for (int i = 0; i < options.window; ++i) {
      sum += hmc_step(chain, target, out.params).accept_prob;
    }
    out.steps_used += options.window;
    ++window_index;
    out.trailing_acceptance = sum / options.window;
    out.step_history.push_back(out.params.step_size);

    if (std::abs(out.trailing_acceptance - goal) <= options.tolerance) {
      if (++in_band_windows >= options.confirm_windows) {
        out.in_band = true;
        break;
      }
      continue;
    }
    in_band_windows = 0;
    const double gain =
        options.gain / std::pow(static_cast<double>(window_index),
                                options.gain_decay);
    log_eps += gain * (out.trailing_acceptance - goal);
    out.params.step_size = std::exp(log_eps);
    out.params.steps = std::max(
        1, static_cast<int>(std::lround(length / out.params.step_size)));
  }
  out.final_position = chain.x;
  return out;
}

}  // namespace mmc
