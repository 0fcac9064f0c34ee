#include "mmc/modefinder.hpp"

#include "mmc/keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mmc {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_density(const Vec& x, const Vec& mean, const Mat& chol) {
  const Vec z = chol.triangularView<Eigen::Lower>().solve(x - mean);
  return -static_cast<double>(x.size()) * kHalfLog2Pi -
         chol.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

Vec standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal;
  Vec z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
  return z;
}

Mat sample_covariance(const std::vector<Vec>& samples) {
  const auto d = samples.front().size();
  Vec mean = Vec::Zero(d);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Mat cov = Mat::Zero(d, d);
  for (const auto& s : samples) {
    const Vec c = s - mean;
    cov += c * c.transpose();
  }
  return cov / static_cast<double>(std::max<std::size_t>(1, samples.size() - 1));
}

Objective log_target_objective(const TargetDistribution& target) {
  return {[&target](const Vec& x) { return target.log_density(x); },
          [&target](const Vec& x) -> Vec {
            Vec g;
            const double lp = target.log_density_and_gradient(x, g);
            if (!std::isfinite(lp)) {
              return Vec::Constant(x.size(),
                                   std::numeric_limits<double>::quiet_NaN());
            }
            return g;
          }};
}

// Covariance as the inverse of the negated Hessian of log f, regularized.
std::optional<Mat> hessian_covariance(const TargetDistribution& target,
                                      const Vec& x) {
  try {
    const Mat hess = finite_diff_symmetric_jacobian(
        [&target](const Vec& z) { return target.gradient(z); }, x,
        default_fd_step(x));
    const Mat precision = -hess;
    const Mat lp = regularized_cholesky(precision).lower;
    const auto d = x.size();
    const Mat lp_inv =
        lp.triangularView<Eigen::Lower>().solve(Mat::Identity(d, d));
    Mat cov = lp_inv.transpose() * lp_inv;
    return Mat(0.5 * (cov + cov.transpose()));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

const char* to_string(ModelKind kind) {
  return kind == ModelKind::gaussian_from_hessian ? "gaussian-from-hessian"
                                                  : "kde-from-samples";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gaussian-from-hessian" || s == "gaussian") {
    return ModelKind::gaussian_from_hessian;
  }
  if (s == "kde-from-samples" || s == "kde") return ModelKind::kde_from_samples;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

// ---------------------------------------------------------------------------

KdeModel::KdeModel(std::vector<Vec> centers, const Mat& bandwidth)
    : centers_(std::move(centers)), bandwidth_(bandwidth) {
  if (centers_.empty()) throw std::invalid_argument("KdeModel: no centers");
  chol_ = regularized_cholesky(bandwidth_).lower;
  log_norm_ = -static_cast<double>(bandwidth_.rows()) * kHalfLog2Pi -
              chol_.diagonal().array().log().sum() -
              std::log(static_cast<double>(centers_.size()));
  Mat c(bandwidth_.rows(), static_cast<Eigen::Index>(centers_.size()));
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    c.col(static_cast<Eigen::Index>(i)) = centers_[i];
  }
  whitened_ = chol_.triangularView<Eigen::Lower>().solve(c);
}

KdeModel KdeModel::silverman(std::vector<Vec> samples) {
  if (samples.size() < 2) {
    throw std::invalid_argument("KdeModel::silverman: need >= 2 samples");
  }
  const double d = static_cast<double>(samples.front().size());
  const double n = static_cast<double>(samples.size());
  const double factor = std::pow(4.0 / ((d + 2.0) * n), 2.0 / (d + 4.0));
  const Mat cov = sample_covariance(samples);
  return KdeModel(std::move(samples), factor * cov);
}

double KdeModel::log_density(const Vec& x) const {
  const Vec z = chol_.triangularView<Eigen::Lower>().solve(x);
  const Eigen::ArrayXd lp =
      -0.5 * (whitened_.colwise() - z).colwise().squaredNorm().transpose().array();
  const double hi = lp.maxCoeff();
  if (!std::isfinite(hi)) return kLogZero;
  return hi + std::log((lp - hi).exp().sum()) + log_norm_;
}

double KdeModel::log_density_and_gradient(const Vec& x, Vec& grad) const {
  const Vec z = chol_.triangularView<Eigen::Lower>().solve(x);
  const Mat diff = whitened_.colwise() - z;  // z_i - z
  const Eigen::ArrayXd lp = -0.5 * diff.colwise().squaredNorm().transpose().array();
  const double hi = lp.maxCoeff();
  const Eigen::VectorXd r = (lp - hi).exp().matrix();
  const double norm = r.sum();
  grad = chol_.transpose().triangularView<Eigen::Upper>().solve(diff * r / norm);
  return hi + std::log(norm) + log_norm_;
}

Vec KdeModel::sample(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> pick(0, centers_.size() - 1);
  const Vec& c = centers_[pick(rng)];
  return c + chol_ * standard_normal(c.size(), rng);
}

// ---------------------------------------------------------------------------

double ModeRecord::model_log_density(const Vec& x) const {
  if (kind == ModelKind::kde_from_samples && kde) return kde->log_density(x);
  return gaussian_log_density(x, location, chol);
}

double ModeRecord::model_log_density_and_gradient(const Vec& x,
                                                  Vec& grad) const {
  if (kind == ModelKind::kde_from_samples && kde) {
    return kde->log_density_and_gradient(x, grad);
  }
  const auto lower = chol.triangularView<Eigen::Lower>();
  const Vec z = lower.solve(x - location);
  grad = -chol.transpose().triangularView<Eigen::Upper>().solve(z);
  return -static_cast<double>(x.size()) * kHalfLog2Pi -
         chol.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

Vec ModeRecord::sample_model(Rng& rng) const {
  if (kind == ModelKind::kde_from_samples && kde) return kde->sample(rng);
  return location + chol * standard_normal(location.size(), rng);
}

double ModeRecord::log_peak() const {
  return log_mass + model_log_density(location);
}

// ---------------------------------------------------------------------------

const ModeRecord& ModeRegistry::add(ModeRecord record) {
  record.index = records_.size() + 1;
  records_.push_back(std::move(record));
  renormalize();
  return records_.back();
}

void ModeRegistry::renormalize() {
  double total = kLogZero;
  for (const auto& r : records_) total = log_add_exp(total, r.log_mass);
  for (auto& r : records_) r.weight = std::exp(r.log_mass - total);
}

std::optional<std::size_t> ModeRegistry::duplicate_of(const Vec& x,
                                                      double radius) const {
  std::optional<std::size_t> best;
  double best_dist = radius;
  for (std::size_t k = 0; k < records_.size(); ++k) {
    const double d = (records_[k].location - x).norm();
    if (d <= best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

double ModeRegistry::log_estimate(const Vec& x) const {
  double acc = kLogZero;
  for (const auto& r : records_) {
    acc = log_add_exp(acc, r.log_mass + r.model_log_density(x));
  }
  return acc;
}

double ModeRegistry::log_estimate_and_gradient(const Vec& x, Vec& grad) const {
  grad = Vec::Zero(x.size());
  if (records_.empty()) return kLogZero;
  std::vector<double> lp(records_.size());
  std::vector<Vec> gs(records_.size());
  double hi = kLogZero;
  for (std::size_t k = 0; k < records_.size(); ++k) {
    lp[k] = records_[k].log_mass +
            records_[k].model_log_density_and_gradient(x, gs[k]);
    hi = std::max(hi, lp[k]);
  }
  if (hi == kLogZero) return kLogZero;
  double norm = 0.0;
  for (std::size_t k = 0; k < records_.size(); ++k) {
    const double r = std::exp(lp[k] - hi);
    norm += r;
    grad += r * gs[k];
  }
  grad /= norm;
  return hi + std::log(norm);
}

double ModeRegistry::max_log_peak() const {
  double best = kLogZero;
  for (const auto& r : records_) best = std::max(best, r.log_peak());
  return best;
}

std::vector<ModeFrame> ModeRegistry::frames() const {
  std::vector<ModeFrame> out;
  for (const auto& r : records_) {
    ModeFrame f;
    f.location = r.location;
    f.chol = r.chol;
    f.log_det_chol = r.chol.diagonal().array().log().sum();
    out.push_back(std::move(f));
  }
  return out;
}

void ModeRegistry::write(std::ostream& out,
                         const std::string& target_descriptor) const {
  const Eigen::Index d = records_.empty() ? 0 : records_.front().location.size();
  out << "# mmc mode registry\n";
  out << "# target: " << target_descriptor << "\n";
  out << "# dimension: " << d << "\n";
  out << "# columns: index wall_time location[" << d << "] weight kind covariance["
      << d * d << "] log_mass bfgs_at_discovery\n";
  for (const auto& r : records_) {
    out << r.index << ' ' << format_double(r.wall_time);
    for (Eigen::Index i = 0; i < d; ++i) out << ' ' << format_double(r.location[i]);
    out << ' ' << format_double(r.weight) << ' ' << to_string(r.kind);
    for (Eigen::Index i = 0; i < d * d; ++i) {
      out << ' ' << format_double(r.covariance.data()[i]);
    }
    out << ' ' << format_double(r.log_mass) << ' ' << r.bfgs_calls_at_discovery
        << '\n';
  }
}

ModeRegistry ModeRegistry::read(std::istream& in,
                                std::string* target_descriptor) {
  ModeRegistry reg;
  std::string line;
  Eigen::Index d = -1;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string body = trim(t.substr(1));
      if (body.rfind("target:", 0) == 0 && target_descriptor) {
        *target_descriptor = trim(body.substr(7));
      } else if (body.rfind("dimension:", 0) == 0) {
        d = std::stol(trim(body.substr(10)));
      }
      continue;
    }
    if (d <= 0) throw ConfigError("registry file: missing dimension header");
    std::istringstream ls(t);
    ModeRecord r;
    std::string kind;
    r.location.resize(d);
    r.covariance.resize(d, d);
    ls >> r.index >> r.wall_time;
    for (Eigen::Index i = 0; i < d; ++i) ls >> r.location[i];
    ls >> r.weight >> kind;
    for (Eigen::Index i = 0; i < d * d; ++i) ls >> r.covariance.data()[i];
    ls >> r.log_mass >> r.bfgs_calls_at_discovery;
    if (!ls) {
      throw ConfigError("registry file line " + std::to_string(line_no) +
                        ": malformed record");
    }
    r.kind = model_kind_from_string(kind);
    r.chol = regularized_cholesky(r.covariance).lower;
    const std::size_t index = r.index;
    reg.add(std::move(r));
    reg.records_.back().index = index;
  }
  return reg;
}

// ---------------------------------------------------------------------------

double mode_density_estimate(const ModeRegistry& reg, const Vec& x) {
  return reg.empty() ? 0.0 : std::exp(reg.log_estimate(x));
}

double default_residual_floor(const ModeRegistry& reg) {
  if (reg.empty()) return 1.0;
  return 1e-12 * std::exp(reg.max_log_peak());
}

Objective residual_objective(const TargetDistribution& target,
                             const ModeRegistry& reg, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("residual_objective: delta must be > 0");
  const double log_delta = std::log(delta);
  auto value = [&target, &reg, log_delta](const Vec& x) {
    const double lf = target.log_density(x);
    if (!std::isfinite(lf)) return kLogZero;
    return lf - log_add_exp(reg.log_estimate(x), log_delta);
  };
  auto gradient = [&target, &reg, log_delta](const Vec& x) -> Vec {
    Vec gf;
    const double lf = target.log_density_and_gradient(x, gf);
    if (!std::isfinite(lf)) {
      return Vec::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
    }
    Vec gh;
    const double lh = reg.log_estimate_and_gradient(x, gh);
    if (lh == kLogZero) return gf;
    const double share = std::exp(lh - log_add_exp(lh, log_delta));
    return gf - share * gh;
  };
  return {value, gradient};
}

Vec geodesic_start_proposal(const Objective& phi, const Vec& x0, const Vec& v0,
                            int steps, double h, double alpha) {
  if (!(h > 0.0) || !(alpha > 0.0)) {
    throw std::invalid_argument("geodesic_start_proposal: h and alpha must be > 0");
  }
  Vec x = x0;
  Vec tangent = v0.normalized();
  Vec best = x0;
  double best_value = phi.value(x0);
  for (int s = 0; s < steps; ++s) {
    const Vec g = phi.gradient(x);
    if (!all_finite(g)) break;
    const Vec bend = g - g.dot(tangent) * tangent;
    if (bend.squaredNorm() > 0.0) {
      tangent = (tangent + (h * alpha) * bend).normalized();
    }
    x += h * tangent;
    const double value = phi.value(x);
    if (!std::isfinite(value)) break;
    if (value >= best_value) {
      best_value = value;
      best = x;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

void ModeFinderConfig::validate() const {
  if (alpha < 0.0 || geodesic_h < 0.0 || delta < 0.0 || dedup_radius < 0.0) {
    throw std::invalid_argument("modefinder: negative setting");
  }
  if (geodesic_steps < 1 || restarts < 1 || budget < 1 || kde_samples < 2 ||
      max_modes < 1) {
    throw std::invalid_argument("modefinder: counts must be positive");
  }
}

ModeRecord fit_mode_model(const TargetDistribution& target, const Vec& x_star,
                          ModelKind kind, const HmcParams& hmc,
                          int kde_samples, Rng& rng) {
  ModeRecord r;
  r.location = x_star;
  const double lf = target.log_density(x_star);
  const double d = static_cast<double>(x_star.size());

  if (kind == ModelKind::gaussian_from_hessian) {
    if (auto cov = hessian_covariance(target, x_star)) {
      r.kind = ModelKind::gaussian_from_hessian;
      r.covariance = *cov;
      r.chol = regularized_cholesky(r.covariance).lower;
      r.log_mass = lf + d * kHalfLog2Pi + r.chol.diagonal().array().log().sum();
      return r;
    }
    r.note = "hessian not negative definite; fell back to kde";
  }

  auto chain = make_chain(target, x_star, make_stream(rng(), 0x6b6465ull));
  std::vector<Vec> samples;
  samples.reserve(static_cast<std::size_t>(kde_samples));
  for (int i = 0; i < kde_samples; ++i) {
    hmc_step(chain, target, hmc);
    samples.push_back(chain.x);
  }
  r.kind = ModelKind::kde_from_samples;
  r.covariance = sample_covariance(samples);
  r.chol = regularized_cholesky(r.covariance).lower;
  r.kde = std::make_shared<const KdeModel>(KdeModel::silverman(std::move(samples)));
  r.log_mass = lf + d * kHalfLog2Pi + r.chol.diagonal().array().log().sum();
  return r;
}

FindResult find_new_mode(const TargetDistribution& target, ModeRegistry& reg,
                         int budget, const ModeFinderConfig& config,
                         const HmcParams& hmc, Rng& rng, double wall_time) {
  if (budget < 1) throw std::invalid_argument("find_new_mode: budget must be >= 1");
  config.validate();
  FindResult result;
  const auto dim = static_cast<Eigen::Index>(target.dimension());
  const Box box = target.search_box();
  const double alpha =
      config.alpha > 0.0 ? config.alpha : 1.0 / static_cast<double>(dim);
  const double h = config.geodesic_h > 0.0
                       ? config.geodesic_h
                       : box.diameter() / config.geodesic_steps;
  const double delta =
      config.delta > 0.0 ? config.delta : default_residual_floor(reg);
  const Objective phi = residual_objective(target, reg, delta);
  const Objective log_f = log_target_objective(target);

  for (int attempt = 0; attempt < budget; ++attempt) {
    if (static_cast<int>(reg.size()) >= config.max_modes) break;
    Vec start;
    double start_value = kLogZero;
    for (int r = 0; r < config.restarts; ++r) {
      Vec x0 = box.sample(rng);
      for (int tries = 0; tries < 100 && !std::isfinite(phi.value(x0)); ++tries) {
        x0 = box.sample(rng);
      }
      Vec v0 = standard_normal(dim, rng);
      if (!std::isfinite(phi.value(x0)) || !(v0.norm() > 0.0)) continue;
      const Vec candidate = geodesic_start_proposal(
          phi, x0, v0, config.geodesic_steps, h, alpha);
      const double value = phi.value(candidate);
      if (value > start_value || start.size() == 0) {
        start_value = value;
        start = candidate;
      }
    }
    ++result.attempts;
    if (start.size() == 0) {
      ++result.failures;
      continue;
    }

    const BfgsResult opt = bfgs_maximize(log_f, start, config.bfgs);
    ++reg.n_bfgs;
    if (!opt.converged) {
      ++result.failures;
      continue;
    }
    const auto cov = hessian_covariance(target, opt.maximizer);
    double radius = config.dedup_radius;
    if (!(radius > 0.0)) {
      radius = cov ? 0.5 * std::sqrt(std::max(
                               0.0, Eigen::SelfAdjointEigenSolver<Mat>(*cov)
                                        .eigenvalues()
                                        .minCoeff()))
                   : 1e-6 * box.diameter();
    }
    if (reg.duplicate_of(opt.maximizer, radius)) {
      ++result.duplicates;
      ++reg.duplicates;
      continue;
    }
    ModeRecord record = fit_mode_model(target, opt.maximizer, config.model,
                                       hmc, config.kde_samples, rng);
    record.wall_time = wall_time;
    record.bfgs_calls_at_discovery = reg.n_bfgs;
    ++reg.successes;
    reg.add(std::move(record));
    result.index = reg.size() - 1;
    return result;
  }
  return result;
}

std::vector<AuditRow> fictitious_mode_audit(const TargetDistribution& target,
                                            const ModeRegistry& reg,
                                            const BfgsOptions& bfgs) {
  if (reg.empty()) throw std::invalid_argument("fictitious_mode_audit: empty registry");
  const Objective log_f = log_target_objective(target);
  std::vector<AuditRow> rows;
  double cumulative = 0.0;
  for (const auto& r : reg.records()) {
    AuditRow row;
    row.k = r.index;
    const BfgsResult opt = bfgs_maximize(log_f, r.location, bfgs);
    row.ok = opt.converged;
    row.delta_x = (r.location - opt.maximizer).norm();
    if (row.ok) cumulative += row.delta_x;
    row.cumulative = cumulative;
    rows.push_back(row);
  }
  return rows;
}

void write_audit_csv(std::ostream& out, const std::vector<AuditRow>& rows) {
  out << "k,delta_x,cumulative\n";
  for (const auto& r : rows) {
    out << r.k << ',' << (r.ok ? format_double(r.delta_x) : std::string("nan"))
        << ',' << format_double(r.cumulative) << '\n';
  }
}

}  // namespace mmc
