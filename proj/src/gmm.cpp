#include "mmc/keyvalue.hpp"
#include "mmc/target.hpp"

#include <cmath>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>

namespace mmc {

GaussianMixture::GaussianMixture(std::vector<double> weights,
                                 std::vector<Vec> means,
                                 std::vector<Mat> covariances)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covs_(std::move(covariances)) {
  const std::size_t k = weights_.size();
  if (k == 0) throw std::invalid_argument("GaussianMixture: no components");
  if (means_.size() != k || covs_.size() != k) {
    throw std::invalid_argument("GaussianMixture: component count mismatch");
  }
  dim_ = static_cast<std::size_t>(means_[0].size());
  if (dim_ == 0) throw std::invalid_argument("GaussianMixture: dimension 0");

  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("GaussianMixture: weights must be positive");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
  }

  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  moments_.mean = Vec::Zero(static_cast<Eigen::Index>(dim_));
  Mat second = Mat::Zero(moments_.mean.size(), moments_.mean.size());
  for (std::size_t c = 0; c < k; ++c) {
    if (static_cast<std::size_t>(means_[c].size()) != dim_ ||
        static_cast<std::size_t>(covs_[c].rows()) != dim_ ||
        static_cast<std::size_t>(covs_[c].cols()) != dim_) {
      throw std::invalid_argument("GaussianMixture: dimension mismatch");
    }
    chol_.push_back(cholesky_spd(covs_[c]));
    log_norm_.push_back(std::log(weights_[c]) -
                        static_cast<double>(dim_) * half_log_2pi -
                        0.5 * log_det_from_cholesky(chol_.back()));
    moments_.mean += weights_[c] * means_[c];
    second += weights_[c] * (covs_[c] + means_[c] * means_[c].transpose());
  }
  moments_.covariance =
      second - moments_.mean * moments_.mean.transpose();

  Vec lo = means_[0];
  Vec hi = means_[0];
  for (const auto& m : means_) {
    lo = lo.cwiseMin(m);
    hi = hi.cwiseMax(m);
  }
  Vec pad = (0.2 * (hi - lo)).cwiseMax(Vec::Constant(lo.size(), 3.0));
  box_ = {lo - pad, hi + pad};
}

double GaussianMixture::component_log_density(std::size_t k,
                                              const Vec& x) const {
  const Vec z = chol_[k].triangularView<Eigen::Lower>().solve(x - means_[k]);
  return log_norm_[k] - 0.5 * z.squaredNorm();
}

double GaussianMixture::log_density(const Vec& x) const {
  double acc = kLogZero;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    acc = log_add_exp(acc, component_log_density(k, x));
  }
  return acc;
}

double GaussianMixture::log_density_and_gradient(const Vec& x,
                                                 Vec& grad) const {
  const std::size_t k = weights_.size();
  std::vector<double> lp(k);
  std::vector<Vec> pull(k);
  double hi = kLogZero;
  for (std::size_t c = 0; c < k; ++c) {
    const auto lower = chol_[c].triangularView<Eigen::Lower>();
    const Vec z = lower.solve(x - means_[c]);
    lp[c] = log_norm_[c] - 0.5 * z.squaredNorm();
    pull[c] = -lower.transpose().solve(z);
    hi = std::max(hi, lp[c]);
  }
  double norm = 0.0;
  grad = Vec::Zero(x.size());
  for (std::size_t c = 0; c < k; ++c) {
    const double r = std::exp(lp[c] - hi);
    norm += r;
    grad += r * pull[c];
  }
  grad /= norm;
  return hi + std::log(norm);
}

Vec GaussianMixture::gradient(const Vec& x) const {
  Vec g;
  log_density_and_gradient(x, g);
  return g;
}

std::string GaussianMixture::describe() const {
  std::ostringstream out;
  out << "gaussian mixture D=" << dim_ << " K=" << weights_.size();
  return out.str();
}

Vec GaussianMixture::sample(std::mt19937_64& rng) const {
  std::discrete_distribution<std::size_t> pick(weights_.begin(),
                                               weights_.end());
  std::normal_distribution<double> normal;
  const std::size_t k = pick(rng);
  Vec z(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return means_[k] + chol_[k] * z;
}

namespace {

std::string join(const double* data, Eigen::Index n) {
  std::string out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += format_double(data[i]);
  }
  return out;
}

}  // namespace

void GaussianMixture::write(std::ostream& out) const {
  out << "[gmm]\n";
  out << "dimension = " << dim_ << "\n";
  out << "components = " << weights_.size() << "\n";
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out << "weight." << k << " = " << format_double(weights_[k]) << "\n";
    out << "mean." << k << " = " << join(means_[k].data(), means_[k].size())
        << "\n";
    out << "covariance." << k << " = "
        << join(covs_[k].data(), covs_[k].size()) << "\n";
  }
  out << "box.lower = " << join(box_.lower.data(), box_.lower.size()) << "\n";
  out << "box.upper = " << join(box_.upper.data(), box_.upper.size()) << "\n";
}

GaussianMixture GaussianMixture::read(std::istream& in) {
  const std::string text(std::istreambuf_iterator<char>(in), {});
  std::map<std::string, KeyValueEntry> kv;
  for (auto& e : parse_key_values(text)) kv[e.key] = e;
  auto need = [&](const std::string& key) -> const KeyValueEntry& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("gmm file: missing key " + key);
    return it->second;
  };
  const auto dim = static_cast<Eigen::Index>(parse_integer(need("gmm.dimension")));
  const auto k = static_cast<std::size_t>(parse_integer(need("gmm.components")));
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (std::size_t c = 0; c < k; ++c) {
    const std::string idx = std::to_string(c);
    weights.push_back(parse_double(need("gmm.weight." + idx)));
    const auto m = parse_doubles(need("gmm.mean." + idx));
    const auto s = parse_doubles(need("gmm.covariance." + idx));
    if (static_cast<Eigen::Index>(m.size()) != dim ||
        static_cast<Eigen::Index>(s.size()) != dim * dim) {
      throw ConfigError("gmm file: component " + idx + " has wrong size");
    }
    means.push_back(Eigen::Map<const Vec>(m.data(), dim));
    covs.push_back(Eigen::Map<const Mat>(s.data(), dim, dim));
  }
  GaussianMixture g(std::move(weights), std::move(means), std::move(covs));
  if (kv.count("gmm.box.lower") && kv.count("gmm.box.upper")) {
    const auto lo = parse_doubles(kv["gmm.box.lower"]);
    const auto hi = parse_doubles(kv["gmm.box.upper"]);
    if (static_cast<Eigen::Index>(lo.size()) == dim &&
        static_cast<Eigen::Index>(hi.size()) == dim) {
      g.set_search_box({Eigen::Map<const Vec>(lo.data(), dim),
                        Eigen::Map<const Vec>(hi.data(), dim)});
    }
  }
  return g;
}

std::vector<double> mixture_weights(std::size_t k, WeightScheme scheme) {
  std::vector<double> w(k, 1.0 / static_cast<double>(k));
  if (scheme == WeightScheme::proportional) {
    const double total = 0.5 * static_cast<double>(k * (k + 1));
    for (std::size_t c = 0; c < k; ++c) {
      w[c] = static_cast<double>(c + 1) / total;
    }
  }
  return w;
}

GaussianMixture gmm_generate_benchmark(std::size_t dim, std::size_t k,
                                       WeightScheme scheme,
                                       std::uint64_t seed) {
  if (dim < 1 || k < 1) {
    throw ConfigError("gmm_generate_benchmark: D and K must be >= 1");
  }
  constexpr double kSeparation = 8.0;  // times sqrt(largest eigenvalue) = 1
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<Vec> means(k, Vec(d));
  for (auto& m : means) {
    for (Eigen::Index i = 0; i < d; ++i) m[i] = unit(rng);
  }
  double min_dist = 1.0;
  if (k > 1) {
    min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        min_dist = std::min(min_dist, (means[a] - means[b]).norm());
      }
    }
  }
  const double scale = kSeparation / min_dist * (1.0 + 1e-9);
  for (auto& m : means) m *= scale;

  GaussianMixture g(mixture_weights(k, scheme), means,
                    std::vector<Mat>(k, Mat::Identity(d, d)));
  const Vec center = Vec::Constant(d, 0.5 * scale);
  const Vec half = Vec::Constant(d, 0.6 * scale);
  g.set_search_box({center - half, center + half});
  return g;
}

}  // namespace mmc
