#include "mmc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mmc {

bool all_finite(const Vec& v) { return v.allFinite(); }

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double default_fd_step(const Vec& x) {
  return 1e-5 * (1.0 + (x.size() ? x.cwiseAbs().maxCoeff() : 0.0));
}

double default_fd_hessian_step(const Vec& x) {
  return 1e-4 * (1.0 + (x.size() ? x.cwiseAbs().maxCoeff() : 0.0));
}

namespace {

// Inverse-Hessian BFGS update for the minimization of -f.
void bfgs_update(Mat& h, const Vec& s, const Vec& y, double sy) {
  const Vec hy = h * y;
  const double yhy = y.dot(hy);
  h += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
       (hy * s.transpose() + s * hy.transpose()) / sy;
}

}  // namespace

BfgsResult bfgs_maximize(const Objective& objective, const Vec& start,
                         const BfgsOptions& options) {
  if (!(options.grad_tol > 0.0)) {
    throw NumericsError("bfgs_maximize: tolerance must be positive");
  }
  BfgsResult result;
  const Eigen::Index dim = start.size();
  Vec x = start;
  double fx = objective.value(x);
  Vec gx = objective.gradient(x);
  result.evaluations = 1;
  result.maximizer = x;
  result.objective_value = fx;
  if (!std::isfinite(fx) || !all_finite(gx)) {
    result.gradient_norm = std::numeric_limits<double>::infinity();
    result.message = "objective or gradient not finite at start";
    return result;
  }

  Mat h = Mat::Identity(dim, dim);
  bool identity_h = true;
  bool scaled = false;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    const double gnorm = gx.norm();
    result.iterations = iter;
    if (gnorm <= options.grad_tol) break;

    Vec d = h * gx;
    double slope = gx.dot(d);
    if (identity_h) {
      d /= std::max(1.0, gnorm);
      slope = gx.dot(d);
    } else if (!(slope > 0.0) || !all_finite(d)) {
      h.setIdentity();
      identity_h = true;
      scaled = false;
      d = gx / std::max(1.0, gnorm);
      slope = gx.dot(d);
    }

    Vec x_new;
    Vec g_new;
    double f_new = 0.0;
    double t = 1.0;
    bool accepted = false;
    for (int b = 0; b <= options.max_backtracks; ++b) {
      x_new = x + t * d;
      f_new = objective.value(x_new);
      ++result.evaluations;
      if (std::isfinite(f_new) &&
          f_new >= fx + options.armijo_c1 * t * slope) {
        g_new = objective.gradient(x_new);
        if (all_finite(g_new)) {
          accepted = true;
          break;
        }
      }
      t *= options.shrink;
    }

    if (!accepted) {
      if (!identity_h) {
        h.setIdentity();
        identity_h = true;
        scaled = false;
        continue;
      }
      result.message = "line search found no finite ascent step";
      break;
    }

    // One quadratic-interpolation refinement of a full step.
    if (t == 1.0) {
      const double curvature = f_new - fx - slope;
      if (curvature < 0.0) {
        const double tq = -slope / (2.0 * curvature);
        if (tq > 0.0 && std::abs(tq - 1.0) > 1e-3 && tq < 1e3) {
          const Vec x_q = x + tq * d;
          const double f_q = objective.value(x_q);
          ++result.evaluations;
          if (std::isfinite(f_q) && f_q > f_new &&
              f_q >= fx + options.armijo_c1 * tq * slope) {
            Vec g_q = objective.gradient(x_q);
            if (all_finite(g_q)) {
              x_new = x_q;
              f_new = f_q;
              g_new = std::move(g_q);
            }
          }
        }
      }
    }

    const Vec s = x_new - x;
    const Vec y = gx - g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (!scaled) {
        h = Mat::Identity(dim, dim) * (sy / y.squaredNorm());
        scaled = true;
      }
      bfgs_update(h, s, y, sy);
      identity_h = false;
    }
    x = x_new;
    fx = f_new;
    gx = g_new;
    result.iterations = iter + 1;
  }

  result.maximizer = x;
  result.objective_value = fx;
  result.gradient_norm = gx.norm();
  result.converged = result.gradient_norm <= options.grad_tol;
  if (!result.converged && result.message.empty()) {
    result.message = "iteration limit reached";
  }
  return result;
}

Vec finite_diff_gradient(const ScalarFn& field, const Vec& x, double h) {
  if (!(h > 0.0)) throw NumericsError("finite_diff_gradient: h must be > 0");
  Vec grad(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = field(probe);
    probe[i] = x[i] - h;
    const double down = field(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      std::ostringstream msg;
      msg << "finite_diff_gradient: non-finite evaluation along axis " << i;
      throw NumericsError(msg.str());
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Mat finite_diff_hessian(const ScalarFn& field, const Vec& x, double h) {
  if (!(h > 0.0)) throw NumericsError("finite_diff_hessian: h must be > 0");
  const Eigen::Index n = x.size();
  Mat hess(n, n);
  Vec probe = x;
  auto eval = [&](Eigen::Index axis) {
    const double v = field(probe);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "finite_diff_hessian: non-finite evaluation along axis " << axis;
      throw NumericsError(msg.str());
    }
    return v;
  };
  const double center = eval(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    probe[i] = x[i] + h;
    const double up = eval(i);
    probe[i] = x[i] - h;
    const double down = eval(i);
    probe[i] = x[i];
    hess(i, i) = (up - 2.0 * center + down) / (h * h);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      probe[i] = x[i] + h;
      probe[j] = x[j] + h;
      const double pp = eval(j);
      probe[j] = x[j] - h;
      const double pm = eval(j);
      probe[i] = x[i] - h;
      const double mm = eval(j);
      probe[j] = x[j] + h;
      const double mp = eval(j);
      probe[i] = x[i];
      probe[j] = x[j];
      hess(i, j) = hess(j, i) = (pp - pm - mp + mm) / (4.0 * h * h);
    }
  }
  return 0.5 * (hess + hess.transpose());
}

Mat finite_diff_symmetric_jacobian(const VectorMap& field, const Vec& x,
                                   double h) {
  if (!(h > 0.0)) {
    throw NumericsError("finite_diff_symmetric_jacobian: h must be > 0");
  }
  const Eigen::Index n = x.size();
  Mat jac(n, n);
  Vec probe = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    probe[i] = x[i] + h;
    const Vec up = field(probe);
    probe[i] = x[i] - h;
    const Vec down = field(probe);
    probe[i] = x[i];
    if (!all_finite(up) || !all_finite(down)) {
      std::ostringstream msg;
      msg << "finite_diff_symmetric_jacobian: non-finite evaluation along axis "
          << i;
      throw NumericsError(msg.str());
    }
    jac.col(i) = (up - down) / (2.0 * h);
  }
  return 0.5 * (jac + jac.transpose());
}

FixedPointResult fixed_point_solve(const VectorMap& map, const Vec& start,
                                   double tol, int max_iter) {
  if (!(tol > 0.0)) throw NumericsError("fixed_point_solve: tol must be > 0");
  FixedPointResult out;
  Vec z = start;
  Vec next = map(z);
  out.residual = (next - z).norm();
  while (!(out.residual <= tol)) {
    if (out.iterations >= max_iter || !all_finite(next)) {
      out.solution = std::move(z);
      return out;
    }
    z = std::move(next);
    next = map(z);
    out.residual = (next - z).norm();
    ++out.iterations;
  }
  out.solution = std::move(z);
  out.converged = true;
  return out;
}

Mat cholesky_spd(const Mat& m) {
  if (m.rows() != m.cols()) throw NumericsError("cholesky_spd: not square");
  if (!m.allFinite()) throw NumericsError("cholesky_spd: non-finite entries");
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericsError("cholesky_spd: matrix is not positive definite");
  }
  Mat lower = llt.matrixL();
  if (!lower.allFinite() || (lower.diagonal().array() <= 0.0).any()) {
    throw NumericsError("cholesky_spd: matrix is not positive definite");
  }
  return lower;
}

RegularizedCholesky regularized_cholesky(const Mat& m) {
  try {
    return {cholesky_spd(m), 0.0};
  } catch (const NumericsError&) {
  }
  const double n = static_cast<double>(std::max<Eigen::Index>(1, m.rows()));
  double scale = std::abs(m.trace()) / n;
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  for (double factor = 1e-10; factor <= 1e-4 * 1.0000001; factor *= 10.0) {
    const double jitter = factor * scale;
    Mat shifted = m;
    shifted.diagonal().array() += jitter;
    try {
      return {cholesky_spd(shifted), jitter};
    } catch (const NumericsError&) {
    }
  }
  throw NumericsError("regularized_cholesky: matrix not repairable to SPD");
}

double log_det_from_cholesky(const Mat& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

}  // namespace mmc
