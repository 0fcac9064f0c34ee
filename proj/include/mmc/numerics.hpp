#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace mmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using ScalarFn = std::function<double(const Vec&)>;
using GradientFn = std::function<Vec(const Vec&)>;
using VectorMap = std::function<Vec(const Vec&)>;

/// A scalar field together with its gradient.
struct Objective {
  ScalarFn value;
  GradientFn gradient;
};

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BfgsOptions {
  double grad_tol = 1e-6;
  int max_iter = 500;
  double armijo_c1 = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 60;
};

struct BfgsResult {
  Vec maximizer;
  double objective_value = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  int evaluations = 0;
  std::string message;
};

/// Quasi-Newton ascent with a backtracking Armijo line search. The returned
/// point never has a lower objective value than `start`.
BfgsResult bfgs_maximize(const Objective& objective, const Vec& start,
                         const BfgsOptions& options = {});

inline BfgsResult bfgs_maximize(const Objective& objective, const Vec& start,
                                double tol, int max_iter) {
  BfgsOptions options;
  options.grad_tol = tol;
  options.max_iter = max_iter;
  return bfgs_maximize(objective, start, options);
}

/// 1e-5 * (1 + |x|_inf)
double default_fd_step(const Vec& x);
/// 1e-4 * (1 + |x|_inf); second differences need the larger step.
double default_fd_hessian_step(const Vec& x);

/// Central-difference gradient. Throws NumericsError naming the axis on a
/// non-finite evaluation.
Vec finite_diff_gradient(const ScalarFn& field, const Vec& x, double h);

/// Symmetrized matrix of second central differences.
Mat finite_diff_hessian(const ScalarFn& field, const Vec& x, double h);

/// Central-difference Jacobian of a vector field, symmetrized. Used to get a
/// Hessian from an analytic gradient.
Mat finite_diff_symmetric_jacobian(const VectorMap& field, const Vec& x,
                                   double h);

struct FixedPointResult {
  Vec solution;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Plain fixed-point iteration z <- map(z). On success ||map(z) - z|| <= tol
/// holds for the returned z; otherwise converged is false and residual holds
/// the last measured residual.
FixedPointResult fixed_point_solve(const VectorMap& map, const Vec& start,
                                   double tol = 1e-8, int max_iter = 100);

/// Lower Cholesky factor of a symmetric positive definite matrix.
Mat cholesky_spd(const Mat& m);

struct RegularizedCholesky {
  Mat lower;
  double jitter = 0.0;
};

/// Cholesky with escalating diagonal jitter: 1e-10 * trace/D growing by 10x
/// up to 1e-4 * trace/D. Throws NumericsError when even that fails.
RegularizedCholesky regularized_cholesky(const Mat& m);

/// log det of L * L^T given its lower factor.
double log_det_from_cholesky(const Mat& lower);

/// log(exp(a) + exp(b)) without overflow; handles -inf.
double log_add_exp(double a, double b);

bool all_finite(const Vec& v);

}  // namespace mmc
