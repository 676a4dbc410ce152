#pragma once

#include "wbipm/common.hpp"
#include "wbipm/operator.hpp"

namespace wbipm {

enum class ParamRule { Fixed, Wgcv };

struct ParamPolicy {
  ParamRule rule = ParamRule::Fixed;
  double value = 0.1;  // the fixed value, or the fallback when WGCV degenerates
};

struct MmConfig {
  double epsilon = 1e-6;
  ParamPolicy lambda{ParamRule::Wgcv, 1e-2};
  ParamPolicy alpha{ParamRule::Fixed, 1e-1};
  int max_outer = 120;
  double stagnation_tol = 1e-6;
  int stagnation_window = 5;
  // Fixed WGCV weight; <= 0 selects the adaptive weight.
  double omega = 0.0;

  void validate() const;
};

// Diagonal of L(x) = diag((2 sqrt(x_i^2 + eps))^{-1/2}).
struct Preconditioner {
  Vector diag;

  static Preconditioner identity(Index n) { return {Vector::Ones(n)}; }
  Vector inverse() const { return diag.cwiseInverse(); }
  double sigma_min() const { return diag.minCoeff(); }
  double sigma_max() const { return diag.maxCoeff(); }
};

Preconditioner build_preconditioner(const Vector& x, double epsilon);

// ||A x - b||^2 + lambda^2 sum_j sqrt(x_j^2 + eps)
double smoothed_objective(const Vector& x, const LinearOperator& a, const Vector& b,
                          double lambda, double epsilon);

// sum_j psi_eps(x_j | x_ref_j), the quadratic majorizer of the smoothed penalty.
double majorizer(const Vector& x, const Vector& x_ref, double epsilon);

// Dense normal-equation minimizer of ||A x - b||^2 + lambda^2 ||L(x_ref) x||^2.
// Reference implementation for small problems.
Vector exact_mm_step(const Matrix& a, const Vector& b, const Vector& x_ref, double lambda,
                     double epsilon);

struct WgcvResult {
  double value = 0.0;  // selected parameter
  double gcv = 0.0;
  double omega = 1.0;  // weight used
  bool fallback = false;
};

// Weighted GCV of the projected problem min ||G d - beta e1||^2 + lambda^2 ||R d||^2:
//   k ||(I - G G_lambda) beta e1||^2 / trace(I - omega G G_lambda)^2.
double wgcv_function(const Matrix& g, const Matrix& r_z, double beta, double omega,
                     double lambda);

// Minimizes wgcv_function over 40 log-spaced points in [1e-10, 1e2] * sigma_max
// and refines the best bracket by golden-section search in log(lambda).
WgcvResult wgcv_select(const Matrix& g, const Matrix& r_z, double beta, double omega,
                       double fallback_lambda = 1e-2);

// Weight estimate of the adaptive WGCV scheme for the current projected
// problem, clipped to (0, 1].
double wgcv_optimal_weight(const Matrix& g, const Matrix& r_z, double beta);

// WGCV for the scalar coefficient problem (gamma c - r)^2 + alpha^2 c^2,
// embedded in the m-row projected data space whose residual is rho:
//   (rho^2 + (alpha^2 r / (gamma^2 + alpha^2))^2) / (m - omega gamma^2/(gamma^2 + alpha^2))^2.
WgcvResult wgcv_select_alpha(double gamma, double r, double rho, Index m, double omega,
                             double fallback_alpha = 1e-1);

}  // namespace wbipm
