#include "wbipm/reg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace wbipm {

void MmConfig::validate() const {
  require(epsilon > 0 && std::isfinite(epsilon), "epsilon must be > 0");
  require(lambda.value >= 0 && std::isfinite(lambda.value), "lambda must be >= 0");
  require(alpha.value >= 0 && std::isfinite(alpha.value), "alpha must be >= 0");
  require(max_outer >= 1, "max_outer must be >= 1");
  require(stagnation_tol > 0, "stagnation_tol must be > 0");
  require(stagnation_window >= 1, "stagnation_window must be >= 1");
  require(omega <= 1.0, "omega must be <= 1");
}

Preconditioner build_preconditioner(const Vector& x, double epsilon) {
  require(epsilon > 0, "epsilon must be > 0");
  Preconditioner p;
  p.diag = x.unaryExpr([epsilon](double xi) {
    return 1.0 / std::sqrt(2.0 * std::sqrt(xi * xi + epsilon));
  });
  return p;
}

double smoothed_objective(const Vector& x, const LinearOperator& a, const Vector& b,
                          double lambda, double epsilon) {
  require(epsilon > 0, "epsilon must be > 0");
  const double fit = (a.apply(x) - b).squaredNorm();
  const double pen = x.unaryExpr([epsilon](double xi) { return std::sqrt(xi * xi + epsilon); })
                         .sum();
  return fit + lambda * lambda * pen;
}

double majorizer(const Vector& x, const Vector& x_ref, double epsilon) {
  require(epsilon > 0, "epsilon must be > 0");
  require(x.size() == x_ref.size(), "majorizer: length mismatch");
  double sum = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double root = std::sqrt(x_ref(j) * x_ref(j) + epsilon);
    sum += root + (x(j) * x(j) - x_ref(j) * x_ref(j)) / (2.0 * root);
  }
  return sum;
}

Vector exact_mm_step(const Matrix& a, const Vector& b, const Vector& x_ref, double lambda,
                     double epsilon) {
  const Vector l = build_preconditioner(x_ref, epsilon).diag;
  Matrix normal = a.transpose() * a;
  normal.diagonal() += (lambda * lambda) * l.cwiseAbs2();
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success) throw NumericalError("exact_mm_step: factorization failed");
  return ldlt.solve(a.transpose() * b);
}

namespace {

// Spectral data of G R^{-1}: singular values and beta * (first row of the
// left singular vectors).
struct Spectral {
  Vector sigma;
  Vector bhat;      // projections onto the k left singular vectors
  double outside2;  // squared part of beta e1 outside range(G)
  Index k = 0;
};

Spectral spectral(const Matrix& g, const Matrix& r_z, double beta) {
  const Index k = g.cols();
  require(k >= 1, "WGCV needs at least one basis vector");
  require(g.rows() >= k && r_z.rows() == k && r_z.cols() == k, "WGCV: shape mismatch");
  // G R^{-1} = (R^{-T} G^T)^T
  const Matrix gr =
      r_z.transpose().triangularView<Eigen::Lower>().solve(g.transpose()).transpose();
  Eigen::JacobiSVD<Matrix> svd(gr, Eigen::ComputeFullU);
  Spectral sp;
  sp.k = k;
  sp.sigma = svd.singularValues();
  const Vector coeffs = beta * svd.matrixU().row(0).transpose();
  sp.bhat = coeffs.head(k);
  sp.outside2 = coeffs.tail(coeffs.size() - k).squaredNorm();
  return sp;
}

double gcv_eval(const Spectral& sp, double omega, double lambda) {
  const double l2 = lambda * lambda;
  double num = sp.outside2;
  double tr = static_cast<double>(sp.k + 1);
  for (Index i = 0; i < sp.k; ++i) {
    const double s2 = sp.sigma(i) * sp.sigma(i);
    const double denom = s2 + l2;
    const double filt = denom > 0 ? s2 / denom : 0.0;
    const double resid = denom > 0 ? l2 / denom * sp.bhat(i) : sp.bhat(i);
    num += resid * resid;
    tr -= omega * filt;
  }
  return static_cast<double>(sp.k) * num / (tr * tr);
}

// Minimizes f over a log-spaced grid followed by golden-section refinement of
// the bracket around the best grid point.
std::pair<double, double> grid_golden_min(const std::function<double(double)>& f, double lo,
                                          double hi, int points) {
  const double llo = std::log(lo), lhi = std::log(hi);
  std::vector<double> grid(points);
  std::vector<double> vals(points);
  int best = 0;
  for (int i = 0; i < points; ++i) {
    grid[i] = std::exp(llo + (lhi - llo) * i / (points - 1));
    vals[i] = f(grid[i]);
    if (vals[i] < vals[best]) best = i;
  }
  double a = std::log(grid[std::max(best - 1, 0)]);
  double b = std::log(grid[std::min(best + 1, points - 1)]);
  const double inv_phi = 0.6180339887498949;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(std::exp(c)), fd = f(std::exp(d));
  for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(std::exp(d));
    }
  }
  const double ref = std::exp(0.5 * (a + b));
  const double fref = f(ref);
  if (fref < vals[best]) return {ref, fref};
  return {grid[best], vals[best]};
}

}  // namespace

double wgcv_function(const Matrix& g, const Matrix& r_z, double beta, double omega,
                     double lambda) {
  return gcv_eval(spectral(g, r_z, beta), omega, lambda);
}

WgcvResult wgcv_select(const Matrix& g, const Matrix& r_z, double beta, double omega,
                       double fallback_lambda) {
  require(g.cols() >= 1, "wgcv_select: k must be >= 1");
  require(omega > 0 && omega <= 1.0, "wgcv_select: omega must lie in (0, 1]");
  WgcvResult out;
  out.omega = omega;
  const Spectral sp = spectral(g, r_z, beta);
  const double smax = sp.sigma.size() ? sp.sigma(0) : 0.0;
  if (!(smax > 0.0) || !std::isfinite(smax)) {
    out.value = fallback_lambda;
    out.fallback = true;
    return out;
  }
  auto f = [&](double lambda) { return gcv_eval(sp, omega, lambda); };
  const auto [lambda, val] = grid_golden_min(f, 1e-10 * smax, 1e2 * smax, 40);
  if (!std::isfinite(val)) {
    out.value = fallback_lambda;
    out.fallback = true;
    return out;
  }
  out.value = lambda;
  out.gcv = val;
  return out;
}

double wgcv_optimal_weight(const Matrix& g, const Matrix& r_z, double beta) {
  const Spectral sp = spectral(g, r_z, beta);
  const Index n = sp.k;
  const double m = static_cast<double>(n + 1);
  const double alpha = sp.sigma(n - 1);
  const double a2 = alpha * alpha;
  double t1 = 0, t3 = 0, t4 = 0, t5 = 0, v2 = 0;
  for (Index i = 0; i < n; ++i) {
    const double s = sp.sigma(i), s2 = s * s, bh = sp.bhat(i);
    const double tt = 1.0 / (s2 + a2);
    t1 += s2 * tt;
    t3 += std::pow(bh * alpha * s, 2) * tt * tt * tt;
    t4 += std::pow(s * tt, 2);
    t5 += std::pow(a2 * bh * tt, 2);
    v2 += std::pow(bh * s, 2) * tt * tt * tt;
  }
  const double denom = t1 * t3 + t4 * (t5 + sp.outside2);
  double omega = denom > 0 ? m * a2 * v2 / denom : 1.0;
  if (!std::isfinite(omega) || omega <= 0.0) omega = 1.0;
  return std::min(1.0, omega);
}

WgcvResult wgcv_select_alpha(double gamma, double r, double rho, Index m, double omega,
                             double fallback_alpha) {
  require(gamma > 0, "wgcv_select_alpha: gamma must be positive");
  require(m >= 1, "wgcv_select_alpha: m must be >= 1");
  require(omega > 0 && omega <= 1.0, "wgcv_select_alpha: omega must lie in (0, 1]");
  WgcvResult out;
  out.omega = omega;
  const double g2 = gamma * gamma;
  const double md = static_cast<double>(m);
  auto f = [&](double alpha) {
    const double a2 = alpha * alpha;
    const double res = a2 * r / (g2 + a2);
    const double tr = md - omega * g2 / (g2 + a2);
    return (rho * rho + res * res) / (tr * tr);
  };
  const auto [alpha, val] = grid_golden_min(f, 1e-6 * gamma, 1e4 * gamma, 40);
  if (!std::isfinite(val)) {
    out.value = fallback_alpha;
    out.fallback = true;
    return out;
  }
  out.value = alpha;
  out.gcv = val;
  return out;
}

}  // namespace wbipm
