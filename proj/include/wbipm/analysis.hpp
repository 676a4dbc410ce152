#pragma once

#include "wbipm/common.hpp"
#include "wbipm/operator.hpp"
#include "wbipm/reg.hpp"
#include "wbipm/solver.hpp"

#include <vector>

namespace wbipm {

// Gamma(v; S) = ||v_perp||_D^2 / ||v||_D^2 where v_perp is the D-orthogonal
// projection of v onto span(S) and D = L^T L. Lies in [0, 1] and equals 1
// iff v is in span(S). An empty S gives 0.
double gamma_alignment(const Vector& v, const Matrix& s_basis, const Preconditioner& l);

// ||v||_D with D = L^T L.
double d_norm(const Vector& v, const Preconditioner& l);

// Orthonormal basis of ker(M): right singular vectors whose singular value is
// at or below rel_tol * sigma_max.
Matrix kernel_basis(const Matrix& m, double rel_tol = 1e-10);

// Orthonormal basis of the orthogonal complement of a unit vector.
Matrix complement_basis(const Vector& unit);

// Dense A~ = (I - y y^T) A.
Matrix deflated_matrix(const Matrix& a, const WarmBasis& wb);

struct ClosedForm {
  Vector z_w;
  double c_w = 0.0;
  Vector x_w;
};

// Full-dimension WB-IPM solution with fixed lambda, alpha and L_z:
//   z_w = (I - x x^T)(B~ + lambda^2 D)^{-1} A~^T b~,
//   c_w = gamma y^T (b - A z_w) / (gamma^2 + alpha^2),  x_w = z_w + c_w x_hat.
ClosedForm closed_form_solution(const Matrix& a, const Vector& b, const WarmBasis& wb,
                                double lambda, double alpha, const Preconditioner& l_z);

struct LemmaCheck {
  double lhs = 0.0;         // ||(B~ + D_lambda)^{-1} D_lambda v||
  double rhs = 0.0;
  double theta_plus = 0.0;  // smallest nonzero eigenvalue of D^{-1} B~
  double gamma_kernel = 0.0;  // Gamma(v; ker A~)
  bool holds = false;       // lhs <= rhs (1 + 1e-8)
};

// Evaluates both sides of the resolvent bound for a given v.
LemmaCheck lemma_bound_check(const Matrix& a_tilde, const Preconditioner& l_z, double lambda,
                             const Vector& v);

// theta_i of B~ g = theta D g in ascending order (Cholesky-free: D is diagonal).
Vector generalized_eigenvalues(const Matrix& b_tilde, const Preconditioner& l_z);

// Eigenvalues lambda^2 / (lambda^2 + theta_i) of (B~ + D_lambda)^{-1} D_lambda,
// descending.
Vector resolvent_eigenvalues(const Matrix& b_tilde, const Preconditioner& l_z, double lambda);

struct BoundReport {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0;
  double term_alpha = 0.0;
  double term_align = 0.0;        // C1 C2 ||z*||_D (certified form)
  double term_align_gamma = 0.0;  // C1 C2 Gamma(x*, span(x_hat)^perp) ||x*||_D
  double term_noise = 0.0;
  double total = 0.0;
  double observed_error = 0.0;  // ||x* - x_w||
  double theta_plus = 0.0;
  double gamma_z_kernel = 0.0;  // Gamma(z*; ker A~)
  double gamma_x_perp = 0.0;    // Gamma(x*; span(x_hat)^perp)
  double z_star_d_norm = 0.0;
  double x_star_d_norm = 0.0;

  bool holds() const { return observed_error <= total; }
};

// Evaluates every term of the a-priori error bound for x_w computed from
// b = A x* + eta. Requires lambda > 0.
BoundReport theorem_bound(const Vector& x_star, const WarmBasis& wb, const Matrix& a,
                          double lambda, double alpha, const Preconditioner& l_z,
                          const Vector& eta);

// 1 - <pred, truth> / (||pred|| ||truth||), in [0, 2].
double angle_loss(const Vector& pred, const Vector& truth);
// ||pred - truth||^2
double distance_loss(const Vector& pred, const Vector& truth);

// Half-open band [z_lo, z_hi) in mm over voxel-centre depths.
struct ZSection {
  double z_lo = 0.0;
  double z_hi = 0.0;
};

// Converts 1-based inclusive slice ranges (e.g. {1,4},{5,8}) to mm bands.
std::vector<ZSection> slice_sections(const Grid3& grid,
                                     const std::vector<std::pair<int, int>>& slices);

// Four near-equal slice bands covering the grid depth.
std::vector<ZSection> default_sections(const Grid3& grid);

struct ZSectionRow {
  ZSection section;
  Index voxels = 0;
  double baseline_rmse = 0.0;
  double candidate_rmse = 0.0;
  double improvement_pct = 0.0;  // 100 (1 - candidate/baseline); NaN if undefined
};

struct ZSectionTable {
  std::vector<ZSectionRow> rows;
  ZSectionRow overall;
};

ZSectionTable rmse_by_zsection(const Vector& candidate, const Vector& baseline,
                               const Vector& x_star, const Grid3& grid,
                               const std::vector<ZSection>& sections);

double relative_error(const Vector& x, const Vector& x_star);

}  // namespace wbipm
