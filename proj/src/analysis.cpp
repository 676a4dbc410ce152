#include "wbipm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wbipm {

namespace {

Vector d_diag(const Preconditioner& l) { return l.diag.cwiseAbs2(); }

Eigen::VectorXd singular_values(const Matrix& m) {
  if (std::min(m.rows(), m.cols()) > 64) return Eigen::BDCSVD<Matrix>(m).singularValues();
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

}  // namespace

double d_norm(const Vector& v, const Preconditioner& l) {
  require(v.size() == l.diag.size(), "d_norm: length mismatch");
  return std::sqrt(v.cwiseAbs2().dot(d_diag(l)));
}

double gamma_alignment(const Vector& v, const Matrix& s_basis, const Preconditioner& l) {
  require(v.size() == l.diag.size() && s_basis.rows() == v.size(),
          "gamma_alignment: dimension mismatch");
  const double vv = d_norm(v, l);
  require(vv > 0, "gamma_alignment: v must be nonzero");
  if (s_basis.cols() == 0) return 0.0;
  const Vector d = d_diag(l);
  const Matrix ds = d.asDiagonal() * s_basis;
  const Matrix gram = s_basis.transpose() * ds;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14)
    throw ValidationError("gamma_alignment: subspace basis is linearly dependent");
  const Vector coef = ldlt.solve(ds.transpose() * v);
  const Vector proj = s_basis * coef;
  const double ratio = proj.cwiseAbs2().dot(d) / (vv * vv);
  return std::clamp(ratio, 0.0, 1.0);
}

Matrix kernel_basis(const Matrix& m, double rel_tol) {
  const Index n = m.cols();
  Matrix v;
  Vector s;
  if (std::min(m.rows(), n) > 64) {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
    v = svd.matrixV();
    s = svd.singularValues();
  } else {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    v = svd.matrixV();
    s = svd.singularValues();
  }
  const double smax = s.size() ? s(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * smax) ++rank;
  return v.rightCols(n - rank);
}

Matrix complement_basis(const Vector& unit) {
  const Index n = unit.size();
  Eigen::HouseholderQR<Matrix> qr{Matrix(unit)};
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - 1);
}

Matrix deflated_matrix(const Matrix& a, const WarmBasis& wb) {
  return a - wb.y * (wb.y.transpose() * a);
}

ClosedForm closed_form_solution(const Matrix& a, const Vector& b, const WarmBasis& wb,
                                double lambda, double alpha, const Preconditioner& l_z) {
  require(a.cols() <= 2000, "closed_form_solution: dense scale only (N <= 2000)");
  require(b.size() == a.rows() && l_z.diag.size() == a.cols(),
          "closed_form_solution: dimension mismatch");
  if (!(lambda > 0)) throw NumericalError("closed_form_solution: B~ + D_lambda is singular");
  const Matrix at = deflated_matrix(a, wb);
  const Vector bt = b - wb.y * wb.y.dot(b);
  Matrix sys = at.transpose() * at;
  sys.diagonal() += (lambda * lambda) * d_diag(l_z);
  Eigen::LLT<Matrix> llt(sys);
  if (llt.info() != Eigen::Success)
    throw NumericalError("closed_form_solution: B~ + D_lambda is singular");
  Vector w = llt.solve(at.transpose() * bt);
  ClosedForm out;
  out.z_w = w - wb.x_hat * wb.x_hat.dot(w);
  out.c_w = wb.gamma * wb.y.dot(b - a * out.z_w) / (wb.gamma * wb.gamma + alpha * alpha);
  out.x_w = out.z_w + out.c_w * wb.x_hat;
  return out;
}

Vector generalized_eigenvalues(const Matrix& b_tilde, const Preconditioner& l_z) {
  const Vector inv_sqrt = l_z.diag.cwiseInverse();  // D^{-1/2}
  const Matrix c = inv_sqrt.asDiagonal() * b_tilde * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

Vector resolvent_eigenvalues(const Matrix& b_tilde, const Preconditioner& l_z, double lambda) {
  const Vector theta = generalized_eigenvalues(b_tilde, l_z);
  const double l2 = lambda * lambda;
  Vector mu(theta.size());
  for (Index i = 0; i < theta.size(); ++i) mu(i) = l2 / (l2 + std::max(theta(i), 0.0));
  return mu;  // theta ascending -> mu descending
}

namespace {

double theta_plus_of(const Matrix& b_tilde, const Preconditioner& l_z, Index kernel_dim) {
  const Vector theta = generalized_eigenvalues(b_tilde, l_z);
  if (kernel_dim >= theta.size()) return std::numeric_limits<double>::infinity();
  return theta(kernel_dim);
}

}  // namespace

LemmaCheck lemma_bound_check(const Matrix& a_tilde, const Preconditioner& l_z, double lambda,
                             const Vector& v) {
  const Index n = a_tilde.cols();
  require(v.size() == n && l_z.diag.size() == n, "lemma_bound_check: dimension mismatch");
  require(lambda > 0, "lemma_bound_check: lambda must be positive");
  const Matrix b_tilde = a_tilde.transpose() * a_tilde;
  const Matrix kernel = kernel_basis(a_tilde);

  LemmaCheck out;
  out.theta_plus = theta_plus_of(b_tilde, l_z, kernel.cols());
  out.gamma_kernel = gamma_alignment(v, kernel, l_z);

  const double l2 = lambda * lambda;
  const Vector d_lambda = l2 * d_diag(l_z);
  Matrix sys = b_tilde;
  sys.diagonal() += d_lambda;
  Eigen::LLT<Matrix> llt(sys);
  if (llt.info() != Eigen::Success) throw NumericalError("lemma_bound_check: singular system");
  out.lhs = llt.solve(Vector(d_lambda.cwiseProduct(v))).norm();

  const double shrink =
      std::isinf(out.theta_plus) ? 0.0 : l2 * l2 / std::pow(l2 + out.theta_plus, 2);
  const double g = out.gamma_kernel;
  out.rhs = std::sqrt(g + shrink * (1.0 - g)) * d_norm(v, l_z) / l_z.sigma_min();
  out.holds = out.lhs <= out.rhs * (1.0 + 1e-8);
  return out;
}

BoundReport theorem_bound(const Vector& x_star, const WarmBasis& wb, const Matrix& a,
                          double lambda, double alpha, const Preconditioner& l_z,
                          const Vector& eta) {
  require(lambda > 0, "theorem_bound: lambda must be positive");
  require(x_star.size() == a.cols() && eta.size() == a.rows(),
          "theorem_bound: dimension mismatch");
  const Vector b = a * x_star + eta;
  const ClosedForm cf = closed_form_solution(a, b, wb, lambda, alpha, l_z);
  const Decomposition dec = Decomposition::of(x_star, wb.x_hat);
  const Matrix at = deflated_matrix(a, wb);
  const Matrix kernel = kernel_basis(at);

  BoundReport r;
  r.observed_error = (x_star - cf.x_w).norm();
  r.theta_plus = theta_plus_of(at.transpose() * at, l_z, kernel.cols());
  r.z_star_d_norm = d_norm(dec.z_star, l_z);
  r.x_star_d_norm = d_norm(x_star, l_z);
  r.gamma_z_kernel = dec.z_star.norm() > 0 ? gamma_alignment(dec.z_star, kernel, l_z) : 0.0;
  r.gamma_x_perp = x_star.norm() > 0
                       ? gamma_alignment(x_star, complement_basis(wb.x_hat), l_z)
                       : 0.0;

  const double g2a2 = wb.gamma * wb.gamma + alpha * alpha;
  const double smin_l = l_z.sigma_min();
  const double aty = (a.transpose() * wb.y).norm();
  const double smax_a = singular_values(a)(0);
  const double l2 = lambda * lambda;
  const double shrink =
      std::isinf(r.theta_plus) ? 0.0 : l2 * l2 / std::pow(l2 + r.theta_plus, 2);

  r.c1 = (1.0 + wb.gamma * aty / g2a2) / smin_l;
  r.c2 = std::sqrt(r.gamma_z_kernel + shrink * (1.0 - r.gamma_z_kernel));
  r.c3 = r.c1 * smax_a / (l2 * smin_l) + wb.gamma / g2a2;
  r.term_alpha = alpha * alpha * std::abs(dec.c_star) / g2a2;
  r.term_align = r.c1 * r.c2 * r.z_star_d_norm;
  r.term_align_gamma = r.c1 * r.c2 * r.gamma_x_perp * r.x_star_d_norm;
  r.term_noise = r.c3 * eta.norm();
  r.total = r.term_alpha + r.term_align + r.term_noise;
  return r;
}

double angle_loss(const Vector& pred, const Vector& truth) {
  require(pred.size() == truth.size(), "angle_loss: length mismatch");
  const double np = pred.norm(), nt = truth.norm();
  require(np > 0 && nt > 0, "angle_loss: zero vector");
  return std::clamp(1.0 - pred.dot(truth) / (np * nt), 0.0, 2.0);
}

double distance_loss(const Vector& pred, const Vector& truth) {
  require(pred.size() == truth.size(), "distance_loss: length mismatch");
  return (pred - truth).squaredNorm();
}

std::vector<ZSection> slice_sections(const Grid3& grid,
                                     const std::vector<std::pair<int, int>>& slices) {
  std::vector<ZSection> out;
  for (const auto& [first, last] : slices) {
    require(first >= 1 && last >= first && last <= grid.nz,
            "slice section must satisfy 1 <= first <= last <= nz");
    out.push_back({(first - 1) * grid.hz, last * grid.hz});
  }
  return out;
}

std::vector<ZSection> default_sections(const Grid3& grid) {
  const int nz = static_cast<int>(grid.nz);
  const int parts = std::min(4, nz);
  std::vector<std::pair<int, int>> slices;
  int start = 1;
  for (int p = 0; p < parts; ++p) {
    const int len = nz / parts + (p < nz % parts ? 1 : 0);
    slices.emplace_back(start, start + len - 1);
    start += len;
  }
  return slice_sections(grid, slices);
}

namespace {

double improvement(double baseline, double candidate) {
  if (baseline > 0) return 100.0 * (1.0 - candidate / baseline);
  return candidate == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

ZSectionTable rmse_by_zsection(const Vector& candidate, const Vector& baseline,
                               const Vector& x_star, const Grid3& grid,
                               const std::vector<ZSection>& sections) {
  const Index n = grid.size();
  require(candidate.size() == n && baseline.size() == n && x_star.size() == n,
          "rmse_by_zsection: vector length does not match the grid");
  require(!sections.empty(), "rmse_by_zsection: no sections");

  std::vector<double> sum_c(sections.size(), 0.0), sum_b(sections.size(), 0.0);
  std::vector<Index> count(sections.size(), 0);
  for (Index j = 0; j < n; ++j) {
    const double z = grid.center(j)[2];
    int owner = -1;
    for (std::size_t s = 0; s < sections.size(); ++s) {
      if (z >= sections[s].z_lo && z < sections[s].z_hi) {
        require(owner < 0, "rmse_by_zsection: sections overlap");
        owner = static_cast<int>(s);
      }
    }
    require(owner >= 0, "rmse_by_zsection: sections do not cover the grid depth");
    sum_c[owner] += std::pow(candidate(j) - x_star(j), 2);
    sum_b[owner] += std::pow(baseline(j) - x_star(j), 2);
    ++count[owner];
  }

  ZSectionTable table;
  for (std::size_t s = 0; s < sections.size(); ++s) {
    require(count[s] > 0, "rmse_by_zsection: empty section");
    ZSectionRow row;
    row.section = sections[s];
    row.voxels = count[s];
    row.baseline_rmse = std::sqrt(sum_b[s] / static_cast<double>(count[s]));
    row.candidate_rmse = std::sqrt(sum_c[s] / static_cast<double>(count[s]));
    row.improvement_pct = improvement(row.baseline_rmse, row.candidate_rmse);
    table.rows.push_back(row);
  }
  table.overall.section = {sections.front().z_lo, sections.back().z_hi};
  table.overall.voxels = n;
  table.overall.baseline_rmse = std::sqrt((baseline - x_star).squaredNorm() / n);
  table.overall.candidate_rmse = std::sqrt((candidate - x_star).squaredNorm() / n);
  table.overall.improvement_pct =
      improvement(table.overall.baseline_rmse, table.overall.candidate_rmse);
  return table;
}

double relative_error(const Vector& x, const Vector& x_star) {
  require(x.size() == x_star.size(), "relative_error: length mismatch");
  const double n = x_star.norm();
  require(n > 0, "relative_error: zero reference");
  return (x - x_star).norm() / n;
}

}  // namespace wbipm
