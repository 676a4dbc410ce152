#include "wbipm/gk.hpp"

#include <cmath>

namespace wbipm {

DeflatedSystem DeflatedSystem::identity(const LinearOperator& a, Vector b) {
  require(b.size() == a.rows(), "measurement length does not match the operator");
  DeflatedSystem ds;
  ds.op_ = &a;
  ds.deflated_ = false;
  ds.b_tilde_ = b;
  ds.b_ = std::move(b);
  return ds;
}

DeflatedSystem DeflatedSystem::with_warm_basis(const LinearOperator& a, Vector b, Vector x_hat,
                                               Vector y, double gamma) {
  require(b.size() == a.rows(), "measurement length does not match the operator");
  require(x_hat.size() == a.cols() && y.size() == a.rows(), "warm basis dimension mismatch");
  require(gamma > 0 && std::isfinite(gamma), "gamma must be positive");
  DeflatedSystem ds;
  ds.op_ = &a;
  ds.deflated_ = true;
  ds.x_hat_ = std::move(x_hat);
  ds.y_ = std::move(y);
  ds.gamma_ = gamma;
  ds.y_dot_b_ = ds.y_.dot(b);
  ds.b_ = std::move(b);
  ds.b_tilde_ = ds.project_data(ds.b_);
  return ds;
}

Vector DeflatedSystem::project_data(Vector u) const {
  if (deflated_) u -= y_ * y_.dot(u);
  return u;
}

Vector DeflatedSystem::project_solution(Vector z) const {
  if (deflated_) z -= x_hat_ * x_hat_.dot(z);
  return z;
}

Vector DeflatedSystem::apply(const Vector& z) const { return project_data(op_->apply(z)); }

Vector DeflatedSystem::apply_adjoint(const Vector& u) const {
  return op_->apply_adjoint(project_data(u));
}

namespace {

// Orthogonalizes h against the columns of `basis` in place and returns the
// accumulated coefficients. A second pass runs when the first pass leaves
// less than `keep` of the original norm.
Vector orthogonalize(const Eigen::Ref<const Matrix>& basis, Vector& h, double keep) {
  Vector coef = Vector::Zero(basis.cols());
  if (basis.cols() == 0) return coef;
  const double before = h.norm();
  coef = basis.transpose() * h;
  h.noalias() -= basis * coef;
  if (h.norm() < keep * before) {
    const Vector again = basis.transpose() * h;
    h.noalias() -= basis * again;
    coef += again;
  }
  return coef;
}

constexpr double kTwiceIsEnough = 0.7071067811865476;

void append_col(Matrix& m, Index rows, const Vector& c) {
  const Index old_rows = m.rows(), old_cols = m.cols();
  m.conservativeResize(rows, old_cols + 1);
  if (rows > old_rows) m.bottomRows(rows - old_rows).setZero();
  m.col(old_cols).setZero();
  m.col(old_cols).head(c.size()) = c;
}

}  // namespace

AppendStatus qr_append(ThinQr& qr, const Vector& z_new, double rankdef_tol) {
  const Index k = qr.q.cols();
  require(qr.r.rows() == k && qr.r.cols() == k, "qr_append: R must be k x k");
  require(k == 0 || qr.q.rows() == z_new.size(), "qr_append: length mismatch");

  Vector w = z_new;
  const double znorm = w.norm();
  Vector coef = Vector::Zero(k);
  if (k > 0) {
    coef = qr.q.transpose() * w;
    w.noalias() -= qr.q * coef;
    if (w.norm() * 1e3 < znorm) {
      const Vector again = qr.q.transpose() * w;
      w.noalias() -= qr.q * again;
      coef += again;
    }
  }
  const double r = w.norm();
  if (!(r > rankdef_tol * znorm)) return AppendStatus::RankDeficient;

  if (k == 0) qr.q.resize(z_new.size(), 0);
  qr.q.conservativeResize(Eigen::NoChange, k + 1);
  qr.q.col(k) = w / r;
  Vector rcol(k + 1);
  rcol.head(k) = coef;
  rcol(k) = r;
  append_col(qr.r, k + 1, rcol);
  return AppendStatus::Ok;
}

AfgkState afgk_init(const DeflatedSystem& ds) {
  AfgkState s;
  s.beta = ds.b_tilde().norm();
  // b~ at rounding level relative to b counts as zero.
  if (!(s.beta > 1e-14 * ds.b().norm()))
    throw ExplainedByWarmBasis(
        "measurement already explained by warm basis direction (b~ = 0)");
  s.u = ds.b_tilde() / s.beta;
  s.v.resize(ds.cols(), 0);
  s.z.resize(ds.cols(), 0);
  s.g.resize(1, 0);
  s.t.resize(0, 0);
  s.qr.q.resize(ds.cols(), 0);
  s.qr.r.resize(0, 0);
  s.y_a_z.resize(0);
  return s;
}

StepStatus afgk_step(AfgkState& s, const DeflatedSystem& ds, const Vector& l_inv,
                     double breakdown_tol) {
  if (s.exhausted) return StepStatus::Breakdown;
  require(l_inv.size() == 0 || l_inv.size() == ds.cols(), "afgk_step: preconditioner length");
  const Index i = s.k;  // zero-based index of the new column

  // v side: h = A~^T u_i, orthogonalized against v_1..v_{i-1}.
  Vector h = ds.apply_adjoint(s.u.col(i));
  const double h_norm0 = h.norm();
  const Vector t_col = orthogonalize(s.v, h, kTwiceIsEnough);
  const double t_ii = h.norm();
  if (!(h_norm0 > 0.0) || t_ii <= breakdown_tol * h_norm0) {
    s.exhausted = true;
    return StepStatus::Breakdown;
  }
  const Vector v_i = h / t_ii;

  // z_i = L_i^{-1} v_i, kept orthogonal to the warm basis.
  Vector z_i = l_inv.size() == 0 ? v_i : Vector(l_inv.cwiseProduct(v_i));
  z_i = ds.project_solution(std::move(z_i));

  ThinQr qr = s.qr;
  if (qr_append(qr, z_i) == AppendStatus::RankDeficient) {
    s.exhausted = true;
    return StepStatus::Breakdown;
  }

  // u side: h = A~ z_i, orthogonalized against u_1..u_i.
  const Vector a_z = ds.op().apply(z_i);
  const double y_a_z = ds.deflated() ? ds.y().dot(a_z) : 0.0;
  h = ds.project_data(a_z);
  const double g_norm0 = h.norm();
  const Vector g_col = orthogonalize(s.u, h, kTwiceIsEnough);
  const double g_next = h.norm();

  // Commit the new column.
  s.v.conservativeResize(Eigen::NoChange, i + 1);
  s.v.col(i) = v_i;
  Vector tc(i + 1);
  tc.head(i) = t_col;
  tc(i) = t_ii;
  append_col(s.t, i + 1, tc);
  s.z.conservativeResize(Eigen::NoChange, i + 1);
  s.z.col(i) = z_i;
  s.qr = std::move(qr);
  s.y_a_z.conservativeResize(i + 1);
  s.y_a_z(i) = y_a_z;
  Vector gc(i + 2);
  gc.head(i + 1) = g_col;
  gc(i + 1) = g_next;
  append_col(s.g, i + 2, gc);
  s.k = i + 1;

  if (!(g_norm0 > 0.0) || g_next <= breakdown_tol * g_norm0) {
    s.exhausted = true;
    return StepStatus::Breakdown;
  }
  s.u.conservativeResize(Eigen::NoChange, i + 2);
  s.u.col(i + 1) = h / g_next;
  return StepStatus::Ok;
}

AfgkResiduals afgk_residuals(const AfgkState& s, const DeflatedSystem& ds) {
  AfgkResiduals r;
  const Index k = s.k;
  auto ortho = [](const Matrix& m) {
    return (m.transpose() * m - Matrix::Identity(m.cols(), m.cols())).norm();
  };
  r.u_orthogonality = ortho(s.u);
  r.v_orthogonality = ortho(s.v);

  Matrix az(ds.rows(), k);
  for (Index j = 0; j < k; ++j) az.col(j) = ds.apply(s.z.col(j));
  const Index ucols = s.u.cols();
  r.range_relation = (az - s.u * s.g.topRows(ucols)).norm();

  Matrix atu(ds.cols(), k);
  for (Index j = 0; j < k; ++j) atu.col(j) = ds.apply_adjoint(s.u.col(j));
  r.adjoint_relation = (atu - s.v * s.t).norm();

  r.warm_orthogonality =
      ds.deflated() && k > 0 ? (ds.x_hat().transpose() * s.z).cwiseAbs().maxCoeff() : 0.0;
  r.qr_relation = k > 0 ? (s.z - s.qr.q * s.qr.r).norm() : 0.0;

  double fro2 = 0.0;
  for (Index j = 0; j < ds.cols(); ++j) fro2 += ds.apply(Vector::Unit(ds.cols(), j)).squaredNorm();
  r.a_tilde_frobenius = std::sqrt(fro2);
  return r;
}

ProjectedSolution solve_projected(const AfgkState& s, double lambda) {
  require(s.k >= 1, "solve_projected: no basis vectors yet");
  require(lambda >= 0 && std::isfinite(lambda), "solve_projected: lambda must be >= 0");
  const Index k = s.k, gr = s.g.rows();
  Matrix stacked = Matrix::Zero(gr + k, k);
  stacked.topRows(gr) = s.g;
  stacked.bottomRows(k) = lambda * s.qr.r;
  Vector rhs = Vector::Zero(gr + k);
  rhs(0) = s.beta;

  Eigen::ColPivHouseholderQR<Matrix> qr(stacked);
  if (qr.rank() < k)
    throw NumericalError("solve_projected: stacked system is rank deficient");
  ProjectedSolution out;
  out.d = qr.solve(rhs);
  Vector res = s.g * out.d;
  res(0) -= s.beta;
  out.residual = res.norm();
  return out;
}

double solve_c(double gamma, double s, double t, double alpha) {
  require(gamma > 0, "solve_c: gamma must be positive");
  return gamma * (t - s) / (gamma * gamma + alpha * alpha);
}

}  // namespace wbipm
