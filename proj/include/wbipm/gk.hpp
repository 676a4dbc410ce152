#pragma once

#include "wbipm/common.hpp"
#include "wbipm/operator.hpp"

namespace wbipm {

// The deflated pair (A~, b~) with A~ = (I - y y^T) A and b~ = (I - y y^T) b.
// A~ is applied through rank-one corrections and never formed. Without a warm
// basis the projector is the identity and A~ = A.
//
// The referenced operator must outlive this object.
class DeflatedSystem {
 public:
  static DeflatedSystem identity(const LinearOperator& a, Vector b);
  // x_hat and y are expected to be unit vectors with A x_hat = gamma y.
  static DeflatedSystem with_warm_basis(const LinearOperator& a, Vector b, Vector x_hat,
                                        Vector y, double gamma);

  const LinearOperator& op() const { return *op_; }
  bool deflated() const { return deflated_; }
  Index rows() const { return op_->rows(); }
  Index cols() const { return op_->cols(); }

  const Vector& b() const { return b_; }
  const Vector& b_tilde() const { return b_tilde_; }
  const Vector& y() const { return y_; }
  const Vector& x_hat() const { return x_hat_; }
  double gamma() const { return gamma_; }
  double y_dot_b() const { return y_dot_b_; }

  // (I - y y^T) u
  Vector project_data(Vector u) const;
  // (I - x_hat x_hat^T) z
  Vector project_solution(Vector z) const;

  Vector apply(const Vector& z) const;          // A~ z
  Vector apply_adjoint(const Vector& u) const;  // A~^T u

 private:
  DeflatedSystem() = default;

  const LinearOperator* op_ = nullptr;
  bool deflated_ = false;
  Vector b_, b_tilde_, y_, x_hat_;
  double gamma_ = 0.0;
  double y_dot_b_ = 0.0;
};

struct ThinQr {
  Matrix q;  // N x k, orthonormal columns
  Matrix r;  // k x k, upper triangular, nonnegative diagonal
};

enum class AppendStatus { Ok, RankDeficient };

// Appends one column to a thin QR factorization in O(Nk). A second
// Gram-Schmidt pass runs when the first one shrinks the vector by more than
// a factor 1e3. On RankDeficient the factors are left untouched.
AppendStatus qr_append(ThinQr& qr, const Vector& z_new, double rankdef_tol = 1e-12);

// Factorization state of the augmented flexible Golub-Kahan process after k
// steps:
//   A~ Z = U G,   A~^T U_k = V T,   Z = Q_Z R_Z,   x_hat^T Z = 0.
struct AfgkState {
  Matrix u;  // M x (k+1); M x k when the process stopped on a g-breakdown
  Matrix v;  // N x k
  Matrix z;  // N x k
  Matrix g;  // (k+1) x k, upper Hessenberg
  Matrix t;  // k x k, upper triangular
  ThinQr qr;
  Vector y_a_z;  // y^T A z_i for each column; zero without deflation
  double beta = 0.0;
  Index k = 0;
  bool exhausted = false;  // no further growth is possible
};

enum class StepStatus { Ok, Breakdown };

// Error raised when b~ = 0: the warm-basis direction already explains the data.
class ExplainedByWarmBasis : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

AfgkState afgk_init(const DeflatedSystem& ds);

// One loop iteration of the AFGK process. `l_inv` holds the diagonal of
// L_i^{-1}; an empty vector means L_i = I.
//
// The u-side Gram-Schmidt runs against u_1..u_i (g_ji = h^T u_j), not
// against v_j as the recurrence is sometimes written.
//
// Breakdown (t_ii or g_{i+1,i} at or below breakdown_tol relative to the
// norm of the vector before orthogonalization) marks the state as exhausted.
// On a g-breakdown the new column z_i is still committed because it carries
// the remaining information.
StepStatus afgk_step(AfgkState& state, const DeflatedSystem& ds, const Vector& l_inv,
                     double breakdown_tol = 1e-12);

struct AfgkResiduals {
  double u_orthogonality = 0.0;   // ||U^T U - I||_F
  double v_orthogonality = 0.0;   // ||V^T V - I||_F
  double range_relation = 0.0;    // ||A~ Z - U G||_F
  double adjoint_relation = 0.0;  // ||A~^T U_k - V T||_F
  double warm_orthogonality = 0.0;  // ||x_hat^T Z||_inf
  double qr_relation = 0.0;       // ||Z - Q_Z R_Z||_F
  double a_tilde_frobenius = 0.0;  // ||A~||_F, computed densely
};

// Diagnostics that rebuild every product from operator applications.
AfgkResiduals afgk_residuals(const AfgkState& state, const DeflatedSystem& ds);

struct ProjectedSolution {
  Vector d;
  double residual = 0.0;  // ||G d - beta e_1||
};

// d = argmin ||G d - beta e_1||^2 + lambda^2 ||R_Z d||^2 through a dense
// (2k+1) x k least-squares solve.
ProjectedSolution solve_projected(const AfgkState& state, double lambda);

// Minimizer of (gamma c + s - t)^2 + alpha^2 c^2.
double solve_c(double gamma, double s, double t, double alpha);

}  // namespace wbipm
