#include "test_util.hpp"

#include "wbipm/gk.hpp"
#include "wbipm/solver.hpp"

#include <doctest.h>

#include <cmath>

using namespace wbipm;
using testutil::random_matrix;
using testutil::random_vector;

namespace {

struct Fixture {
  DenseMatrixOperator a;
  Vector b;
  WarmBasis wb;
};

Fixture make_fixture(Index m, Index n, std::uint64_t seed) {
  Fixture f{DenseMatrixOperator(random_matrix(m, n, seed)), random_vector(m, seed + 1), {}};
  f.wb = WarmBasis::from_vector(f.a, random_vector(n, seed + 2));
  return f;
}

Matrix dense_a_tilde(const Fixture& f) {
  return f.a.dense() - f.wb.y * (f.wb.y.transpose() * f.a.dense());
}

void check_relations(const AfgkState& s, const DeflatedSystem& ds, double tol) {
  const AfgkResiduals r = afgk_residuals(s, ds);
  CHECK(r.u_orthogonality <= tol);
  CHECK(r.v_orthogonality <= tol);
  CHECK(r.range_relation <= tol * r.a_tilde_frobenius);
  CHECK(r.adjoint_relation <= tol * r.a_tilde_frobenius);
  CHECK(r.warm_orthogonality <= tol);
  CHECK(r.qr_relation <= tol * s.z.norm());
}

}  // namespace

TEST_CASE("deflation examples and invariants") {
  SUBCASE("identity operator") {
    const DenseMatrixOperator a(Matrix(Matrix::Identity(3, 3)));
    const WarmBasis wb = WarmBasis::from_vector(a, Vector::Unit(3, 0));
    const Vector b = Vector::LinSpaced(3, 1, 3);
    const DeflatedSystem ds = deflate(a, b, wb);
    CHECK(wb.gamma == 1.0);
    CHECK(wb.y == Vector::Unit(3, 0));
    CHECK(ds.b_tilde() == Vector((Vector(3) << 0, 2, 3).finished()));
    for (Index j = 0; j < 3; ++j) {
      const Vector col = ds.apply(Vector::Unit(3, j));
      CHECK(col == (j == 0 ? Vector(Vector::Zero(3)) : Vector(Vector::Unit(3, j))));
    }
  }
  SUBCASE("random system") {
    const Fixture f = make_fixture(12, 9, 3);
    const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
    CHECK(std::abs(f.wb.y.norm() - 1.0) <= 1e-12);
    CHECK(std::abs(f.wb.y.dot(ds.b_tilde())) <= 1e-12 * f.b.norm());
    for (int t = 0; t < 10; ++t) {
      const Vector v = random_vector(9, 100 + t);
      CHECK(std::abs(f.wb.y.dot(ds.apply(v))) <= 1e-12 * f.a.frobenius_norm() * v.norm());
    }
    CHECK(ds.apply(f.wb.x_hat).norm() <= 1e-10 * f.wb.gamma);
    // A~^T is the adjoint of A~.
    const Matrix at = dense_a_tilde(f);
    const Vector u = random_vector(12, 7);
    CHECK((ds.apply_adjoint(u) - at.transpose() * u).norm() <= 1e-12 * at.norm() * u.norm());
  }
  SUBCASE("warm basis in the kernel") {
    Matrix m = random_matrix(5, 4, 1);
    m.col(2).setZero();
    const DenseMatrixOperator a(m);
    CHECK_THROWS_WITH_AS(WarmBasis::from_vector(a, Vector::Unit(4, 2)),
                         "warm basis in kernel of A", ValidationError);
  }
}

TEST_CASE("split identity of the residual") {
  const Fixture f = make_fixture(10, 8, 11);
  const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
  for (int t = 0; t < 5; ++t) {
    const double c = random_vector(1, 50 + t)(0);
    const Vector z = ds.project_solution(random_vector(8, 60 + t));
    const Vector x = c * f.wb.x_hat + z;
    const double lhs = (f.a.apply(x) - f.b).squaredNorm();
    const double s = f.wb.y.dot(f.a.apply(z));
    const double rhs = (ds.apply(z) - ds.b_tilde()).squaredNorm() +
                       std::pow(f.wb.gamma * c + s - f.wb.y.dot(f.b), 2);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * lhs);
  }
}

TEST_CASE("afgk initialization") {
  const DenseMatrixOperator eye(Matrix(Matrix::Identity(3, 3)));
  SUBCASE("no deflation") {
    const DeflatedSystem ds = DeflatedSystem::identity(eye, Vector((Vector(3) << 3, 4, 0).finished()));
    const AfgkState s = afgk_init(ds);
    CHECK(s.beta == 5.0);
    CHECK(s.u.col(0).isApprox(Vector((Vector(3) << 0.6, 0.8, 0.0).finished()), 1e-15));
    CHECK(s.k == 0);
    CHECK(s.z.cols() == 0);
  }
  const WarmBasis wb = WarmBasis::from_vector(eye, Vector::Unit(3, 0));
  SUBCASE("b orthogonal to y") {
    const Vector b = (Vector(3) << 0, 2, 3).finished();
    const DeflatedSystem ds = deflate(eye, b, wb);
    CHECK(ds.b_tilde() == b);
    CHECK(afgk_init(ds).beta == doctest::Approx(b.norm()));
  }
  SUBCASE("b parallel to y") {
    const DeflatedSystem ds = deflate(eye, Vector::Unit(3, 0) * 2.0, wb);
    CHECK_THROWS_AS(afgk_init(ds), ExplainedByWarmBasis);
    CHECK_THROWS_AS(afgk_init(ds), NumericalError);
  }
}

TEST_CASE("factorization relations after k steps") {
  const Fixture f = make_fixture(30, 20, 21);
  SUBCASE("identity preconditioner") {
    const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
    AfgkState s = afgk_init(ds);
    for (int i = 0; i < 12; ++i) REQUIRE(afgk_step(s, ds, Vector()) == StepStatus::Ok);
    check_relations(s, ds, 1e-10);
    // R_Z upper triangular with nonnegative diagonal.
    CHECK(s.qr.r.isUpperTriangular(0.0));
    CHECK((s.qr.r.diagonal().array() >= 0).all());
  }
  SUBCASE("iteration-dependent preconditioners") {
    const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
    AfgkState s = afgk_init(ds);
    for (int i = 0; i < 12; ++i)
      REQUIRE(afgk_step(s, ds, testutil::random_positive(20, 300 + i, 0.2, 3.0)) ==
              StepStatus::Ok);
    check_relations(s, ds, 1e-10);
    // G is upper Hessenberg.
    for (Index j = 0; j < s.g.cols(); ++j)
      for (Index i = j + 2; i < s.g.rows(); ++i) CHECK(s.g(i, j) == 0.0);
  }
}

TEST_CASE("reduces to classical Golub-Kahan without warm basis and preconditioner") {
  const Matrix am = random_matrix(30, 20, 31);
  const DenseMatrixOperator a(am);
  const Vector b = random_vector(30, 32);
  const int k = 8;

  // Reference bidiagonalization with full reorthogonalization.
  Matrix u(30, k + 1), v(20, k);
  Vector alpha(k), beta(k + 1);
  beta(0) = b.norm();
  u.col(0) = b / beta(0);
  for (int i = 0; i < k; ++i) {
    Vector w = am.transpose() * u.col(i);
    if (i > 0) w -= beta(i) * v.col(i - 1);
    for (int pass = 0; pass < 2; ++pass) w -= v.leftCols(i) * (v.leftCols(i).transpose() * w);
    alpha(i) = w.norm();
    v.col(i) = w / alpha(i);
    Vector p = am * v.col(i) - alpha(i) * u.col(i);
    for (int pass = 0; pass < 2; ++pass)
      p -= u.leftCols(i + 1) * (u.leftCols(i + 1).transpose() * p);
    beta(i + 1) = p.norm();
    u.col(i + 1) = p / beta(i + 1);
  }

  const DeflatedSystem ds = DeflatedSystem::identity(a, b);
  AfgkState s = afgk_init(ds);
  for (int i = 0; i < k; ++i) afgk_step(s, ds, Vector());
  CHECK(s.beta == doctest::Approx(beta(0)).epsilon(1e-14));
  CHECK((s.u - u).norm() <= 1e-10);
  CHECK((s.v - v).norm() <= 1e-10);
  CHECK((s.z - v).norm() <= 1e-10);
  Matrix bidiag = Matrix::Zero(k + 1, k);
  for (int i = 0; i < k; ++i) {
    bidiag(i, i) = alpha(i);
    bidiag(i + 1, i) = beta(i + 1);
  }
  CHECK((s.g - bidiag).norm() <= 1e-10 * bidiag.norm());
  for (int i = 0; i < k; ++i) {
    CHECK(s.t(i, i) == doctest::Approx(alpha(i)).epsilon(1e-10));
    if (i > 0) CHECK(s.t(i - 1, i) == doctest::Approx(beta(i)).epsilon(1e-10));
  }
}

TEST_CASE("zero operator breaks down at the first step") {
  const DenseMatrixOperator a(Matrix(Matrix::Zero(6, 4)));
  const DeflatedSystem ds = DeflatedSystem::identity(a, Vector::Ones(6));
  AfgkState s = afgk_init(ds);
  CHECK(afgk_step(s, ds, Vector()) == StepStatus::Breakdown);
  CHECK(s.k == 0);
  CHECK(s.exhausted);
}

TEST_CASE("solution subspace equals the deflated preconditioned Krylov space") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture f = make_fixture(15, 10, 700 + seed);
    const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
    const Vector l_inv = testutil::random_positive(10, 800 + seed, 0.5, 2.0);
    const Matrix at = dense_a_tilde(f);
    AfgkState s = afgk_init(ds);
    for (int k = 1; k <= 4; ++k) {
      afgk_step(s, ds, l_inv);
      Matrix ours(10, k + 1), krylov(10, k + 1);
      ours.col(0) = f.wb.x_hat;
      ours.rightCols(k) = s.z;
      krylov.col(0) = f.wb.x_hat;
      Vector w = l_inv.cwiseProduct(at.transpose() * ds.b_tilde());
      for (int j = 1; j <= k; ++j) {
        krylov.col(j) = w / w.norm();
        w = l_inv.cwiseProduct(at.transpose() * (at * w));
      }
      CHECK(testutil::subspace_distance(ours, krylov) <= 1e-8);
    }
  }
}

TEST_CASE("qr_append") {
  SUBCASE("first column") {
    ThinQr qr;
    qr.q.resize(3, 0);
    qr.r.resize(0, 0);
    REQUIRE(qr_append(qr, Vector::Unit(3, 1) * 2.0) == AppendStatus::Ok);
    CHECK(qr.q.col(0) == Vector::Unit(3, 1));
    CHECK(qr.r(0, 0) == 2.0);
  }
  SUBCASE("column in the range is rank deficient") {
    ThinQr qr;
    qr.q.resize(4, 0);
    qr.r.resize(0, 0);
    qr_append(qr, random_vector(4, 1));
    qr_append(qr, random_vector(4, 2));
    const Vector inside = qr.q * Vector((Vector(2) << 0.3, -1.2).finished());
    CHECK(qr_append(qr, inside) == AppendStatus::RankDeficient);
    CHECK(qr.q.cols() == 2);
  }
  SUBCASE("sequential append equals a from-scratch factorization") {
    const Matrix z = random_matrix(50, 10, 5);
    ThinQr qr;
    qr.q.resize(50, 0);
    qr.r.resize(0, 0);
    for (Index j = 0; j < 10; ++j) REQUIRE(qr_append(qr, z.col(j)) == AppendStatus::Ok);
    CHECK((z - qr.q * qr.r).norm() <= 1e-10 * z.norm());
    CHECK((qr.r.diagonal().array() >= 0).all());

    Eigen::HouseholderQR<Matrix> ref(z);
    Matrix q_ref = ref.householderQ() * Matrix::Identity(50, 10);
    Matrix r_ref = ref.matrixQR().topRows(10).triangularView<Eigen::Upper>();
    for (Index j = 0; j < 10; ++j)
      if (r_ref(j, j) < 0) {
        r_ref.row(j) *= -1.0;
        q_ref.col(j) *= -1.0;
      }
    CHECK((qr.q - q_ref).norm() <= 1e-10);
    CHECK((qr.r - r_ref).norm() <= 1e-10 * z.norm());
  }
}

TEST_CASE("projected least squares") {
  SUBCASE("scalar normal equation") {
    AfgkState s;
    s.k = 1;
    s.beta = 2.0;
    s.g = (Matrix(2, 1) << 3.0, 4.0).finished();
    s.qr.r = (Matrix(1, 1) << 0.5).finished();
    const double lambda = 1.5;
    const ProjectedSolution p = solve_projected(s, lambda);
    CHECK(p.d(0) == doctest::Approx(3.0 * 2.0 / (9.0 + 16.0 + lambda * lambda * 0.25)));
    CHECK_THROWS_AS(solve_projected(s, -1.0), ValidationError);
  }
  SUBCASE("lambda = 0 matches the dense least-squares residual over range(Z)") {
    const Fixture f = make_fixture(25, 15, 41);
    const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
    AfgkState s = afgk_init(ds);
    for (int i = 0; i < 6; ++i) afgk_step(s, ds, testutil::random_positive(15, 90 + i, 0.5, 2.0));
    const ProjectedSolution p = solve_projected(s, 0.0);
    const Matrix az = dense_a_tilde(f) * s.z;
    const Vector d_ls = az.colPivHouseholderQr().solve(ds.b_tilde());
    const double ls_res = (az * d_ls - ds.b_tilde()).norm();
    CHECK(std::abs(p.residual - ls_res) <= 1e-10 * ds.b_tilde().norm());
    CHECK((ds.apply(s.z * p.d) - ds.b_tilde()).norm() ==
          doctest::Approx(p.residual).epsilon(1e-10));
  }
  SUBCASE("Tikhonov shrinkage") {
    const Fixture f = make_fixture(25, 15, 43);
    const DeflatedSystem ds = deflate(f.a, f.b, f.wb);
    AfgkState s = afgk_init(ds);
    for (int i = 0; i < 5; ++i) afgk_step(s, ds, Vector());
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {1.0, 10.0, 100.0, 1000.0}) {
      const double n = solve_projected(s, lambda).d.norm();
      CHECK(n < prev);
      prev = n;
    }
  }
  SUBCASE("rank-deficient stacked system at lambda = 0") {
    AfgkState s;
    s.k = 2;
    s.beta = 1.0;
    s.g = Matrix::Zero(3, 2);
    s.g(0, 0) = 1.0;
    s.qr.r = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(solve_projected(s, 0.0), NumericalError);
    CHECK_NOTHROW(solve_projected(s, 0.1));
  }
}

TEST_CASE("closed-form coefficient update") {
  CHECK(solve_c(1.0, 0.0, 2.0, 0.0) == 2.0);
  CHECK(solve_c(2.0, 1.0, 5.0, 1.0) == doctest::Approx(1.6));
  // Brute-force scan of (gamma c + s - t)^2 + alpha^2 c^2.
  const double gamma = 0.7, s = -0.4, t = 1.9, alpha = 0.45;
  double best_c = 0.0, best = std::numeric_limits<double>::infinity();
  for (long i = -100000; i <= 100000; ++i) {
    const double c = i * 1e-4;
    const double f = std::pow(gamma * c + s - t, 2) + alpha * alpha * c * c;
    if (f < best) {
      best = f;
      best_c = c;
    }
  }
  CHECK(std::abs(solve_c(gamma, s, t, alpha) - best_c) <= 1e-4);
}
