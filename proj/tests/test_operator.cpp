#include "test_util.hpp"

#include "wbipm/operator.hpp"

#include <doctest.h>

#include <cmath>

using namespace wbipm;

namespace {

// Independent dense assembly of the integrated 7-point operator for constant
// coefficients, written directly from the stencil definition.
Matrix dense_diffusion(const Grid3& g, double kappa, double mu_a, double robin) {
  const Index n = g.size();
  Matrix k = Matrix::Zero(n, n);
  const double h[3] = {g.hx, g.hy, g.hz};
  const double area[3] = {g.hy * g.hz, g.hx * g.hz, g.hx * g.hy};
  for (Index kk = 0; kk < g.nz; ++kk)
    for (Index j = 0; j < g.ny; ++j)
      for (Index i = 0; i < g.nx; ++i) {
        const Index p = i + g.nx * (j + g.ny * kk);
        k(p, p) += mu_a * g.hx * g.hy * g.hz;
        const Index c[3] = {i, j, kk};
        const Index dims[3] = {g.nx, g.ny, g.nz};
        for (int ax = 0; ax < 3; ++ax)
          for (int dir : {-1, 1}) {
            Index nb[3] = {c[0], c[1], c[2]};
            nb[ax] += dir;
            if (nb[ax] < 0 || nb[ax] >= dims[ax]) {
              // flux kappa (phi_b - phi_p)/(h/2) with phi_b = -robin * dphi/dn
              k(p, p) += area[ax] * kappa / (h[ax] / 2.0 + robin);
              continue;
            }
            const Index q = nb[0] + g.nx * (nb[1] + g.ny * nb[2]);
            k(p, p) += area[ax] * kappa / h[ax];
            k(p, q) -= area[ax] * kappa / h[ax];
          }
      }
  return k;
}

}  // namespace

TEST_CASE("grid with a single voxel layer is rejected") {
  Grid3 g{8, 8, 1, 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(g.validate(), ValidationError);
  Grid3 bad{8, 8, 4, 1.0, 0.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("voxel indexing is x-fastest and bijective") {
  Grid3 g{4, 3, 2, 1.0, 2.0, 0.5};
  for (Index p = 0; p < g.size(); ++p) {
    const auto [i, j, k] = g.ijk(p);
    CHECK(g.index(i, j, k) == p);
  }
  CHECK(g.index(1, 0, 0) == 1);
  CHECK(g.index(0, 1, 0) == 4);
  CHECK(g.index(0, 0, 1) == 12);
  const auto c = g.center(g.index(1, 2, 1));
  CHECK(c[0] == doctest::Approx(1.5));
  CHECK(c[1] == doctest::Approx(5.0));
  CHECK(c[2] == doctest::Approx(0.75));
}

TEST_CASE("operator shape and adjoint consistency") {
  Grid3 g{8, 8, 4, 1.0, 1.0, 1.0};
  const auto layout = regular_layout(g, 2, 2, 3, 3);
  const DenseMatrixOperator a = assemble_fmt_operator(g, OpticalCoefficients{}, layout);
  CHECK(a.rows() == 36);
  CHECK(a.cols() == 256);
  int violations = 0;
  for (int t = 0; t < 100; ++t) {
    const Vector v = testutil::random_vector(256, 1000 + t);
    const Vector u = testutil::random_vector(36, 5000 + t);
    const double lhs = a.apply(v).dot(u);
    const double rhs = v.dot(a.apply_adjoint(u));
    if (std::abs(lhs - rhs) > 1e-12 * a.frobenius_norm() * u.norm() * v.norm()) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("diffusion matrix matches an independent dense assembly") {
  Grid3 g{5, 4, 3, 1.0, 1.5, 0.75};
  const auto sparse = assemble_diffusion_matrix(g, 0.33, 0.01, 1.65);
  const Matrix ref = dense_diffusion(g, 0.33, 0.01, 1.65);
  CHECK((Matrix(sparse) - ref).norm() <= 1e-13 * ref.norm());
  CHECK((Matrix(sparse) - Matrix(sparse).transpose()).norm() == 0.0);
}

TEST_CASE("single fluorescent voxel: emission matches direct solves") {
  Grid3 g{8, 8, 4, 1.0, 1.0, 1.0};
  const OpticalCoefficients oc;
  const auto layout = regular_layout(g, 2, 2, 3, 3);
  const DenseMatrixOperator a = assemble_fmt_operator(g, oc, layout);
  const Index voxel = g.index(4, 4, 2);
  const Vector x = Vector::Unit(g.size(), voxel);
  const Vector b = a.apply(x);

  // Oracle: excitation solve per source, then the emission system driven by
  // eta * phi_ex * x, read at the detector node.
  const Matrix kex = dense_diffusion(g, 0.33, 0.01, 1.65);
  const Matrix kem = dense_diffusion(g, 0.33, 0.01, 1.65);
  const Eigen::FullPivLU<Matrix> lu_ex(kex), lu_em(kem);
  const double vol = g.voxel_volume();
  const Index nd = static_cast<Index>(layout.detectors.size());
  for (std::size_t s = 0; s < layout.sources.size(); ++s) {
    const Index src = nearest_bottom_node(g, layout.sources[s]);
    const Vector phi = lu_ex.solve(Vector(Vector::Unit(g.size(), src)));
    const Vector q = oc.eta * vol * phi.cwiseProduct(x);
    const Vector phi_em = lu_em.solve(q);
    Index best = 0;
    for (Index d = 0; d < nd; ++d) {
      const Index det = nearest_top_node(g, layout.detectors[d]);
      const double expect = phi_em(det);
      CHECK(b(static_cast<Index>(s) * nd + d) == doctest::Approx(expect).epsilon(1e-10));
      CHECK(b(static_cast<Index>(s) * nd + d) > 0.0);
      if (b(static_cast<Index>(s) * nd + d) > b(static_cast<Index>(s) * nd + best)) best = d;
    }
    // Detector nearest to the voxel's (x, y) is the middle one of the 3 x 3 grid.
    CHECK(best == 4);
  }
}

TEST_CASE("positivity for nonnegative inputs") {
  Grid3 g{6, 6, 3, 1.0, 1.0, 1.0};
  const DenseMatrixOperator a =
      assemble_fmt_operator(g, OpticalCoefficients{}, regular_layout(g, 2, 2, 2, 2));
  CHECK((a.coefficients().array() > 0.0).all());
  const Vector x = testutil::random_positive(g.size(), 3, 0.0, 1.0);
  CHECK((a.apply(x).array() >= 0.0).all());
}

TEST_CASE("layout positions must lie on their faces") {
  Grid3 g{4, 4, 4, 1.0, 1.0, 1.0};
  SourceDetectorLayout l;
  l.sources = {{1.0, 1.0, 0.5}};
  l.detectors = {{1.0, 1.0, 4.0}};
  CHECK_THROWS_AS(l.validate(g), ValidationError);
  l.sources = {{1.0, 1.0, 0.0}};
  CHECK_NOTHROW(l.validate(g));
  l.detectors = {{5.0, 1.0, 4.0}};
  CHECK_THROWS_AS(l.validate(g), ValidationError);
  CHECK_THROWS_AS(assemble_fmt_operator(g, OpticalCoefficients{}, l), ValidationError);
}

TEST_CASE("invalid optical coefficients are rejected") {
  Grid3 g{4, 4, 4, 1.0, 1.0, 1.0};
  OpticalCoefficients oc;
  oc.mu_a_ex = -0.01;
  CHECK_THROWS_AS(oc.validate(g), ValidationError);
  oc = OpticalCoefficients{};
  oc.kappa_em = Field(Vector::Constant(5, 0.3));  // wrong length
  CHECK_THROWS_AS(oc.validate(g), ValidationError);
}

TEST_CASE("phantom generation") {
  Grid3 g{16, 16, 8, 1.0, 1.0, 1.0};
  SUBCASE("ellipsoid around one voxel centre gives a unit vector") {
    PhantomSpec spec;
    spec.inclusions = {{{4.5, 5.5, 2.5}, {0.4, 0.4, 0.4}, 1.0}};
    const Vector x = generate_phantom(g, spec, 0);
    CHECK(x.sum() == 1.0);
    CHECK(x(g.index(4, 5, 2)) == 1.0);
  }
  SUBCASE("two disjoint ellipsoids") {
    PhantomSpec spec;
    spec.inclusions = {{{4.0, 4.0, 3.0}, {2.0, 2.0, 1.5}, 1.0},
                       {{12.0, 12.0, 4.0}, {2.0, 2.0, 2.0}, 2.0}};
    const Vector x = generate_phantom(g, spec, 0);
    CHECK(x.maxCoeff() == 2.0);
    const auto ones = (x.array() == 1.0).count();
    const auto twos = (x.array() == 2.0).count();
    CHECK(ones > 0);
    CHECK(twos > 0);
    CHECK(ones + twos == (x.array() > 0.0).count());
  }
  SUBCASE("ellipsoid outside the slab is rejected") {
    PhantomSpec spec;
    spec.inclusions = {{{1.0, 4.0, 4.0}, {2.0, 1.0, 1.0}, 1.0}};
    CHECK_THROWS_AS(generate_phantom(g, spec, 0), ValidationError);
  }
  SUBCASE("seeded random phantom is deterministic and sparse") {
    PhantomSpec spec;
    spec.random_count = 3;
    const Vector a = generate_phantom(g, spec, 42);
    const Vector b = generate_phantom(g, spec, 42);
    CHECK(a == b);
    CHECK((a.array() > 0).count() > 0);
    CHECK((a.array() > 0).count() < g.size() / 2);
    CHECK(generate_phantom(g, spec, 43) != a);
  }
  SUBCASE("inclusion count must be 1..3") {
    PhantomSpec spec;
    spec.random_count = 4;
    CHECK_THROWS_AS(generate_phantom(g, spec, 1), ValidationError);
  }
}

TEST_CASE("noise calibration") {
  const Vector b = testutil::random_positive(200, 9, 0.1, 2.0);
  SUBCASE("sigma = 0 leaves data untouched") {
    const NoisyData nd = add_noise(b, 0.0, 1);
    CHECK(nd.b == b);
    CHECK(nd.eta.norm() == 0.0);
  }
  SUBCASE("5% level is exact") {
    const NoisyData nd = add_noise(b, 0.05, 1);
    CHECK(std::abs(nd.eta.norm() / b.norm() - 0.05) <= 1e-14 * 0.05);
    CHECK((nd.b - b - nd.eta).norm() <= 1e-15 * b.norm());
  }
  SUBCASE("different seeds, same norm") {
    const NoisyData n1 = add_noise(b, 0.1, 1);
    const NoisyData n2 = add_noise(b, 0.1, 2);
    CHECK(n1.eta != n2.eta);
    CHECK(n1.eta.norm() == doctest::Approx(n2.eta.norm()).epsilon(1e-14));
    CHECK(add_noise(b, 0.1, 1).eta == n1.eta);
  }
  SUBCASE("zero data with positive sigma") {
    CHECK_THROWS_AS(add_noise(Vector::Zero(5), 0.1, 1), ValidationError);
  }
}
