#include "wbipm/operator.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <random>

namespace wbipm {

DenseMatrixOperator::DenseMatrixOperator(Storage coefficients) : a_(std::move(coefficients)) {
  require(a_.allFinite(), "operator has non-finite entries");
  frobenius_ = a_.norm();
}

Vector DenseMatrixOperator::apply(const Vector& x) const {
  require(x.size() == a_.cols(), "apply: length mismatch");
  return a_ * x;
}

Vector DenseMatrixOperator::apply_adjoint(const Vector& u) const {
  require(u.size() == a_.rows(), "apply_adjoint: length mismatch");
  return a_.transpose() * u;
}

void Grid3::validate() const {
  require(nx >= 2 && ny >= 2 && nz >= 2, "grid: every voxel count must be >= 2");
  require(hx > 0 && hy > 0 && hz > 0 && std::isfinite(hx) && std::isfinite(hy) &&
              std::isfinite(hz),
          "grid: voxel pitch must be positive");
}

std::array<Index, 3> Grid3::ijk(Index linear) const {
  return {linear % nx, (linear / nx) % ny, linear / (nx * ny)};
}

std::array<double, 3> Grid3::center(Index linear) const {
  const auto [i, j, k] = ijk(linear);
  return {(static_cast<double>(i) + 0.5) * hx, (static_cast<double>(j) + 0.5) * hy,
          (static_cast<double>(k) + 0.5) * hz};
}

namespace {

void check_field(const Field& f, const Grid3& grid, const char* name) {
  require(f.values.size() == 1 || f.values.size() == grid.size(),
          std::string(name) + ": expected a constant or one value per voxel");
  require(f.values.allFinite() && (f.values.array() > 0.0).all(),
          std::string(name) + ": must be positive everywhere");
}

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

Index clamp_cell(double coord, double pitch, Index n) {
  const auto c = static_cast<Index>(std::floor(coord / pitch));
  return std::clamp<Index>(c, 0, n - 1);
}

}  // namespace

void OpticalCoefficients::validate(const Grid3& grid) const {
  check_field(mu_a_ex, grid, "mu_a_ex");
  check_field(mu_a_em, grid, "mu_a_em");
  check_field(kappa_ex, grid, "kappa_ex");
  check_field(kappa_em, grid, "kappa_em");
  require(eta > 0 && std::isfinite(eta), "eta must be positive");
  require(robin_ex > 0 && robin_em > 0 && std::isfinite(robin_ex) && std::isfinite(robin_em),
          "robin coefficients must be positive");
}

void SourceDetectorLayout::validate(const Grid3& grid) const {
  require(!sources.empty(), "layout: no sources");
  require(!detectors.empty(), "layout: no detectors");
  const double tol = 1e-9 * std::max({grid.extent_x(), grid.extent_y(), grid.extent_z()});
  auto on_face = [&](const Point3& p, double z) {
    return p[0] >= -tol && p[0] <= grid.extent_x() + tol && p[1] >= -tol &&
           p[1] <= grid.extent_y() + tol && std::abs(p[2] - z) <= tol;
  };
  for (const auto& s : sources)
    require(on_face(s, 0.0), "layout: source position is not on the bottom face");
  for (const auto& d : detectors)
    require(on_face(d, grid.extent_z()), "layout: detector position is not on the top face");
}

SourceDetectorLayout regular_layout(const Grid3& grid, int ns_x, int ns_y, int nd_x,
                                    int nd_y) {
  require(ns_x >= 1 && ns_y >= 1 && nd_x >= 1 && nd_y >= 1, "layout: counts must be >= 1");
  SourceDetectorLayout layout;
  auto fill = [&](std::vector<Point3>& out, int cx, int cy, double z) {
    for (int j = 0; j < cy; ++j)
      for (int i = 0; i < cx; ++i)
        out.push_back({(i + 0.5) * grid.extent_x() / cx, (j + 0.5) * grid.extent_y() / cy, z});
  };
  fill(layout.sources, ns_x, ns_y, 0.0);
  fill(layout.detectors, nd_x, nd_y, grid.extent_z());
  return layout;
}

Eigen::SparseMatrix<double> assemble_diffusion_matrix(const Grid3& grid, const Field& kappa,
                                                      const Field& mu_a, double robin) {
  grid.validate();
  check_field(kappa, grid, "kappa");
  check_field(mu_a, grid, "mu_a");
  require(robin > 0, "robin coefficient must be positive");

  const Index n = grid.size();
  const double vol = grid.voxel_volume();
  const std::array<double, 3> h{grid.hx, grid.hy, grid.hz};
  const std::array<double, 3> area{grid.hy * grid.hz, grid.hx * grid.hz, grid.hx * grid.hy};
  const std::array<Index, 3> dims{grid.nx, grid.ny, grid.nz};

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(7 * n));
  for (Index p = 0; p < n; ++p) {
    const auto cell = grid.ijk(p);
    double diag = mu_a(p) * vol;
    for (int axis = 0; axis < 3; ++axis) {
      for (int dir : {-1, 1}) {
        auto nb = cell;
        nb[axis] += dir;
        if (nb[axis] < 0 || nb[axis] >= dims[axis]) {
          // Ghost node eliminated through phi + robin * d_nu phi = 0 at the face.
          diag += area[axis] * 2.0 * kappa(p) / (2.0 * robin + h[axis]);
          continue;
        }
        const Index q = grid.index(nb[0], nb[1], nb[2]);
        const double c = area[axis] * harmonic(kappa(p), kappa(q)) / h[axis];
        diag += c;
        trip.emplace_back(p, q, -c);
      }
    }
    trip.emplace_back(p, p, diag);
  }
  Eigen::SparseMatrix<double> k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

Index nearest_bottom_node(const Grid3& grid, const Point3& p) {
  return grid.index(clamp_cell(p[0], grid.hx, grid.nx), clamp_cell(p[1], grid.hy, grid.ny), 0);
}

Index nearest_top_node(const Grid3& grid, const Point3& p) {
  return grid.index(clamp_cell(p[0], grid.hx, grid.nx), clamp_cell(p[1], grid.hy, grid.ny),
                    grid.nz - 1);
}

namespace {

// Columns are the responses to unit point loads at the given nodes.
Matrix point_responses(const Eigen::SparseMatrix<double>& k, const std::vector<Index>& nodes,
                       const char* what) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(k);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError(std::string("factorization of the ") + what + " system failed");
  Matrix rhs = Matrix::Zero(k.rows(), static_cast<Index>(nodes.size()));
  for (std::size_t c = 0; c < nodes.size(); ++c) rhs(nodes[c], static_cast<Index>(c)) = 1.0;
  Matrix sol = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !sol.allFinite())
    throw NumericalError(std::string("solve of the ") + what + " system failed");
  return sol;
}

}  // namespace

DenseMatrixOperator assemble_fmt_operator(const Grid3& grid, const OpticalCoefficients& coeff,
                                          const SourceDetectorLayout& layout) {
  grid.validate();
  coeff.validate(grid);
  layout.validate(grid);

  std::vector<Index> src_nodes, det_nodes;
  for (const auto& s : layout.sources) src_nodes.push_back(nearest_bottom_node(grid, s));
  for (const auto& d : layout.detectors) det_nodes.push_back(nearest_top_node(grid, d));

  const Matrix phi_ex = point_responses(
      assemble_diffusion_matrix(grid, coeff.kappa_ex, coeff.mu_a_ex, coeff.robin_ex), src_nodes,
      "excitation");
  // Reciprocity: the emission Green's function seen by detector d is the
  // response of the (symmetric) emission system to a load at d.
  const Matrix g_em = point_responses(
      assemble_diffusion_matrix(grid, coeff.kappa_em, coeff.mu_a_em, coeff.robin_em), det_nodes,
      "emission");

  const Index ns = phi_ex.cols(), nd = g_em.cols(), n = grid.size();
  const double scale = coeff.eta * grid.voxel_volume();
  DenseMatrixOperator::Storage a(ns * nd, n);
  for (Index s = 0; s < ns; ++s)
    for (Index d = 0; d < nd; ++d)
      a.row(s * nd + d) = scale * phi_ex.col(s).cwiseProduct(g_em.col(d)).transpose();
  return DenseMatrixOperator(std::move(a));
}

namespace {

void validate_ellipsoid(const Grid3& grid, const Ellipsoid& e) {
  const std::array<double, 3> ext{grid.extent_x(), grid.extent_y(), grid.extent_z()};
  require(e.amplitude > 0 && std::isfinite(e.amplitude), "phantom: amplitude must be positive");
  for (int a = 0; a < 3; ++a) {
    require(e.semi_axes[a] > 0, "phantom: semi-axes must be positive");
    require(e.center[a] - e.semi_axes[a] >= 0.0 && e.center[a] + e.semi_axes[a] <= ext[a],
            "phantom: ellipsoid extends outside the slab");
  }
}

}  // namespace

std::vector<Ellipsoid> random_inclusions(const Grid3& grid, int count, double min_amplitude,
                                         double max_amplitude, std::uint64_t seed) {
  grid.validate();
  require(count >= 1 && count <= 3, "phantom: between 1 and 3 inclusions");
  require(min_amplitude > 0 && max_amplitude >= min_amplitude, "phantom: bad amplitude range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::array<double, 3> ext{grid.extent_x(), grid.extent_y(), grid.extent_z()};
  const std::array<double, 3> h{grid.hx, grid.hy, grid.hz};

  std::vector<Ellipsoid> out;
  for (int c = 0; c < count; ++c) {
    Ellipsoid e;
    for (int a = 0; a < 3; ++a) {
      // At least 1.5 pitches so the nearest voxel centre is always enclosed.
      const double lo = 1.5 * h[a];
      const double hi = std::max(lo, std::min(ext[a] / 5.0, 0.5 * ext[a] - 0.5 * h[a]));
      e.semi_axes[a] = std::min(lo + (hi - lo) * unit(rng), 0.5 * ext[a]);
      e.center[a] = e.semi_axes[a] + (ext[a] - 2.0 * e.semi_axes[a]) * unit(rng);
    }
    e.amplitude = min_amplitude + (max_amplitude - min_amplitude) * unit(rng);
    out.push_back(e);
  }
  return out;
}

Vector generate_phantom(const Grid3& grid, const PhantomSpec& spec, std::uint64_t seed) {
  grid.validate();
  const std::vector<Ellipsoid> incl =
      spec.inclusions.empty()
          ? random_inclusions(grid, spec.random_count, spec.min_amplitude, spec.max_amplitude,
                              seed)
          : spec.inclusions;
  require(!incl.empty() && incl.size() <= 3, "phantom: between 1 and 3 inclusions");
  for (const auto& e : incl) validate_ellipsoid(grid, e);

  Vector x = Vector::Zero(grid.size());
  for (Index j = 0; j < grid.size(); ++j) {
    const auto r = grid.center(j);
    for (const auto& e : incl) {
      double q = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double t = (r[a] - e.center[a]) / e.semi_axes[a];
        q += t * t;
      }
      if (q <= 1.0) x(j) += e.amplitude;
    }
  }
  return x;
}

NoisyData add_noise(const Vector& b_clean, double sigma, std::uint64_t seed) {
  require(sigma >= 0 && std::isfinite(sigma), "noise level must be >= 0");
  NoisyData out{b_clean, Vector::Zero(b_clean.size())};
  if (sigma == 0.0) return out;
  const double bnorm = b_clean.norm();
  require(bnorm > 0, "noise level is undefined for a zero measurement vector");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(b_clean.size());
  for (Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
  const double enorm = e.norm();
  if (enorm == 0.0) throw NumericalError("degenerate noise draw");
  out.eta = e * (sigma * bnorm / enorm);
  out.b = b_clean + out.eta;
  return out;
}

}  // namespace wbipm
