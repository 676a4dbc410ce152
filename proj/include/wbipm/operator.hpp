#pragma once

#include "wbipm/common.hpp"

#include <Eigen/Sparse>

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace wbipm {

// Forward map A: R^N -> R^M. Implementations must be immutable after
// construction so a single instance can be shared between solver threads.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual Vector apply(const Vector& x) const = 0;
  virtual Vector apply_adjoint(const Vector& u) const = 0;
  virtual double frobenius_norm() const = 0;
};

class DenseMatrixOperator final : public LinearOperator {
 public:
  using Storage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  DenseMatrixOperator() = default;
  explicit DenseMatrixOperator(Storage coefficients);
  explicit DenseMatrixOperator(const Matrix& coefficients)
      : DenseMatrixOperator(Storage(coefficients)) {}

  Index rows() const override { return a_.rows(); }
  Index cols() const override { return a_.cols(); }
  Vector apply(const Vector& x) const override;
  Vector apply_adjoint(const Vector& u) const override;
  double frobenius_norm() const override { return frobenius_; }

  const Storage& coefficients() const { return a_; }
  Matrix dense() const { return Matrix(a_); }

 private:
  Storage a_;
  double frobenius_ = 0.0;
};

// Voxel grid of the slab. Linear index is x-fastest, then y, then z.
struct Grid3 {
  Index nx = 0, ny = 0, nz = 0;
  double hx = 1.0, hy = 1.0, hz = 1.0;  // mm

  void validate() const;
  Index size() const { return nx * ny * nz; }
  double extent_x() const { return static_cast<double>(nx) * hx; }
  double extent_y() const { return static_cast<double>(ny) * hy; }
  double extent_z() const { return static_cast<double>(nz) * hz; }
  double voxel_volume() const { return hx * hy * hz; }
  Index index(Index i, Index j, Index k) const { return i + nx * (j + ny * k); }
  std::array<Index, 3> ijk(Index linear) const;
  std::array<double, 3> center(Index linear) const;
};

// A coefficient that is either constant (size 1) or given per voxel (size N).
struct Field {
  Vector values = Vector::Constant(1, 1.0);

  Field() = default;
  Field(double constant) : values(Vector::Constant(1, constant)) {}  // NOLINT
  explicit Field(Vector per_voxel) : values(std::move(per_voxel)) {}

  double operator()(Index j) const { return values.size() == 1 ? values(0) : values(j); }
  bool is_constant() const { return values.size() == 1; }
};

struct OpticalCoefficients {
  Field mu_a_ex = 0.01;   // 1/mm
  Field mu_a_em = 0.01;   // 1/mm
  Field kappa_ex = 0.33;  // mm
  Field kappa_em = 0.33;  // mm
  double eta = 1.0;
  // Robin length 2*Gamma(rho)*kappa (mm), one scalar per wavelength.
  double robin_ex = 1.65;
  double robin_em = 1.65;

  void validate(const Grid3& grid) const;
};

using Point3 = std::array<double, 3>;

// Sources sit on the bottom face (z = 0), detectors on the top face (z = Lz).
struct SourceDetectorLayout {
  std::vector<Point3> sources;
  std::vector<Point3> detectors;

  void validate(const Grid3& grid) const;
  Index measurement_count() const {
    return static_cast<Index>(sources.size() * detectors.size());
  }
};

// Evenly spaced ns_x x ns_y sources and nd_x x nd_y detectors, each placed at
// the centres of a uniform subdivision of the face.
SourceDetectorLayout regular_layout(const Grid3& grid, int ns_x, int ns_y, int nd_x,
                                    int nd_y);

// Integrated (volume-weighted) 7-point discretization of -div(kappa grad) + mu_a
// with Robin faces on the whole boundary. Symmetric positive definite when
// mu_a > 0.
Eigen::SparseMatrix<double> assemble_diffusion_matrix(const Grid3& grid, const Field& kappa,
                                                      const Field& mu_a, double robin);

Index nearest_bottom_node(const Grid3& grid, const Point3& p);
Index nearest_top_node(const Grid3& grid, const Point3& p);

// Sensitivity matrix of the coupled excitation/emission model. Rows are
// (source, detector) pairs in source-major order, columns are voxels.
DenseMatrixOperator assemble_fmt_operator(const Grid3& grid, const OpticalCoefficients& coeff,
                                          const SourceDetectorLayout& layout);

struct Ellipsoid {
  Point3 center{};      // mm
  Point3 semi_axes{};   // mm
  double amplitude = 1.0;
};

struct PhantomSpec {
  // Explicit inclusions; when empty, `random_count` ellipsoids are drawn from the seed.
  std::vector<Ellipsoid> inclusions;
  int random_count = 0;
  double min_amplitude = 0.5;
  double max_amplitude = 1.0;
};

std::vector<Ellipsoid> random_inclusions(const Grid3& grid, int count, double min_amplitude,
                                         double max_amplitude, std::uint64_t seed);

Vector generate_phantom(const Grid3& grid, const PhantomSpec& spec, std::uint64_t seed);

struct NoisyData {
  Vector b;
  Vector eta;
};

// eta is i.i.d. normal rescaled so that ||eta|| = sigma * ||b_clean|| exactly.
NoisyData add_noise(const Vector& b_clean, double sigma, std::uint64_t seed);

}  // namespace wbipm
