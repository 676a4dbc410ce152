#pragma once

#include "wbipm/common.hpp"
#include "wbipm/operator.hpp"

#include <fstream>
#include <iterator>
#include <random>

#include <unistd.h>

namespace testutil {

using wbipm::Matrix;
using wbipm::Vector;

inline Matrix random_matrix(wbipm::Index m, wbipm::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix a(m, n);
  for (wbipm::Index j = 0; j < n; ++j)
    for (wbipm::Index i = 0; i < m; ++i) a(i, j) = nd(rng);
  return a;
}

inline Vector random_vector(wbipm::Index n, std::uint64_t seed) {
  return random_matrix(n, 1, seed).col(0);
}

inline Vector random_positive(wbipm::Index n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(lo, hi);
  Vector v(n);
  for (wbipm::Index i = 0; i < n; ++i) v(i) = ud(rng);
  return v;
}

// Sparse nonnegative vector with `nnz` entries in [0.5, 1.5].
inline Vector sparse_truth(wbipm::Index n, int nnz, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<wbipm::Index> pick(0, n - 1);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  Vector x = Vector::Zero(n);
  for (int i = 0; i < nnz; ++i) x(pick(rng)) = amp(rng);
  return x;
}

// Largest principal-angle sine between the column spaces of a and b.
inline double subspace_distance(const Matrix& a, const Matrix& b) {
  const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() *
                    Matrix::Identity(a.rows(), a.cols());
  const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() *
                    Matrix::Identity(b.rows(), b.cols());
  const Matrix resid = qb - qa * (qa.transpose() * qb);
  return Eigen::JacobiSVD<Matrix>(resid).singularValues()(0);
}

}  // namespace testutil

#include <filesystem>
#include <string>

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("wbipm_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
