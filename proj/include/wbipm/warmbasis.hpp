#pragma once

#include "wbipm/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace wbipm {

// Errors of load_warm_basis, one code per failure class.
enum class WarmBasisErrorCode { ParseFailure, LengthMismatch, ZeroVector };

class WarmBasisError : public ValidationError {
 public:
  WarmBasisError(WarmBasisErrorCode code, const std::string& what)
      : ValidationError(what), code_(code) {}
  WarmBasisErrorCode code() const { return code_; }

 private:
  WarmBasisErrorCode code_;
};

struct WarmBasisSpec {
  enum class Mode { Exact, Angle, File, Random };
  Mode mode = Mode::Angle;
  double theta_deg = 20.0;
  std::filesystem::path path;
  std::uint64_t seed = 0;

  // "exact", "random", "angle:<deg>" or "file:<path>".
  static WarmBasisSpec parse(const std::string& text);
  std::string to_string() const;
};

// cos(theta) x*/||x*|| + sin(theta) w with w a seeded random unit vector
// orthogonal to x*.
Vector synthetic_warm_basis(const Vector& x_star, double theta_deg, std::uint64_t seed);

// Seeded random unit vector.
Vector random_unit_vector(Index n, std::uint64_t seed);

// Reads a Matrix Market array vector and normalizes it to unit length.
// expected_length <= 0 skips the length check.
Vector load_warm_basis(const std::filesystem::path& path, Index expected_length = -1);

void save_warm_basis(const std::filesystem::path& path, const Vector& v);

// Resolves a spec into a unit vector; x_star is needed for Exact/Angle.
Vector make_warm_basis(const WarmBasisSpec& spec, const Vector& x_star);

}  // namespace wbipm
