#include "wbipm/warmbasis.hpp"

#include "wbipm/matrix_market.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace wbipm {

WarmBasisSpec WarmBasisSpec::parse(const std::string& text) {
  WarmBasisSpec spec;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "exact") {
    spec.mode = Mode::Exact;
    spec.theta_deg = 0.0;
  } else if (head == "random") {
    spec.mode = Mode::Random;
  } else if (head == "angle") {
    spec.mode = Mode::Angle;
    std::size_t used = 0;
    try {
      spec.theta_deg = std::stod(tail, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used > 0 && used == tail.size(), "warm basis: bad angle in '" + text + "'");
  } else if (head == "file") {
    spec.mode = Mode::File;
    require(!tail.empty(), "warm basis: missing path in '" + text + "'");
    spec.path = tail;
  } else {
    throw ValidationError("warm basis: unknown spec '" + text +
                          "' (expected exact, random, angle:<deg> or file:<path>)");
  }
  if (spec.mode == Mode::Angle)
    require(spec.theta_deg >= 0.0 && spec.theta_deg <= 90.0,
            "warm basis: angle must lie in [0, 90] degrees");
  return spec;
}

std::string WarmBasisSpec::to_string() const {
  std::ostringstream os;
  switch (mode) {
    case Mode::Exact: os << "exact"; break;
    case Mode::Random: os << "random"; break;
    case Mode::Angle: os << "angle:" << theta_deg; break;
    case Mode::File: os << "file:" << path.string(); break;
  }
  return os.str();
}

Vector random_unit_vector(Index n, std::uint64_t seed) {
  require(n >= 1, "random_unit_vector: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(n);
  do {
    for (Index i = 0; i < n; ++i) w(i) = normal(rng);
  } while (w.norm() == 0.0);
  return w / w.norm();
}

Vector synthetic_warm_basis(const Vector& x_star, double theta_deg, std::uint64_t seed) {
  const double xn = x_star.norm();
  require(xn > 0, "synthetic warm basis: x* must be nonzero");
  require(theta_deg >= 0.0 && theta_deg <= 90.0, "synthetic warm basis: angle must lie in [0, 90]");
  const Vector u = x_star / xn;
  if (theta_deg == 0.0) return u;
  require(x_star.size() >= 2, "synthetic warm basis: no orthogonal direction when N = 1");

  Vector w = random_unit_vector(x_star.size(), seed);
  for (int pass = 0; pass < 2; ++pass) w -= u * u.dot(w);
  double wn = w.norm();
  for (std::uint64_t retry = 1; wn < 1e-8; ++retry) {
    w = random_unit_vector(x_star.size(), seed + retry);
    for (int pass = 0; pass < 2; ++pass) w -= u * u.dot(w);
    wn = w.norm();
  }
  w /= wn;
  const double th = theta_deg * std::numbers::pi / 180.0;
  Vector out = std::cos(th) * u + std::sin(th) * w;
  return out / out.norm();
}

Vector load_warm_basis(const std::filesystem::path& path, Index expected_length) {
  Vector v;
  try {
    v = mm::read_vector(path);
  } catch (const ValidationError& e) {
    throw WarmBasisError(WarmBasisErrorCode::ParseFailure, e.what());
  }
  if (expected_length > 0 && v.size() != expected_length)
    throw WarmBasisError(WarmBasisErrorCode::LengthMismatch,
                         "warm basis '" + path.string() + "' has length " +
                             std::to_string(v.size()) + ", expected " +
                             std::to_string(expected_length));
  const double n = v.norm();
  if (!(n > 0))
    throw WarmBasisError(WarmBasisErrorCode::ZeroVector,
                         "warm basis '" + path.string() + "' is the zero vector");
  return v / n;
}

void save_warm_basis(const std::filesystem::path& path, const Vector& v) {
  mm::write_vector(path, v, "warm basis vector");
}

Vector make_warm_basis(const WarmBasisSpec& spec, const Vector& x_star) {
  switch (spec.mode) {
    case WarmBasisSpec::Mode::Exact: return synthetic_warm_basis(x_star, 0.0, spec.seed);
    case WarmBasisSpec::Mode::Angle:
      return synthetic_warm_basis(x_star, spec.theta_deg, spec.seed);
    case WarmBasisSpec::Mode::Random: return random_unit_vector(x_star.size(), spec.seed);
    case WarmBasisSpec::Mode::File: return load_warm_basis(spec.path, x_star.size());
  }
  throw ValidationError("warm basis: unhandled mode");
}

}  // namespace wbipm
