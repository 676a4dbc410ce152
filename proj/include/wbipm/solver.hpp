#pragma once

#include "wbipm/common.hpp"
#include "wbipm/gk.hpp"
#include "wbipm/operator.hpp"
#include "wbipm/reg.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wbipm {

// Normalized prior direction with its image under A.
struct WarmBasis {
  Vector x_hat;   // unit vector
  double gamma = 0.0;  // ||A x_hat||
  Vector y;       // A x_hat / gamma

  // Normalizes x_nn and computes gamma and y. Throws when x_nn = 0 or when
  // A x_hat vanishes (warm basis in the kernel of A).
  static WarmBasis from_vector(const LinearOperator& a, const Vector& x_nn);
};

// Orthogonal split x* = z* + c* x_hat.
struct Decomposition {
  double c_star = 0.0;
  Vector z_star;

  static Decomposition of(const Vector& x_star, const Vector& x_hat);
};

DeflatedSystem deflate(const LinearOperator& a, const Vector& b, const WarmBasis& wb);

// Which iterate drives the preconditioner L_{k+1} after step k.
enum class PrecondSource {
  Identity,    // L_k = I throughout
  Complement,  // L(z^(k))
  Full,        // L(x^(k)) = L(c x_hat + z)
};

struct SolveConfig {
  MmConfig mm;
  PrecondSource precond = PrecondSource::Complement;
  // Iterations whose iterate x is kept in SolveResult::snapshots.
  std::vector<int> snapshot_iterations{20, 50, 120};
  bool keep_state = false;

  void validate() const { mm.validate(); }
};

struct IterationRecord {
  int k = 0;
  double lambda = 0.0;
  double alpha = 0.0;
  double omega = 1.0;
  double c = 0.0;
  double projected_residual = 0.0;  // ||G_k d_k - beta e1||
  double residual = 0.0;            // ||A x - b||
  double relative_error = -1.0;     // ||x - x*|| / ||x*||; -1 without ground truth
  bool lambda_fallback = false;
  double wall_time = 0.0;  // seconds since solve start; not reproducible
};

enum class Method { Wbipm, Fhybr, Warmstart };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class StopReason { MaxIterations, Stagnation, Breakdown, ExplainedByWarmBasis };
std::string to_string(StopReason r);

struct SolveResult {
  Method method = Method::Wbipm;
  Vector x;
  double c = 0.0;
  Vector z;
  std::vector<IterationRecord> history;
  StopReason stop = StopReason::MaxIterations;
  std::map<int, Vector> snapshots;
  std::optional<AfgkState> state;
};

// Warm-basis alternating solver: AFGK growth of Z_k, projected solve for z,
// closed-form update of c after every step.
SolveResult wbipm_solve(const LinearOperator& a, const Vector& b, const WarmBasis& wb,
                        const SolveConfig& cfg,
                        const std::optional<Vector>& ground_truth = std::nullopt);

// Flexible hybrid baseline without warm basis. `initial_iterate`, when given,
// sets L_1 = L(initial_iterate) instead of I.
SolveResult fhybr_solve(const LinearOperator& a, const Vector& b, const SolveConfig& cfg,
                        const std::optional<Vector>& ground_truth = std::nullopt,
                        const std::optional<Vector>& initial_iterate = std::nullopt);

// fHybr started from the prior as the first MM iterate.
SolveResult warmstart_solve(const LinearOperator& a, const Vector& b, const Vector& x_nn,
                            const SolveConfig& cfg,
                            const std::optional<Vector>& ground_truth = std::nullopt);

}  // namespace wbipm
