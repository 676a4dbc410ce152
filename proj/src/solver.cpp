#include "wbipm/solver.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace wbipm {

WarmBasis WarmBasis::from_vector(const LinearOperator& a, const Vector& x_nn) {
  require(x_nn.size() == a.cols(), "warm basis length does not match the operator");
  const double n = x_nn.norm();
  require(n > 0 && std::isfinite(n), "warm basis must be a nonzero finite vector");
  WarmBasis wb;
  wb.x_hat = x_nn / n;
  const Vector ax = a.apply(wb.x_hat);
  wb.gamma = ax.norm();
  if (!(wb.gamma > 1e-14 * a.frobenius_norm()))
    throw ValidationError("warm basis in kernel of A");
  wb.y = ax / wb.gamma;
  return wb;
}

Decomposition Decomposition::of(const Vector& x_star, const Vector& x_hat) {
  require(x_star.size() == x_hat.size(), "decomposition: length mismatch");
  Decomposition d;
  d.c_star = x_star.dot(x_hat);
  d.z_star = x_star - d.c_star * x_hat;
  return d;
}

DeflatedSystem deflate(const LinearOperator& a, const Vector& b, const WarmBasis& wb) {
  return DeflatedSystem::with_warm_basis(a, b, wb.x_hat, wb.y, wb.gamma);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Wbipm: return "wbipm";
    case Method::Fhybr: return "fhybr";
    case Method::Warmstart: return "warmstart";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "wbipm") return Method::Wbipm;
  if (s == "fhybr") return Method::Fhybr;
  if (s == "warmstart") return Method::Warmstart;
  throw ValidationError("unknown method '" + s + "' (expected wbipm, fhybr or warmstart)");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::Stagnation: return "stagnation";
    case StopReason::Breakdown: return "breakdown";
    case StopReason::ExplainedByWarmBasis: return "explained_by_warm_basis";
  }
  return "?";
}

namespace {

using Clock = std::chrono::steady_clock;

struct Runner {
  const LinearOperator& a;
  const DeflatedSystem& ds;
  const SolveConfig& cfg;
  const std::optional<Vector>& truth;
  Clock::time_point start = Clock::now();
  double truth_norm = 0.0;

  double elapsed() const {
    return std::chrono::duration<double>(Clock::now() - start).count();
  }

  double relative_error(const Vector& x) const {
    if (!truth) return -1.0;
    return truth_norm > 0 ? (x - *truth).norm() / truth_norm : (x - *truth).norm();
  }

  double choose_alpha(double r, double rho, Index k, double omega) const {
    if (cfg.mm.alpha.rule == ParamRule::Fixed) return cfg.mm.alpha.value;
    return wgcv_select_alpha(ds.gamma(), r, rho, k + 2, omega, cfg.mm.alpha.value).value;
  }

  SolveResult run(Method method, std::optional<Vector> l_inv_first) {
    SolveResult res;
    res.method = method;
    const Index n = a.cols();
    res.z = Vector::Zero(n);
    res.x = Vector::Zero(n);
    if (truth) {
      require(truth->size() == n, "ground truth length does not match the operator");
      truth_norm = truth->norm();
    }

    AfgkState state;
    try {
      state = afgk_init(ds);
    } catch (const ExplainedByWarmBasis&) {
      // b~ = 0: only the scalar problem remains.
      IterationRecord rec;
      rec.k = 0;
      if (ds.deflated()) {
        rec.alpha = choose_alpha(ds.y_dot_b(), 0.0, 0, 1.0);
        res.c = solve_c(ds.gamma(), 0.0, ds.y_dot_b(), rec.alpha);
        res.x = res.c * ds.x_hat();
      }
      rec.c = res.c;
      rec.residual = (a.apply(res.x) - ds.b()).norm();
      rec.relative_error = relative_error(res.x);
      rec.wall_time = elapsed();
      res.history.push_back(rec);
      res.stop = StopReason::ExplainedByWarmBasis;
      return res;
    }

    Vector l_inv = l_inv_first ? std::move(*l_inv_first) : Vector();
    std::vector<double> weights;
    res.stop = StopReason::MaxIterations;
    for (int k = 1; k <= cfg.mm.max_outer; ++k) {
      const Index before = state.k;
      const StepStatus status = afgk_step(state, ds, l_inv);
      if (state.k == before) {
        res.stop = StopReason::Breakdown;
        break;
      }

      IterationRecord rec;
      rec.k = k;
      if (cfg.mm.omega > 0) {
        rec.omega = cfg.mm.omega;
      } else {
        weights.push_back(wgcv_optimal_weight(state.g, state.qr.r, state.beta));
        rec.omega = std::accumulate(weights.begin(), weights.end(), 0.0) /
                    static_cast<double>(weights.size());
      }
      if (cfg.mm.lambda.rule == ParamRule::Fixed) {
        rec.lambda = cfg.mm.lambda.value;
      } else {
        const WgcvResult sel =
            wgcv_select(state.g, state.qr.r, state.beta, rec.omega, cfg.mm.lambda.value);
        rec.lambda = sel.value;
        rec.lambda_fallback = sel.fallback;
      }

      const ProjectedSolution proj = solve_projected(state, rec.lambda);
      res.z = state.z * proj.d;
      rec.projected_residual = proj.residual;
      if (ds.deflated()) {
        const double s = state.y_a_z.dot(proj.d);
        rec.alpha = choose_alpha(ds.y_dot_b() - s, proj.residual, state.k, rec.omega);
        res.c = solve_c(ds.gamma(), s, ds.y_dot_b(), rec.alpha);
        res.x = res.c * ds.x_hat() + res.z;
      } else {
        res.x = res.z;
      }
      rec.c = res.c;
      rec.residual = (a.apply(res.x) - ds.b()).norm();
      rec.relative_error = relative_error(res.x);
      rec.wall_time = elapsed();
      res.history.push_back(rec);
      for (int snap : cfg.snapshot_iterations)
        if (snap == k) res.snapshots[k] = res.x;

      if (status == StepStatus::Breakdown) {
        res.stop = StopReason::Breakdown;
        break;
      }
      const auto w = static_cast<std::size_t>(cfg.mm.stagnation_window);
      if (res.history.size() > w) {
        const double old = res.history[res.history.size() - 1 - w].residual;
        if (old > 0 && std::abs(old - rec.residual) <= cfg.mm.stagnation_tol * old) {
          res.stop = StopReason::Stagnation;
          break;
        }
      }

      switch (cfg.precond) {
        case PrecondSource::Identity: l_inv.resize(0); break;
        case PrecondSource::Complement:
          l_inv = build_preconditioner(res.z, cfg.mm.epsilon).inverse();
          break;
        case PrecondSource::Full:
          l_inv = build_preconditioner(res.x, cfg.mm.epsilon).inverse();
          break;
      }
    }
    if (cfg.keep_state) res.state = std::move(state);
    return res;
  }
};

}  // namespace

SolveResult wbipm_solve(const LinearOperator& a, const Vector& b, const WarmBasis& wb,
                        const SolveConfig& cfg, const std::optional<Vector>& ground_truth) {
  cfg.validate();
  const DeflatedSystem ds = deflate(a, b, wb);
  Runner runner{a, ds, cfg, ground_truth};
  return runner.run(Method::Wbipm, std::nullopt);
}

SolveResult fhybr_solve(const LinearOperator& a, const Vector& b, const SolveConfig& cfg,
                        const std::optional<Vector>& ground_truth,
                        const std::optional<Vector>& initial_iterate) {
  cfg.validate();
  const DeflatedSystem ds = DeflatedSystem::identity(a, b);
  std::optional<Vector> l_inv;
  if (initial_iterate) {
    require(initial_iterate->size() == a.cols(),
            "initial iterate length does not match the operator");
    l_inv = build_preconditioner(*initial_iterate, cfg.mm.epsilon).inverse();
  }
  Runner runner{a, ds, cfg, ground_truth};
  return runner.run(Method::Fhybr, std::move(l_inv));
}

SolveResult warmstart_solve(const LinearOperator& a, const Vector& b, const Vector& x_nn,
                            const SolveConfig& cfg, const std::optional<Vector>& ground_truth) {
  require(x_nn.size() == a.cols(), "warm-start prior length does not match the operator");
  SolveResult res = fhybr_solve(a, b, cfg, ground_truth, x_nn);
  res.method = Method::Warmstart;
  return res;
}

}  // namespace wbipm
