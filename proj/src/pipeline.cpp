#include "wbipm/pipeline.hpp"

#include "wbipm/matrix_market.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

namespace wbipm {

namespace {

// Shortest "%.Ng" rendering that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int to_int(long v, const std::string& key) {
  require(v >= 0 && v <= 1'000'000, "config: '" + key + "' out of range");
  return static_cast<int>(v);
}

ParamPolicy policy_from(const Config& c, const std::string& rule_key, const std::string& value_key,
                        const ParamPolicy& fallback) {
  ParamPolicy p = fallback;
  const std::string rule = c.get_string(rule_key, p.rule == ParamRule::Fixed ? "fixed" : "wgcv");
  if (rule == "fixed")
    p.rule = ParamRule::Fixed;
  else if (rule == "wgcv")
    p.rule = ParamRule::Wgcv;
  else
    throw ValidationError("config: '" + rule_key + "' must be fixed or wgcv");
  p.value = c.get_double(value_key, p.value);
  return p;
}

std::string precond_name(PrecondSource s) {
  switch (s) {
    case PrecondSource::Identity: return "identity";
    case PrecondSource::Complement: return "complement";
    case PrecondSource::Full: return "full";
  }
  return "?";
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Preconditioner final_preconditioner(const SolveResult& res, const SolveConfig& sc) {
  switch (sc.precond) {
    case PrecondSource::Identity: return Preconditioner::identity(res.x.size());
    case PrecondSource::Complement: return build_preconditioner(res.z, sc.mm.epsilon);
    case PrecondSource::Full: return build_preconditioner(res.x, sc.mm.epsilon);
  }
  return Preconditioner::identity(res.x.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// problem configuration

const std::set<std::string>& problem_keys() {
  static const std::set<std::string> keys{
      "grid.nx",          "grid.ny",           "grid.nz",          "grid.hx",
      "grid.hy",          "grid.hz",           "optics.mu_a_ex",   "optics.mu_a_em",
      "optics.kappa_ex",  "optics.kappa_em",   "optics.eta",       "optics.robin_ex",
      "optics.robin_em",  "layout.sources_x",  "layout.sources_y", "layout.detectors_x",
      "layout.detectors_y", "phantom.inclusions", "phantom.min_amplitude",
      "phantom.max_amplitude", "noise.sigma",  "seed",             "operator.format",
      "operator.normalize"};
  return keys;
}

const std::set<std::string>& solver_keys() {
  static const std::set<std::string> keys{
      "solver.epsilon",        "solver.lambda_rule",       "solver.lambda",
      "solver.alpha_rule",     "solver.alpha",             "solver.max_outer",
      "solver.stagnation_tol", "solver.stagnation_window", "solver.omega",
      "solver.precond",        "solver.snapshots"};
  return keys;
}

const std::set<std::string>& sweep_keys() {
  static const std::set<std::string> keys{"sweep.noise",  "sweep.angles",    "sweep.methods",
                                          "sweep.seeds",  "sweep.seed_base", "sweep.threads"};
  return keys;
}

ProblemConfig ProblemConfig::from_config(const Config& c) {
  ProblemConfig pc;
  pc.grid.nx = c.get_int("grid.nx", pc.grid.nx);
  pc.grid.ny = c.get_int("grid.ny", pc.grid.ny);
  pc.grid.nz = c.get_int("grid.nz", pc.grid.nz);
  pc.grid.hx = c.get_double("grid.hx", pc.grid.hx);
  pc.grid.hy = c.get_double("grid.hy", pc.grid.hy);
  pc.grid.hz = c.get_double("grid.hz", pc.grid.hz);
  pc.optics.mu_a_ex = c.get_double("optics.mu_a_ex", pc.optics.mu_a_ex(0));
  pc.optics.mu_a_em = c.get_double("optics.mu_a_em", pc.optics.mu_a_em(0));
  pc.optics.kappa_ex = c.get_double("optics.kappa_ex", pc.optics.kappa_ex(0));
  pc.optics.kappa_em = c.get_double("optics.kappa_em", pc.optics.kappa_em(0));
  pc.optics.eta = c.get_double("optics.eta", pc.optics.eta);
  pc.optics.robin_ex = c.get_double("optics.robin_ex", pc.optics.robin_ex);
  pc.optics.robin_em = c.get_double("optics.robin_em", pc.optics.robin_em);
  pc.sources_x = to_int(c.get_int("layout.sources_x", pc.sources_x), "layout.sources_x");
  pc.sources_y = to_int(c.get_int("layout.sources_y", pc.sources_y), "layout.sources_y");
  pc.detectors_x = to_int(c.get_int("layout.detectors_x", pc.detectors_x), "layout.detectors_x");
  pc.detectors_y = to_int(c.get_int("layout.detectors_y", pc.detectors_y), "layout.detectors_y");
  pc.inclusions = to_int(c.get_int("phantom.inclusions", pc.inclusions), "phantom.inclusions");
  pc.min_amplitude = c.get_double("phantom.min_amplitude", pc.min_amplitude);
  pc.max_amplitude = c.get_double("phantom.max_amplitude", pc.max_amplitude);
  pc.sigma = c.get_double("noise.sigma", pc.sigma);
  const long seed = c.get_int("seed", static_cast<long>(pc.seed));
  require(seed >= 0, "config: seed must be nonnegative");
  pc.seed = static_cast<std::uint64_t>(seed);
  pc.operator_format = c.get_string("operator.format", pc.operator_format);
  const std::string norm = c.get_string("operator.normalize", "true");
  require(norm == "true" || norm == "false", "config: operator.normalize must be true or false");
  pc.normalize_operator = norm == "true";

  pc.grid.validate();
  pc.optics.validate(pc.grid);
  require(pc.sources_x >= 1 && pc.sources_y >= 1 && pc.detectors_x >= 1 && pc.detectors_y >= 1,
          "config: source and detector counts must be >= 1");
  require(pc.inclusions <= 3, "config: phantom.inclusions must be 0 (random) or 1..3");
  require(pc.min_amplitude > 0 && pc.max_amplitude >= pc.min_amplitude,
          "config: phantom amplitudes must satisfy 0 < min <= max");
  require(pc.sigma >= 0 && std::isfinite(pc.sigma), "config: noise.sigma must be >= 0");
  require(pc.operator_format == "array" || pc.operator_format == "coordinate",
          "config: operator.format must be array or coordinate");
  return pc;
}

Config ProblemConfig::to_config() const {
  Config c;
  c.set("grid.nx", std::to_string(grid.nx));
  c.set("grid.ny", std::to_string(grid.ny));
  c.set("grid.nz", std::to_string(grid.nz));
  c.set("grid.hx", fmt(grid.hx));
  c.set("grid.hy", fmt(grid.hy));
  c.set("grid.hz", fmt(grid.hz));
  c.set("optics.mu_a_ex", fmt(optics.mu_a_ex(0)));
  c.set("optics.mu_a_em", fmt(optics.mu_a_em(0)));
  c.set("optics.kappa_ex", fmt(optics.kappa_ex(0)));
  c.set("optics.kappa_em", fmt(optics.kappa_em(0)));
  c.set("optics.eta", fmt(optics.eta));
  c.set("optics.robin_ex", fmt(optics.robin_ex));
  c.set("optics.robin_em", fmt(optics.robin_em));
  c.set("layout.sources_x", std::to_string(sources_x));
  c.set("layout.sources_y", std::to_string(sources_y));
  c.set("layout.detectors_x", std::to_string(detectors_x));
  c.set("layout.detectors_y", std::to_string(detectors_y));
  c.set("phantom.inclusions", std::to_string(inclusions));
  c.set("phantom.min_amplitude", fmt(min_amplitude));
  c.set("phantom.max_amplitude", fmt(max_amplitude));
  c.set("noise.sigma", fmt(sigma));
  c.set("seed", std::to_string(seed));
  c.set("operator.format", operator_format);
  c.set("operator.normalize", normalize_operator ? "true" : "false");
  return c;
}

SourceDetectorLayout ProblemConfig::layout() const {
  return regular_layout(grid, sources_x, sources_y, detectors_x, detectors_y);
}

SeedSet derive_seeds(std::uint64_t seed) {
  std::uint64_t state = seed;
  SeedSet s;
  s.phantom = splitmix64(state);
  s.noise = splitmix64(state);
  s.warm_basis = splitmix64(state);
  return s;
}

// ---------------------------------------------------------------------------
// problems and bundles

double spectral_norm(const DenseMatrixOperator& a) {
  const auto& c = a.coefficients();
  const bool wide = c.rows() <= c.cols();
  const Matrix gram = wide ? Matrix(c * c.transpose()) : Matrix(c.transpose() * c);
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

DenseMatrixOperator build_operator(const ProblemConfig& pc) {
  DenseMatrixOperator a = assemble_fmt_operator(pc.grid, pc.optics, pc.layout());
  if (!pc.normalize_operator) return a;
  const double s = spectral_norm(a);
  if (!(s > 0)) throw NumericalError("operator is identically zero");
  return DenseMatrixOperator(DenseMatrixOperator::Storage(a.coefficients() / s));
}

Problem build_problem(const ProblemConfig& pc, std::shared_ptr<const DenseMatrixOperator> op) {
  Problem p;
  p.config = pc;
  if (!op) op = std::make_shared<const DenseMatrixOperator>(build_operator(pc));
  require(op->cols() == pc.grid.size() && op->rows() == pc.layout().measurement_count(),
          "operator does not match the problem configuration");
  p.op = std::move(op);

  const SeedSet seeds = derive_seeds(pc.seed);
  PhantomSpec spec;
  spec.min_amplitude = pc.min_amplitude;
  spec.max_amplitude = pc.max_amplitude;
  if (pc.inclusions > 0) {
    spec.random_count = pc.inclusions;
  } else {
    std::uint64_t state = seeds.phantom;
    spec.random_count = 1 + static_cast<int>(splitmix64(state) % 3);
  }
  p.x_true = generate_phantom(pc.grid, spec, seeds.phantom);
  p.b_clean = p.op->apply(p.x_true);
  NoisyData nd = add_noise(p.b_clean, pc.sigma, seeds.noise);
  p.b = std::move(nd.b);
  p.eta = std::move(nd.eta);
  return p;
}

void write_bundle(const Problem& p, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create bundle directory '" + dir.string() + "'");
  const Matrix a = p.op->dense();
  if (p.config.operator_format == "coordinate")
    mm::write_coordinate(dir / "A.mtx", a, "forward operator");
  else
    mm::write_array(dir / "A.mtx", a, "forward operator");
  mm::write_vector(dir / "x_true.mtx", p.x_true, "ground-truth phantom");
  mm::write_vector(dir / "b_clean.mtx", p.b_clean, "noiseless measurements");
  mm::write_vector(dir / "b.mtx", p.b, "noisy measurements");
  mm::write_vector(dir / "eta.mtx", p.eta, "noise realization");

  std::ofstream cfg(dir / "problem.cfg");
  if (!cfg) throw ValidationError("cannot write '" + (dir / "problem.cfg").string() + "'");
  cfg << p.config.to_config().to_string();

  std::ofstream lay(dir / "layout.txt");
  lay << "# kind x_mm y_mm z_mm\n";
  const SourceDetectorLayout layout = p.config.layout();
  for (const auto& s : layout.sources)
    lay << "source " << fmt(s[0]) << ' ' << fmt(s[1]) << ' ' << fmt(s[2]) << '\n';
  for (const auto& d : layout.detectors)
    lay << "detector " << fmt(d[0]) << ' ' << fmt(d[1]) << ' ' << fmt(d[2]) << '\n';
}

Problem read_bundle(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), "bundle '" + dir.string() + "' is not a directory");
  for (const char* f : {"A.mtx", "x_true.mtx", "b_clean.mtx", "b.mtx", "eta.mtx", "problem.cfg"})
    require(std::filesystem::exists(dir / f),
            "bundle '" + dir.string() + "' is incomplete: missing " + f);
  const Config c = Config::from_file(dir / "problem.cfg");
  c.check_keys(problem_keys());
  Problem p;
  p.config = ProblemConfig::from_config(c);
  p.op = std::make_shared<const DenseMatrixOperator>(mm::read_matrix(dir / "A.mtx"));
  p.x_true = mm::read_vector(dir / "x_true.mtx");
  p.b_clean = mm::read_vector(dir / "b_clean.mtx");
  p.b = mm::read_vector(dir / "b.mtx");
  p.eta = mm::read_vector(dir / "eta.mtx");
  require(p.op->cols() == p.config.grid.size(), "bundle: operator columns do not match the grid");
  require(p.op->rows() == p.config.layout().measurement_count(),
          "bundle: operator rows do not match the layout");
  require(p.x_true.size() == p.op->cols(), "bundle: x_true length mismatch");
  require(p.b.size() == p.op->rows() && p.b_clean.size() == p.op->rows() &&
              p.eta.size() == p.op->rows(),
          "bundle: measurement length mismatch");
  return p;
}

std::string fingerprint(const Problem& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::int64_t dims[2] = {p.op ? p.op->rows() : 0, p.op ? p.op->cols() : 0};
  h = fnv1a(h, dims, sizeof(dims));
  h = fnv1a(h, p.x_true.data(), sizeof(double) * static_cast<std::size_t>(p.x_true.size()));
  h = fnv1a(h, p.b.data(), sizeof(double) * static_cast<std::size_t>(p.b.size()));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// solver configuration

SolveConfig solve_config_from(const Config& c) {
  SolveConfig sc;
  sc.mm.epsilon = c.get_double("solver.epsilon", sc.mm.epsilon);
  sc.mm.lambda = policy_from(c, "solver.lambda_rule", "solver.lambda", sc.mm.lambda);
  sc.mm.alpha = policy_from(c, "solver.alpha_rule", "solver.alpha", sc.mm.alpha);
  sc.mm.max_outer = to_int(c.get_int("solver.max_outer", sc.mm.max_outer), "solver.max_outer");
  sc.mm.stagnation_tol = c.get_double("solver.stagnation_tol", sc.mm.stagnation_tol);
  sc.mm.stagnation_window = to_int(c.get_int("solver.stagnation_window", sc.mm.stagnation_window),
                                   "solver.stagnation_window");
  sc.mm.omega = c.get_double("solver.omega", sc.mm.omega);
  const std::string pre = c.get_string("solver.precond", precond_name(sc.precond));
  if (pre == "identity")
    sc.precond = PrecondSource::Identity;
  else if (pre == "complement")
    sc.precond = PrecondSource::Complement;
  else if (pre == "full")
    sc.precond = PrecondSource::Full;
  else
    throw ValidationError("config: solver.precond must be identity, complement or full");
  if (c.has("solver.snapshots")) {
    sc.snapshot_iterations.clear();
    for (double v : c.get_doubles("solver.snapshots", {})) {
      require(v >= 1 && v == std::floor(v), "config: solver.snapshots must be positive integers");
      sc.snapshot_iterations.push_back(static_cast<int>(v));
    }
  }
  sc.validate();
  return sc;
}

Config to_config(const SolveConfig& sc) {
  Config c;
  c.set("solver.epsilon", fmt(sc.mm.epsilon));
  c.set("solver.lambda_rule", sc.mm.lambda.rule == ParamRule::Fixed ? "fixed" : "wgcv");
  c.set("solver.lambda", fmt(sc.mm.lambda.value));
  c.set("solver.alpha_rule", sc.mm.alpha.rule == ParamRule::Fixed ? "fixed" : "wgcv");
  c.set("solver.alpha", fmt(sc.mm.alpha.value));
  c.set("solver.max_outer", std::to_string(sc.mm.max_outer));
  c.set("solver.stagnation_tol", fmt(sc.mm.stagnation_tol));
  c.set("solver.stagnation_window", std::to_string(sc.mm.stagnation_window));
  c.set("solver.omega", fmt(sc.mm.omega));
  c.set("solver.precond", precond_name(sc.precond));
  std::vector<double> snaps(sc.snapshot_iterations.begin(), sc.snapshot_iterations.end());
  c.set("solver.snapshots", fmt_list(snaps));
  return c;
}

// ---------------------------------------------------------------------------
// running

RunRecord run_solver(const Problem& p, const RunRequest& req, AfgkState* afgk_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const SeedSet seeds = derive_seeds(p.config.seed);
  const DenseMatrixOperator& a = *p.op;

  RunRecord rec;
  rec.problem_config = p.config.to_config();
  rec.solver_config = to_config(req.solve);
  rec.method = to_string(req.method);
  rec.seed = p.config.seed;
  rec.bundle_fingerprint = fingerprint(p);

  std::optional<Vector> x_nn;
  if (req.method != Method::Fhybr) {
    if (!req.warm_basis)
      throw ValidationError("method " + rec.method + " requires a warm basis");
    WarmBasisSpec spec = *req.warm_basis;
    if (spec.mode != WarmBasisSpec::Mode::File) {
      spec.seed = seeds.warm_basis;
      rec.warm_basis_seed = spec.seed;
    }
    rec.warm_basis = spec.to_string();
    x_nn = make_warm_basis(spec, p.x_true);
  }

  SolveConfig sc = req.solve;
  sc.keep_state = afgk_out != nullptr;
  SolveResult res;
  std::optional<WarmBasis> wb;
  switch (req.method) {
    case Method::Wbipm:
      wb = WarmBasis::from_vector(a, *x_nn);
      res = wbipm_solve(a, p.b, *wb, sc, p.x_true);
      break;
    case Method::Fhybr: res = fhybr_solve(a, p.b, sc, p.x_true); break;
    case Method::Warmstart: {
      // The prior only carries a direction; its magnitude is fitted to the data
      // along that direction.
      const WarmBasis dir = WarmBasis::from_vector(a, *x_nn);
      const Vector prior = (dir.y.dot(p.b) / dir.gamma) * dir.x_hat;
      res = warmstart_solve(a, p.b, prior, sc, p.x_true);
      break;
    }
  }

  rec.history = res.history;
  rec.stop_reason = to_string(res.stop);
  rec.x = res.x;
  rec.c = res.c;
  rec.snapshots = res.snapshots;
  if (!res.history.empty()) {
    rec.final_relative_error = res.history.back().relative_error;
    rec.final_residual = res.history.back().residual;
  }
  rec.rmse = rmse_by_zsection(res.x, Vector::Zero(res.x.size()), p.x_true, p.config.grid,
                              default_sections(p.config.grid));

  // The a-priori bound is evaluated for the fixed-parameter full-dimension
  // solution with the final lambda, alpha and preconditioner of the run.
  if (wb && a.cols() <= 2000 && !res.history.empty() && res.history.back().lambda > 0) {
    const IterationRecord& last = res.history.back();
    try {
      rec.bound = theorem_bound(p.x_true, *wb, a.dense(), last.lambda, last.alpha,
                                final_preconditioner(res, req.solve), p.eta);
    } catch (const NumericalError&) {
      // lambda too small for B~ + lambda^2 D to be numerically definite; the
      // bound is a diagnostic, so the record simply goes without it.
    }
  }
  if (afgk_out && res.state) *afgk_out = std::move(*res.state);
  rec.total_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunRecord rerun(const RunRecord& rec) {
  rec.problem_config.check_keys(problem_keys());
  rec.solver_config.check_keys(solver_keys());
  const Problem p = build_problem(ProblemConfig::from_config(rec.problem_config));
  if (!rec.bundle_fingerprint.empty() && fingerprint(p) != rec.bundle_fingerprint)
    throw ValidationError("rerun: rebuilt problem does not match the record's bundle");
  RunRequest req;
  req.method = method_from_string(rec.method);
  if (!rec.warm_basis.empty()) req.warm_basis = WarmBasisSpec::parse(rec.warm_basis);
  req.solve = solve_config_from(rec.solver_config);
  return run_solver(p, req);
}

// ---------------------------------------------------------------------------
// evaluation

EvaluationReport evaluate(const std::vector<RunRecord>& records, const Problem& bundle,
                          const std::vector<int>& ks, const std::vector<ZSection>& sections) {
  require(!records.empty(), "evaluate: no run records");
  const std::string fp = fingerprint(bundle);
  for (const auto& r : records) {
    if (r.bundle_fingerprint != fp)
      throw ValidationError("evaluate: record '" + r.method + "' was produced from a different bundle");
    require(r.x.size() == bundle.x_true.size(), "evaluate: record length mismatch");
  }
  const std::vector<ZSection> secs =
      sections.empty() ? default_sections(bundle.config.grid) : sections;

  EvaluationReport rep;
  for (const auto& r : records) {
    rep.labels.push_back(r.warm_basis.empty() ? r.method : r.method + "[" + r.warm_basis + "]");
    std::vector<std::pair<int, double>> series;
    for (const auto& h : r.history) series.emplace_back(h.k, h.relative_error);
    rep.error_series.push_back(std::move(series));
  }

  auto last_k = [](const RunRecord& r) { return r.history.empty() ? 0 : r.history.back().k; };
  // Iterate of a record at iteration k; a record that stopped earlier
  // contributes its final iterate.
  auto iterate_at = [&](const RunRecord& r, int k, std::string& why) -> const Vector* {
    if (k >= last_k(r)) return &r.x;
    const auto it = r.snapshots.find(k);
    if (it != r.snapshots.end()) return &it->second;
    why = "no snapshot of '" + r.method + "' at k = " + std::to_string(k);
    return nullptr;
  };

  const bool single = records.size() == 1;
  const Vector zero = Vector::Zero(bundle.x_true.size());
  for (int k : ks) {
    require(k >= 1, "evaluate: k must be >= 1");
    KTable t;
    t.k_requested = k;
    int longest = 0;
    for (const auto& r : records) longest = std::max(longest, last_k(r));
    t.k_used = std::min(k, longest);
    t.clipped = false;
    for (const auto& r : records)
      if (last_k(r) < k) t.clipped = true;
    if (t.clipped)
      rep.warnings.push_back("k = " + std::to_string(k) +
                             " exceeds the history of at least one record; final iterates used");

    std::string why;
    const Vector* base = single ? &zero : iterate_at(records[0], t.k_used, why);
    bool ok = base != nullptr;
    for (std::size_t i = single ? 0 : 1; ok && i < records.size(); ++i) {
      const Vector* cand = iterate_at(records[i], t.k_used, why);
      if (!cand) {
        ok = false;
        break;
      }
      t.tables.push_back(rmse_by_zsection(*cand, *base, bundle.x_true, bundle.config.grid, secs));
    }
    if (!ok) {
      rep.warnings.push_back("k = " + std::to_string(k) + " skipped: " + why);
      t.tables.clear();
    }
    rep.k_tables.push_back(std::move(t));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// sweeps

SweepSpec SweepSpec::from_config(const Config& c) {
  SweepSpec s;
  s.noise = c.get_doubles("sweep.noise", s.noise);
  s.angles = c.get_doubles("sweep.angles", s.angles);
  if (c.has("sweep.methods")) {
    s.methods.clear();
    for (const auto& m : c.get_strings("sweep.methods", {})) s.methods.push_back(method_from_string(m));
  }
  s.seeds = to_int(c.get_int("sweep.seeds", s.seeds), "sweep.seeds");
  const long base = c.get_int("sweep.seed_base", static_cast<long>(s.seed_base));
  require(base >= 0, "config: sweep.seed_base must be nonnegative");
  s.seed_base = static_cast<std::uint64_t>(base);
  s.threads = to_int(c.get_int("sweep.threads", s.threads), "sweep.threads");
  require(!s.noise.empty() && !s.angles.empty() && !s.methods.empty() && s.seeds >= 1,
          "sweep: every axis needs at least one value and seeds >= 1");
  for (double v : s.noise) require(v >= 0, "sweep: noise levels must be >= 0");
  for (double v : s.angles) require(v >= 0 && v <= 90, "sweep: angles must lie in [0, 90]");
  return s;
}

SweepResult run_sweep(const ProblemConfig& base, const SolveConfig& sc, const SweepSpec& spec) {
  require(!spec.noise.empty() && !spec.angles.empty() && !spec.methods.empty() && spec.seeds >= 1,
          "sweep: every axis needs at least one value and seeds >= 1");
  sc.validate();
  // Grid, optics and layout are shared by all cells, so the operator is
  // assembled once.
  const auto op = std::make_shared<const DenseMatrixOperator>(build_operator(base));

  SweepResult out;
  for (double sigma : spec.noise)
    for (double angle : spec.angles)
      for (Method m : spec.methods)
        for (int s = 0; s < spec.seeds; ++s) {
          SweepCell cell;
          cell.sigma = sigma;
          cell.angle = angle;
          cell.method = m;
          cell.seed = spec.seed_base + static_cast<std::uint64_t>(s);
          out.cells.push_back(cell);
        }

  // fHybr does not depend on the angle; later angles copy the first result.
  std::map<std::tuple<double, std::uint64_t>, std::size_t> fhybr_owner;
  std::vector<std::size_t> work;
  std::vector<std::pair<std::size_t, std::size_t>> copies;
  for (std::size_t i = 0; i < out.cells.size(); ++i) {
    const SweepCell& c = out.cells[i];
    if (c.method == Method::Fhybr) {
      const auto key = std::make_tuple(c.sigma, c.seed);
      const auto [it, fresh] = fhybr_owner.emplace(key, i);
      if (!fresh) {
        copies.emplace_back(i, it->second);
        continue;
      }
    }
    work.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t w = next++; w < work.size(); w = next++) {
      SweepCell& cell = out.cells[work[w]];
      try {
        ProblemConfig pc = base;
        pc.sigma = cell.sigma;
        pc.seed = cell.seed;
        const Problem p = build_problem(pc, op);
        RunRequest req;
        req.method = cell.method;
        req.solve = sc;
        if (cell.method != Method::Fhybr) {
          WarmBasisSpec wbs;
          wbs.mode = WarmBasisSpec::Mode::Angle;
          wbs.theta_deg = cell.angle;
          req.warm_basis = wbs;
        }
        const RunRecord rec = run_solver(p, req);
        cell.final_relative_error = rec.final_relative_error;
        cell.iterations = rec.history.empty() ? 0 : rec.history.back().k;
        for (const auto& h : rec.history) cell.error_history.push_back(h.relative_error);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };
  unsigned n_threads = spec.threads > 0 ? static_cast<unsigned>(spec.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(std::max<std::size_t>(1, work.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const auto& [dst, src] : copies) {
    const SweepCell keep = out.cells[dst];
    out.cells[dst] = out.cells[src];
    out.cells[dst].angle = keep.angle;
  }

  for (double sigma : spec.noise)
    for (double angle : spec.angles)
      for (Method m : spec.methods) {
        SweepRow row;
        row.sigma = sigma;
        row.angle = angle;
        row.method = m;
        double sum = 0.0;
        for (const auto& c : out.cells) {
          if (c.sigma != sigma || c.angle != angle || c.method != m) continue;
          if (c.ok) {
            sum += c.final_relative_error;
            ++row.succeeded;
          } else {
            ++row.failed;
          }
        }
        row.mean_relative_error =
            row.succeeded > 0 ? sum / row.succeeded : std::numeric_limits<double>::quiet_NaN();
        out.rows.push_back(row);
      }
  return out;
}

}  // namespace wbipm
