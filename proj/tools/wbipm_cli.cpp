// wbipm command-line front end: generate, solve, evaluate, sweep, rerun.

#include "wbipm/matrix_market.hpp"
#include "wbipm/pipeline.hpp"
#include "wbipm/run_record.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace wbipm;

namespace {

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config c = path.empty() ? Config() : Config::from_file(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, "--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    c.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return c;
}

Config subset(const Config& c, const std::set<std::string>& keys) {
  Config out;
  for (const auto& [k, v] : c.values())
    if (keys.count(k)) out.set(k, v);
  return out;
}

std::set<std::string> merge(std::initializer_list<const std::set<std::string>*> sets) {
  std::set<std::string> out;
  for (const auto* s : sets) out.insert(s->begin(), s->end());
  return out;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ValidationError("cannot write '" + p.string() + "'");
  return out;
}

// "1-4,5-8" -> {{1,4},{5,8}}
std::vector<std::pair<int, int>> parse_slices(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int lo = 0, hi = 0;
    char dash = 0;
    std::istringstream is(item);
    if (!(is >> lo >> dash >> hi) || dash != '-')
      throw ValidationError("--sections expects ranges like 1-4,5-8; got '" + item + "'");
    out.emplace_back(lo, hi);
  }
  return out;
}

struct SolverFlags {
  std::string config;
  std::vector<std::string> set;
  std::optional<int> max_outer;
  std::optional<std::string> lambda_rule, alpha_rule, precond;
  std::optional<double> lambda, alpha, epsilon, omega;

  void add(CLI::App* app) {
    app->add_option("--solver-config", config, "Config file with solver.* keys")
        ->check(CLI::ExistingFile);
    app->add_option("--set", set, "Override a config key, e.g. --set solver.alpha=0.01");
    app->add_option("--max-outer", max_outer, "Outer iteration cap (default 120)");
    app->add_option("--lambda-rule", lambda_rule, "fixed or wgcv (default wgcv)");
    app->add_option("--lambda", lambda, "Fixed lambda, or the WGCV fallback");
    app->add_option("--alpha-rule", alpha_rule, "fixed or wgcv (default fixed)");
    app->add_option("--alpha", alpha, "Fixed alpha, or the WGCV fallback (default 0.1)");
    app->add_option("--epsilon", epsilon, "MM smoothing parameter (default 1e-6)");
    app->add_option("--omega", omega, "Fixed WGCV weight; <= 0 adapts (default)");
    app->add_option("--precond", precond, "identity, complement (default) or full");
  }

  SolveConfig resolve() const {
    Config c = load_config(config, set);
    if (max_outer) c.set("solver.max_outer", std::to_string(*max_outer));
    if (lambda_rule) c.set("solver.lambda_rule", *lambda_rule);
    if (alpha_rule) c.set("solver.alpha_rule", *alpha_rule);
    if (precond) c.set("solver.precond", *precond);
    if (lambda) c.set("solver.lambda", num(*lambda));
    if (alpha) c.set("solver.alpha", num(*alpha));
    if (epsilon) c.set("solver.epsilon", num(*epsilon));
    if (omega) c.set("solver.omega", num(*omega));
    Config solver = subset(c, solver_keys());
    // Problem and sweep keys are tolerated so one file can serve every command.
    c.check_keys(merge({&problem_keys(), &solver_keys(), &sweep_keys()}));
    return solve_config_from(solver);
  }
};

void print_record_summary(const RunRecord& r) {
  std::cout << r.method << (r.warm_basis.empty() ? "" : " [" + r.warm_basis + "]") << ": "
            << r.history.size() << " iterations, stop = " << r.stop_reason
            << ", relative error = " << num(r.final_relative_error)
            << ", residual = " << num(r.final_residual) << '\n';
  if (r.bound)
    std::cout << "bound: observed " << num(r.bound->observed_error) << " <= total "
              << num(r.bound->total) << (r.bound->holds() ? " (holds)" : " (VIOLATED)") << '\n';
}

void write_rmse_csv(std::ostream& out, const std::vector<std::string>& labels,
                    const KTable& t, bool single) {
  out << "candidate,z_lo_mm,z_hi_mm,voxels,baseline_rmse,candidate_rmse,improvement_pct\n";
  for (std::size_t i = 0; i < t.tables.size(); ++i) {
    const std::string& label = labels[single ? 0 : i + 1];
    auto row = [&](const ZSectionRow& r, bool overall) {
      out << label << ',' << (overall ? "all" : num(r.section.z_lo)) << ','
          << (overall ? "all" : num(r.section.z_hi)) << ',' << r.voxels << ','
          << num(r.baseline_rmse) << ',' << num(r.candidate_rmse) << ','
          << num(r.improvement_pct) << '\n';
    };
    for (const auto& r : t.tables[i].rows) row(r, false);
    row(t.tables[i].overall, true);
  }
}

int cmd_generate(const std::string& config, const std::vector<std::string>& set,
                 const std::string& out_dir) {
  const Config c = load_config(config, set);
  c.check_keys(merge({&problem_keys(), &solver_keys(), &sweep_keys()}));
  const ProblemConfig pc = ProblemConfig::from_config(subset(c, problem_keys()));
  const Problem p = build_problem(pc);
  write_bundle(p, out_dir);
  std::cout << "bundle " << out_dir << ": M = " << p.op->rows() << ", N = " << p.op->cols()
            << ", sigma = " << num(pc.sigma) << ", fingerprint " << fingerprint(p) << '\n';
  return 0;
}

int cmd_solve(const std::string& bundle, const std::string& method,
              const std::string& warm_basis, const SolverFlags& flags, const std::string& out,
              std::string csv, const std::string& dump_dir, bool quiet) {
  const Problem p = read_bundle(bundle);
  RunRequest req;
  req.method = method_from_string(method);
  if (!warm_basis.empty()) req.warm_basis = WarmBasisSpec::parse(warm_basis);
  if (req.method != Method::Fhybr && !req.warm_basis)
    throw ValidationError("method " + method + " requires --warm-basis");
  req.solve = flags.resolve();

  AfgkState state;
  const RunRecord rec = run_solver(p, req, dump_dir.empty() ? nullptr : &state);
  write_record(out, rec);
  if (csv.empty()) csv = (fs::path(out).replace_extension(".csv")).string();
  write_history_csv(csv, rec);
  if (!dump_dir.empty()) {
    fs::create_directories(dump_dir);
    const fs::path d(dump_dir);
    mm::write_array(d / "U.mtx", state.u, "AFGK U");
    mm::write_array(d / "V.mtx", state.v, "AFGK V");
    mm::write_array(d / "Z.mtx", state.z, "AFGK Z");
    mm::write_array(d / "G.mtx", state.g, "AFGK G");
    mm::write_array(d / "T.mtx", state.t, "AFGK T");
  }
  if (!quiet) print_record_summary(rec);
  return 0;
}

int cmd_evaluate(const std::string& bundle, const std::vector<std::string>& record_paths,
                 const std::vector<int>& ks, const std::string& sections,
                 const std::string& out_dir) {
  const Problem p = read_bundle(bundle);
  std::vector<RunRecord> records;
  for (const auto& path : record_paths) records.push_back(read_record(path));
  std::vector<ZSection> secs;
  if (!sections.empty()) secs = slice_sections(p.config.grid, parse_slices(sections));
  const EvaluationReport rep = evaluate(records, p, ks, secs);
  const bool single = records.size() == 1;

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    std::ofstream out = open_out(dir / "errors.csv");
    out << "label,k,relative_error\n";
    for (std::size_t i = 0; i < records.size(); ++i)
      for (const auto& [k, e] : rep.error_series[i])
        out << rep.labels[i] << ',' << k << ',' << num(e) << '\n';
  }
  nlohmann::json j;
  j["labels"] = rep.labels;
  j["baseline"] = single ? "zero" : rep.labels[0];
  j["warnings"] = rep.warnings;
  j["tables"] = nlohmann::json::array();
  for (const auto& t : rep.k_tables) {
    std::ofstream out = open_out(dir / ("rmse_k" + std::to_string(t.k_requested) + ".csv"));
    write_rmse_csv(out, rep.labels, t, single);
    nlohmann::json jt{{"k_requested", t.k_requested}, {"k_used", t.k_used}, {"clipped", t.clipped}};
    nlohmann::json overall = nlohmann::json::array();
    for (const auto& tab : t.tables)
      overall.push_back({{"baseline_rmse", tab.overall.baseline_rmse},
                         {"candidate_rmse", tab.overall.candidate_rmse},
                         {"improvement_pct", tab.overall.improvement_pct}});
    jt["overall"] = overall;
    j["tables"].push_back(jt);
    std::cout << "k = " << t.k_requested << (t.clipped ? " (clipped)" : "") << ':';
    for (const auto& tab : t.tables) std::cout << ' ' << num(tab.overall.improvement_pct) << '%';
    std::cout << '\n';
  }
  std::ofstream(dir / "evaluation.json") << j.dump(1) << '\n';
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& set,
              const SolverFlags& flags, const std::string& out, const std::string& cells_out) {
  const Config c = load_config(config, set);
  c.check_keys(merge({&problem_keys(), &solver_keys(), &sweep_keys()}));
  const ProblemConfig pc = ProblemConfig::from_config(subset(c, problem_keys()));
  SolverFlags f = flags;
  if (f.config.empty()) f.config = config;
  const SolveConfig sc = f.resolve();
  const SweepSpec spec = SweepSpec::from_config(subset(c, sweep_keys()));
  const SweepResult res = run_sweep(pc, sc, spec);

  {
    std::ofstream o = open_out(out);
    o << "sigma,angle_deg,method,mean_relative_error,succeeded,failed\n";
    for (const auto& r : res.rows)
      o << num(r.sigma) << ',' << num(r.angle) << ',' << to_string(r.method) << ','
        << num(r.mean_relative_error) << ',' << r.succeeded << ',' << r.failed << '\n';
  }
  if (!cells_out.empty()) {
    std::ofstream o = open_out(cells_out);
    o << "sigma,angle_deg,method,seed,ok,final_relative_error,iterations,error\n";
    for (const auto& cell : res.cells)
      o << num(cell.sigma) << ',' << num(cell.angle) << ',' << to_string(cell.method) << ','
        << cell.seed << ',' << (cell.ok ? 1 : 0) << ',' << num(cell.final_relative_error) << ','
        << cell.iterations << ",\"" << cell.error << "\"\n";
  }
  int failed = 0;
  for (const auto& r : res.rows) {
    std::cout << "sigma " << num(r.sigma) << " angle " << num(r.angle) << ' '
              << to_string(r.method) << ": mean relative error " << num(r.mean_relative_error)
              << " (" << r.succeeded << " ok, " << r.failed << " failed)\n";
    failed += r.failed;
  }
  if (failed) std::cerr << "warning: " << failed << " sweep cells failed\n";
  return 0;
}

int cmd_rerun(const std::string& record_path, const std::string& out) {
  const RunRecord original = read_record(record_path);
  const RunRecord again = rerun(original);
  if (!out.empty()) write_record(out, again);
  const bool same = history_digest(original) == history_digest(again);
  std::cout << (same ? "identical" : "DIFFERENT") << " history (" << again.history.size()
            << " iterations)\n";
  return same ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Warm-basis iterative projection solver for l1-regularized inverse problems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config, out_dir = "bundle";
  std::vector<std::string> set;
  auto* gen = app.add_subcommand("generate", "Build a synthetic slab problem bundle");
  gen->add_option("config", config, "Problem config (key = value)")->check(CLI::ExistingFile);
  gen->add_option("-o,--out", out_dir, "Bundle directory")->capture_default_str();
  gen->add_option("--set", set, "Override a config key, e.g. --set noise.sigma=0");

  std::string bundle, method = "wbipm", warm_basis, record_out = "run.json", csv, dump_dir;
  bool quiet = false;
  SolverFlags solve_flags;
  auto* solve = app.add_subcommand("solve", "Solve a bundle and write a run record");
  solve->add_option("bundle", bundle, "Bundle directory")->required();
  solve->add_option("-m,--method", method, "wbipm, fhybr or warmstart")->capture_default_str();
  solve->add_option("-w,--warm-basis", warm_basis,
                    "exact, random, angle:<deg> or file:<path.mtx>");
  solve->add_option("-o,--out", record_out, "Run record (JSON)")->capture_default_str();
  solve->add_option("--csv", csv, "Iteration CSV (default: record path with .csv)");
  solve->add_option("--dump-afgk", dump_dir, "Write U, V, Z, G, T as Matrix Market files here");
  solve->add_flag("-q,--quiet", quiet);
  solve_flags.add(solve);

  std::vector<std::string> records;
  std::vector<int> ks{20, 50, 120};
  std::string sections, eval_out = "evaluation";
  auto* eval = app.add_subcommand("evaluate", "Compare run records on their common bundle");
  eval->add_option("bundle", bundle, "Bundle directory")->required();
  eval->add_option("records", records, "Run records; the first is the baseline")->required();
  eval->add_option("-k", ks, "Iterations for the RMSE tables")->capture_default_str();
  eval->add_option("--sections", sections, "Slice ranges, e.g. 1-2,3-4,5-6,7-8");
  eval->add_option("-o,--out", eval_out, "Output directory")->capture_default_str();

  std::string sweep_config, sweep_out = "sweep.csv", cells_out;
  SolverFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Noise x angle x method x seed sweep");
  sweep->add_option("config", sweep_config, "Config with problem, solver.* and sweep.* keys")
      ->check(CLI::ExistingFile);
  sweep->add_option("-o,--out", sweep_out, "Aggregated CSV")->capture_default_str();
  sweep->add_option("--cells", cells_out, "Per-cell CSV");
  sweep_flags.add(sweep);

  std::string rerun_in, rerun_out;
  auto* rr = app.add_subcommand("rerun", "Re-run a record from its embedded config and compare");
  rr->add_option("record", rerun_in, "Run record")->required()->check(CLI::ExistingFile);
  rr->add_option("-o,--out", rerun_out, "Write the new record here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_generate(config, set, out_dir);
    if (*solve)
      return cmd_solve(bundle, method, warm_basis, solve_flags, record_out, csv, dump_dir, quiet);
    if (*eval) return cmd_evaluate(bundle, records, ks, sections, eval_out);
    if (*sweep) return cmd_sweep(sweep_config, sweep_flags.set, sweep_flags, sweep_out, cells_out);
    if (*rr) return cmd_rerun(rerun_in, rerun_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
