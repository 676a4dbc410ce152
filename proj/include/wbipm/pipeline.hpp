#pragma once

#include "wbipm/analysis.hpp"
#include "wbipm/config.hpp"
#include "wbipm/operator.hpp"
#include "wbipm/run_record.hpp"
#include "wbipm/solver.hpp"
#include "wbipm/warmbasis.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace wbipm {

// Desk-scale slab problem description, read from the "key = value" config.
struct ProblemConfig {
  Grid3 grid{16, 16, 8, 3.375, 3.375, 1.75};
  OpticalCoefficients optics;
  int sources_x = 3, sources_y = 3;
  int detectors_x = 8, detectors_y = 8;
  int inclusions = 0;  // 0 draws 1..3 from the seed
  double min_amplitude = 0.5;
  double max_amplitude = 1.0;
  double sigma = 0.10;
  std::uint64_t seed = 7;
  std::string operator_format = "array";
  // Rescale A to unit spectral norm. The physical scale of the sensitivities
  // is arbitrary (eta is not calibrated), while lambda and alpha are absolute.
  bool normalize_operator = true;

  static ProblemConfig from_config(const Config& c);
  Config to_config() const;
  SourceDetectorLayout layout() const;
};

// Independent streams derived from one master seed.
struct SeedSet {
  std::uint64_t phantom = 0;
  std::uint64_t noise = 0;
  std::uint64_t warm_basis = 0;
};
SeedSet derive_seeds(std::uint64_t seed);

struct Problem {
  ProblemConfig config;
  std::shared_ptr<const DenseMatrixOperator> op;
  Vector x_true;
  Vector b_clean;
  Vector b;
  Vector eta;
};

DenseMatrixOperator build_operator(const ProblemConfig& pc);
// Largest singular value of a dense operator.
double spectral_norm(const DenseMatrixOperator& a);
// Reuses `op` when given (it must match the config's grid and layout).
Problem build_problem(const ProblemConfig& pc,
                      std::shared_ptr<const DenseMatrixOperator> op = nullptr);

void write_bundle(const Problem& p, const std::filesystem::path& dir);
Problem read_bundle(const std::filesystem::path& dir);

// Hex digest of the measurement and ground-truth vectors; records carry it so
// evaluations can refuse to mix bundles.
std::string fingerprint(const Problem& p);

const std::set<std::string>& problem_keys();
const std::set<std::string>& solver_keys();
const std::set<std::string>& sweep_keys();

// Reads the "solver.*" keys.
SolveConfig solve_config_from(const Config& c);
Config to_config(const SolveConfig& sc);

struct RunRequest {
  Method method = Method::Wbipm;
  std::optional<WarmBasisSpec> warm_basis;  // required for wbipm and warmstart
  SolveConfig solve;
};

// Solves and packages the outcome. Warm-basis seeds are taken from the
// problem's seed stream unless the spec is file-based. When `afgk_out` is set
// the final factorization state is moved there.
RunRecord run_solver(const Problem& p, const RunRequest& req, AfgkState* afgk_out = nullptr);

// Rebuilds the problem from the record's embedded configuration and solves
// again.
RunRecord rerun(const RunRecord& rec);

struct KTable {
  int k_requested = 0;
  int k_used = 0;
  bool clipped = false;
  std::vector<ZSectionTable> tables;  // one per candidate record (records[1..])
};

struct EvaluationReport {
  std::vector<std::string> labels;
  // relative error per iteration for every record
  std::vector<std::vector<std::pair<int, double>>> error_series;
  std::vector<KTable> k_tables;
  std::vector<std::string> warnings;
};

// First record is the baseline; every later record is compared with it.
EvaluationReport evaluate(const std::vector<RunRecord>& records, const Problem& bundle,
                          const std::vector<int>& ks = {20, 50, 120},
                          const std::vector<ZSection>& sections = {});

struct SweepSpec {
  std::vector<double> noise{0.05, 0.10, 0.15, 0.20};
  std::vector<double> angles{20.0};
  std::vector<Method> methods{Method::Wbipm, Method::Fhybr};
  int seeds = 10;
  std::uint64_t seed_base = 1;
  int threads = 0;  // 0 uses the hardware concurrency

  static SweepSpec from_config(const Config& c);
};

struct SweepCell {
  double sigma = 0.0;
  double angle = 0.0;
  Method method = Method::Wbipm;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_relative_error = 0.0;
  int iterations = 0;
  std::vector<double> error_history;
};

struct SweepRow {
  double sigma = 0.0;
  double angle = 0.0;
  Method method = Method::Wbipm;
  double mean_relative_error = 0.0;
  int succeeded = 0;
  int failed = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
};

SweepResult run_sweep(const ProblemConfig& base, const SolveConfig& sc, const SweepSpec& spec);

}  // namespace wbipm
