#pragma once

#include "wbipm/analysis.hpp"
#include "wbipm/config.hpp"
#include "wbipm/solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wbipm {

inline constexpr const char* kToolVersion = "1.0.0";

// Self-contained description of one solve. Everything except `timings` is a
// deterministic function of the embedded configuration.
struct RunRecord {
  std::string tool_version = kToolVersion;
  Config problem_config;
  Config solver_config;
  std::string method;
  std::string warm_basis;  // spec string, empty for fhybr
  std::uint64_t seed = 0;
  std::uint64_t warm_basis_seed = 0;
  std::string bundle_fingerprint;

  std::vector<IterationRecord> history;
  std::string stop_reason;
  Vector x;
  double c = 0.0;
  std::map<int, Vector> snapshots;

  double final_relative_error = -1.0;
  double final_residual = 0.0;
  std::optional<ZSectionTable> rmse;  // candidate vs. zero baseline
  std::optional<BoundReport> bound;

  double total_time = 0.0;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

// The history serialized without wall-clock fields; equal strings mean
// byte-identical reruns.
std::string history_digest(const RunRecord& r);

void write_record(const std::filesystem::path& path, const RunRecord& r);
RunRecord read_record(const std::filesystem::path& path);

// k, lambda, alpha, omega, c, projected_residual, residual, relative_error, wall_time
void write_history_csv(const std::filesystem::path& path, const RunRecord& r);

}  // namespace wbipm
