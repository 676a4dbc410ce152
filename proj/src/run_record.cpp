#include "wbipm/run_record.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace wbipm {

using nlohmann::json;

namespace {

json vec_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vec_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

double num(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json config_json(const Config& c) { return json(c.values()); }

Config config_from(const json& j) {
  Config c;
  for (const auto& [k, v] : j.items()) c.set(k, v.get<std::string>());
  return c;
}

json history_json(const std::vector<IterationRecord>& hist, bool with_time) {
  json arr = json::array();
  for (const auto& h : hist) {
    json row{{"k", h.k},
             {"lambda", h.lambda},
             {"alpha", h.alpha},
             {"omega", h.omega},
             {"c", h.c},
             {"projected_residual", h.projected_residual},
             {"residual", h.residual},
             {"relative_error", h.relative_error},
             {"lambda_fallback", h.lambda_fallback}};
    if (with_time) row["wall_time"] = h.wall_time;
    arr.push_back(row);
  }
  return arr;
}

json row_json(const ZSectionRow& r) {
  return {{"z_lo_mm", r.section.z_lo},         {"z_hi_mm", r.section.z_hi},
          {"voxels", r.voxels},                {"baseline_rmse", r.baseline_rmse},
          {"candidate_rmse", r.candidate_rmse}, {"improvement_pct", r.improvement_pct}};
}

ZSectionRow row_from(const json& j) {
  ZSectionRow r;
  r.section = {j.at("z_lo_mm").get<double>(), j.at("z_hi_mm").get<double>()};
  r.voxels = j.at("voxels").get<Index>();
  r.baseline_rmse = j.at("baseline_rmse").get<double>();
  r.candidate_rmse = j.at("candidate_rmse").get<double>();
  r.improvement_pct = num(j.at("improvement_pct"));
  return r;
}

}  // namespace

json to_json(const RunRecord& r) {
  json j;
  j["tool"] = "wbipm";
  j["version"] = r.tool_version;
  j["config"] = {{"problem", config_json(r.problem_config)},
                 {"solver", config_json(r.solver_config)}};
  j["method"] = r.method;
  j["warm_basis"] = r.warm_basis;
  j["seeds"] = {{"problem", r.seed}, {"warm_basis", r.warm_basis_seed}};
  j["bundle_fingerprint"] = r.bundle_fingerprint;
  j["history"] = history_json(r.history, false);
  j["final"] = {{"stop_reason", r.stop_reason},
                {"iterations", r.history.empty() ? 0 : r.history.back().k},
                {"relative_error", r.final_relative_error},
                {"residual", r.final_residual},
                {"c", r.c}};
  if (r.rmse) {
    json rows = json::array();
    for (const auto& row : r.rmse->rows) rows.push_back(row_json(row));
    j["final"]["rmse_by_section"] = {{"rows", rows}, {"overall", row_json(r.rmse->overall)}};
  }
  if (r.bound) {
    const auto& b = *r.bound;
    j["final"]["bound"] = {{"c1", b.c1},
                           {"c2", b.c2},
                           {"c3", b.c3},
                           {"term_alpha", b.term_alpha},
                           {"term_align", b.term_align},
                           {"term_align_gamma_form", b.term_align_gamma},
                           {"term_noise", b.term_noise},
                           {"total", b.total},
                           {"observed_error", b.observed_error},
                           {"theta_plus", b.theta_plus},
                           {"gamma_z_kernel", b.gamma_z_kernel},
                           {"gamma_x_perp", b.gamma_x_perp},
                           {"holds", b.holds()}};
  }
  j["x"] = vec_json(r.x);
  json snaps = json::object();
  for (const auto& [k, v] : r.snapshots) snaps[std::to_string(k)] = vec_json(v);
  j["snapshots"] = snaps;
  json per_iter = json::array();
  for (const auto& h : r.history) per_iter.push_back(h.wall_time);
  j["timings"] = {{"total_s", r.total_time}, {"wall_time_s", per_iter}};
  return j;
}

RunRecord record_from_json(const json& j) {
  try {
    RunRecord r;
    r.tool_version = j.at("version").get<std::string>();
    r.problem_config = config_from(j.at("config").at("problem"));
    r.solver_config = config_from(j.at("config").at("solver"));
    r.method = j.at("method").get<std::string>();
    r.warm_basis = j.at("warm_basis").get<std::string>();
    r.seed = j.at("seeds").at("problem").get<std::uint64_t>();
    r.warm_basis_seed = j.at("seeds").at("warm_basis").get<std::uint64_t>();
    r.bundle_fingerprint = j.at("bundle_fingerprint").get<std::string>();
    const auto& times = j.at("timings").at("wall_time_s");
    std::size_t i = 0;
    for (const auto& h : j.at("history")) {
      IterationRecord rec;
      rec.k = h.at("k").get<int>();
      rec.lambda = h.at("lambda").get<double>();
      rec.alpha = h.at("alpha").get<double>();
      rec.omega = h.at("omega").get<double>();
      rec.c = h.at("c").get<double>();
      rec.projected_residual = h.at("projected_residual").get<double>();
      rec.residual = h.at("residual").get<double>();
      rec.relative_error = h.at("relative_error").get<double>();
      rec.lambda_fallback = h.at("lambda_fallback").get<bool>();
      rec.wall_time = i < times.size() ? times[i].get<double>() : 0.0;
      ++i;
      r.history.push_back(rec);
    }
    const auto& fin = j.at("final");
    r.stop_reason = fin.at("stop_reason").get<std::string>();
    r.final_relative_error = fin.at("relative_error").get<double>();
    r.final_residual = fin.at("residual").get<double>();
    r.c = fin.at("c").get<double>();
    if (fin.contains("rmse_by_section")) {
      ZSectionTable t;
      for (const auto& row : fin["rmse_by_section"].at("rows")) t.rows.push_back(row_from(row));
      t.overall = row_from(fin["rmse_by_section"].at("overall"));
      r.rmse = t;
    }
    if (fin.contains("bound")) {
      const auto& b = fin["bound"];
      BoundReport br;
      br.c1 = num(b.at("c1"));
      br.c2 = num(b.at("c2"));
      br.c3 = num(b.at("c3"));
      br.term_alpha = num(b.at("term_alpha"));
      br.term_align = num(b.at("term_align"));
      br.term_align_gamma = num(b.at("term_align_gamma_form"));
      br.term_noise = num(b.at("term_noise"));
      br.total = num(b.at("total"));
      br.observed_error = num(b.at("observed_error"));
      br.theta_plus = num(b.at("theta_plus"));
      br.gamma_z_kernel = num(b.at("gamma_z_kernel"));
      br.gamma_x_perp = num(b.at("gamma_x_perp"));
      r.bound = br;
    }
    r.x = vec_from(j.at("x"));
    for (const auto& [k, v] : j.at("snapshots").items()) r.snapshots[std::stoi(k)] = vec_from(v);
    r.total_time = j.at("timings").at("total_s").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed run record: ") + e.what());
  }
}

std::string history_digest(const RunRecord& r) { return history_json(r.history, false).dump(); }

void write_record(const std::filesystem::path& path, const RunRecord& r) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write run record '" + path.string() + "'");
  out << to_json(r).dump(1) << '\n';
}

RunRecord read_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open run record '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("run record '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return record_from_json(j);
}

void write_history_csv(const std::filesystem::path& path, const RunRecord& r) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "k,lambda,alpha,omega,c,projected_residual,residual,relative_error,wall_time\n";
  char buf[512];
  for (const auto& h : r.history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", h.k,
                  h.lambda, h.alpha, h.omega, h.c, h.projected_residual, h.residual,
                  h.relative_error, h.wall_time);
    out << buf;
  }
}

}  // namespace wbipm
