#include "igsaft/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace igsaft {

using nlohmann::json;

namespace {

std::string conditioning_name(KmConditioning c) {
  switch (c) {
    case KmConditioning::full:
      return "full";
    case KmConditioning::d_only:
      return "d_only";
    case KmConditioning::marginal:
      return "marginal";
  }
  return "full";
}

json vector_json(const VectorXd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json findings_json(const Findings& findings) {
  json out = json::array();
  for (const auto& f : findings) out.push_back({{"code", f.code}, {"message", f.message}});
  return out;
}

std::string format_number(double x, int digits) {
  if (!std::isfinite(x)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
  return buf;
}

}  // namespace

std::string software_version() { return "1.0.0"; }

std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::istreambuf_iterator<char> it(in), end;
  for (; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json spec_to_json(const MomentSpec& spec) {
  json out = json::array();
  for (const auto& idx : spec.indices()) {
    json row = json::array();
    for (int j : idx.subset) row.push_back(j + 1);
    out.push_back(row);
  }
  return out;
}

json screen_to_json(const ScreenResult& screen, const MomentSpec& candidates) {
  json path = json::array();
  for (std::size_t k = 0; k < screen.path.size(); ++k) {
    path.push_back({{"lambda", screen.path[k].first},
                    {"support", screen.path[k].second},
                    {"bic", k < screen.bic.size() ? screen.bic[k] : std::nan("")}});
  }
  json positions = json::array();
  for (Index pos : screen.positions) positions.push_back(pos + 1);
  return {{"candidates", candidates.m()},
          {"selected", spec_to_json(screen.selected)},
          {"positions", positions},
          {"pilot_coefs", vector_json(screen.pilot_coefs)},
          {"coefficients", vector_json(screen.coefficients)},
          {"penalty", screen.penalty},
          {"fallback", screen.fallback},
          {"path", path}};
}

json test_to_json(const TestResult& test) {
  json out = {{"test", to_string(test.kind)}, {"statistic", test.statistic}, {"df", test.df1}, {"p_value", test.p_value}};
  if (test.kind == TestKind::relevance_f) {
    out["f_statistic"] = test.f_statistic();
    out["df2"] = test.df2;
  }
  return out;
}

json manifest_to_json(const RunManifest& manifest) {
  return {{"command", manifest.command},
          {"config", manifest.config},
          {"seed", manifest.seed},
          {"input_hashes", manifest.input_hashes},
          {"version", manifest.version},
          {"wall_seconds", manifest.wall_seconds}};
}

json fit_report_json(const FitReport& report, const MomentSpec& candidates, const FitConfig& config) {
  const GelFit& g = report.gel;
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["beta_hat"] = g.beta_hat;
  out["se"] = g.se;
  out["alpha"] = g.alpha;
  out["ci"] = {g.ci_lo, g.ci_hi};
  out["exp_beta"] = g.exp_beta;
  out["exp_se"] = g.exp_se;
  out["converged"] = g.converged;
  out["n"] = g.n;
  out["m"] = g.m;
  out["gel"] = {{"family", to_string(g.family)},
                {"q_hat", g.q_hat},
                {"h_hat", g.h_hat},
                {"v_hat", g.v_hat},
                {"lambda_hat", vector_json(g.lambda_hat)},
                {"d_hat", vector_json(g.d_hat)},
                {"clip_count", g.clip_count},
                {"near_boundary", g.near_boundary},
                {"inner_iterations", g.inner_iterations},
                {"interval", {config.lower, config.upper}}};
  out["p_F"] = report.relevance.p_value;
  out["relevance_F"] = test_to_json(report.relevance);
  if (report.overid) {
    out["p_overid"] = report.overid->p_value;
    out["over_id"] = test_to_json(*report.overid);
  } else {
    out["p_overid"] = nullptr;
    out["over_id"] = "not applicable (just identified)";
  }
  out["selected"] = spec_to_json(report.spec);
  out["screening"] = report.screen ? screen_to_json(*report.screen, candidates) : json(nullptr);
  const auto& d = report.moment_diagnostics;
  out["nuisance"] = {{"fold_sizes", {report.fold_sizes[0], report.fold_sizes[1]}},
                     {"bandwidths", {report.bandwidths[0], report.bandwidths[1]}},
                     {"km_conditioning", conditioning_name(report.conditioning)},
                     {"g_clipped", d.g_clipped},
                     {"grid_clipped", d.grid_clipped},
                     {"carry_forward", d.carry_forward},
                     {"empty_risk_set", d.empty_risk_set},
                     {"kernel_widened", d.kernel_widened},
                     {"kernel_uniform_fallback", d.kernel_uniform_fallback}};
  out["findings"] = findings_json(report.findings);
  return out;
}

json diagnose_report_json(const FitReport& report) {
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["m"] = report.spec.m();
  out["selected"] = spec_to_json(report.spec);
  out["p_F"] = report.relevance.p_value;
  out["relevance_F"] = test_to_json(report.relevance);
  if (report.overid) {
    out["p_overid"] = report.overid->p_value;
    out["over_id"] = test_to_json(*report.overid);
  } else {
    out["p_overid"] = nullptr;
    out["over_id"] = "not applicable (just identified)";
  }
  out["findings"] = findings_json(report.findings);
  return out;
}

json mc_summary_json(const McSummary& summary, const SimConfig& sim, const FitConfig& fit) {
  json rows = json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"method", r.estimator},
                    {"bias_pct", r.bias_pct},
                    {"sd", r.sd},
                    {"mean_se", r.mean_se},
                    {"coverage", r.coverage},
                    {"used", r.used},
                    {"excluded", r.excluded},
                    {"exclusion_rate", r.exclusion_rate},
                    {"overid_rejection", r.overid_rejection}});
  }
  json seeds = json::array();
  for (int rep = 0; rep < sim.reps; ++rep) seeds.push_back(replication_seed(sim.seed, rep));
  return {{"schema_version", kReportSchemaVersion},
          {"simulation",
           {{"case", sim.case_id},
            {"n", sim.n},
            {"p", sim.p},
            {"target_cr", sim.target_cr},
            {"censor_width_sd", sim.censor_width_sd},
            {"c_weak", sim.c_weak},
            {"beta0", sim.beta0},
            {"reps", sim.reps},
            {"seed", sim.seed},
            {"nonzero_frac", sim.resolved_nonzero_frac()},
            {"fix_support", sim.fix_support}}},
          {"fit",
           {{"q", fit.q},
            {"alpha", fit.alpha},
            {"screen", fit.screen},
            {"screen_stage", fit.screen_stage == ScreenStage::pre ? "pre" : "post"},
            {"max_keep", fit.max_keep}}},
          {"tau", {summary.tau.first, summary.tau.second}},
          {"mean_censoring_rate", summary.mean_censoring_rate},
          {"replication_seeds", seeds},
          {"rows", rows}};
}

std::string mc_table_csv(const McSummary& summary) {
  std::ostringstream out;
  out << "Method,Bias,SD,SE,CP,Used,Excluded\n";
  for (const auto& r : summary.rows) {
    out << r.estimator << ',' << (std::isfinite(r.bias_pct) ? format_number(r.bias_pct, 3) + "%" : "NA") << ','
        << format_number(r.sd, 3) << ',' << format_number(r.mean_se, 3) << ',' << format_number(r.coverage, 3) << ','
        << r.used << ',' << r.excluded << '\n';
  }
  return out.str();
}

}  // namespace igsaft
