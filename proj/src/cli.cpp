#include "igsaft/cli.hpp"

#include "igsaft/parallel.hpp"
#include "igsaft/report.hpp"
#include "igsaft/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace igsaft {

using nlohmann::json;

namespace {

struct DataFlags {
  std::string path;
  std::string time;
  std::string status;
  std::string exposure;
  std::vector<std::string> ivs;
  std::string time_scale = "raw";
};

struct FitFlags {
  int q = 2;
  std::string gel = "el";
  double alpha = 0.05;
  std::string kernel = "gaussian";
  std::string bandwidth = "silverman";
  double trunc_eps = 0.01;
  std::string km_conditioning = "auto";
  std::string screen = "on";
  Index max_keep = 100;
  std::string screen_stage = "pre";
  double lower = -10.0;
  double upper = 10.0;
  std::uint64_t seed = 1;
  std::string covariance = "hc0";
  int threads = 1;
  bool no_cross_fit = false;
  bool no_censoring_adjustment = false;
};

struct SimFlags {
  int case_id = 1;
  Index n = 2000;
  int p = 10;
  double cr = 0.2;
  double censor_width = 12.0;
  int reps = 100;
  double c_weak = 4.0;
  double beta0 = 1.0;
  std::string gel = "el";
  std::string estimators;
  double nonzero_frac = 0.0;
  bool fix_support = false;
  bool null_interactions = false;
  std::string out;
  std::string json_path;
  std::string export_data;
  bool export_only = false;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Splits a trailing decimal number off a column name.
bool split_numbered(const std::string& name, std::string& prefix, long long& number) {
  std::size_t k = name.size();
  while (k > 0 && std::isdigit(static_cast<unsigned char>(name[k - 1]))) --k;
  if (k == name.size()) return false;
  prefix = name.substr(0, k);
  return parse_int(name.substr(k), number);
}

CLI::Validator family_list() {
  return CLI::Validator(
      [](std::string& v) {
        for (const auto& f : split(v, ',')) {
          if (f != "el" && f != "et" && f != "cue") return std::string("unknown GEL family '") + f + "'";
        }
        return std::string();
      },
      "el|et|cue list");
}

void add_fit_flags(CLI::App* app, FitFlags& f, bool family_list_allowed) {
  app->add_option("--q", f.q, "Highest interaction order")->capture_default_str();
  app->add_option("--gel", f.gel, family_list_allowed ? "GEL families, comma separated" : "GEL family")
      ->check(family_list_allowed ? family_list() : CLI::Validator(CLI::IsMember({"el", "et", "cue"})))
      ->capture_default_str();
  app->add_option("--alpha", f.alpha, "Confidence level complement")->capture_default_str();
  app->add_option("--kernel", f.kernel, "Kernel for the local Kaplan-Meier")
      ->check(CLI::IsMember({"gaussian", "uniform", "epanechnikov"}))
      ->capture_default_str();
  app->add_option("--bandwidth", f.bandwidth, "silverman or a positive number")->capture_default_str();
  app->add_option("--trunc-eps", f.trunc_eps, "Lower clip for the censoring survival")->capture_default_str();
  app->add_option("--km-conditioning", f.km_conditioning, "Coordinates the local Kaplan-Meier conditions on")
      ->check(CLI::IsMember({"auto", "full", "d_only", "marginal"}))
      ->capture_default_str();
  app->add_option("--screen", f.screen, "Adaptive-lasso screening")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  app->add_option("--max-keep", f.max_keep, "Largest number of screened moments")->capture_default_str();
  app->add_option("--screen-stage", f.screen_stage, "Screen before or after building moments")
      ->check(CLI::IsMember({"pre", "post"}))
      ->capture_default_str();
  app->add_option("--lower", f.lower, "Lower end of the beta search interval")->capture_default_str();
  app->add_option("--upper", f.upper, "Upper end of the beta search interval")->capture_default_str();
  app->add_option("--seed", f.seed, "Seed for every random choice")->capture_default_str();
  app->add_option("--covariance", f.covariance, "Sandwich form of the relevance test")
      ->check(CLI::IsMember({"hc0", "hc3"}))
      ->capture_default_str();
  app->add_option("--threads", f.threads, "Worker threads (0 = all cores)")->capture_default_str();
  app->add_flag("--no-cross-fit", f.no_cross_fit, "Train nuisances on all rows (debugging)");
  app->add_flag("--no-censoring-adjustment", f.no_censoring_adjustment, "Use the uncensored moment (debugging)");
}

void add_data_flags(CLI::App* app, DataFlags& d) {
  app->add_option("--data", d.path, "Input CSV")->required();
  app->add_option("--time", d.time, "Follow-up time column")->required();
  app->add_option("--status", d.status, "Event indicator column (1 = event)")->required();
  app->add_option("--exposure", d.exposure, "Exposure column")->required();
  app->add_option("--iv", d.ivs, "Instrument columns, e.g. z1..z10 or z1,z2")->required();
  app->add_option("--time-scale", d.time_scale, "raw times are logged on input; log times are used as is")
      ->check(CLI::IsMember({"raw", "log"}))
      ->capture_default_str();
}

FitConfig make_fit_config(const FitFlags& f) {
  FitConfig c;
  c.q = f.q;
  c.family = parse_family(f.gel);
  c.alpha = f.alpha;
  c.kernel.kernel = f.kernel == "uniform"        ? KernelFamily::uniform
                    : f.kernel == "epanechnikov" ? KernelFamily::epanechnikov
                                                 : KernelFamily::gaussian;
  if (f.bandwidth != "silverman") {
    double h = 0.0;
    const auto res = std::from_chars(f.bandwidth.data(), f.bandwidth.data() + f.bandwidth.size(), h);
    if (res.ec != std::errc() || res.ptr != f.bandwidth.data() + f.bandwidth.size() || !(h > 0.0)) {
      throw ValueError("--bandwidth must be 'silverman' or a positive number");
    }
    c.kernel.bandwidth_rule = BandwidthRule::fixed;
    c.kernel.fixed_h = h;
  }
  c.kernel.trunc_eps = f.trunc_eps;
  if (f.km_conditioning == "full") c.kernel.conditioning = KmConditioning::full;
  if (f.km_conditioning == "d_only") c.kernel.conditioning = KmConditioning::d_only;
  if (f.km_conditioning == "marginal") c.kernel.conditioning = KmConditioning::marginal;
  c.screen = f.screen == "on";
  c.max_keep = f.max_keep;
  c.screen_stage = f.screen_stage == "post" ? ScreenStage::post : ScreenStage::pre;
  c.lower = f.lower;
  c.upper = f.upper;
  c.seed = f.seed;
  c.covariance = f.covariance == "hc3" ? RobustCovariance::hc3 : RobustCovariance::hc0;
  c.threads = resolve_threads(f.threads);
  c.cross_fit = !f.no_cross_fit;
  c.censoring_adjustment = !f.no_censoring_adjustment;
  return c;
}

json fit_flags_json(const FitFlags& f) {
  return {{"q", f.q},
          {"gel", f.gel},
          {"alpha", f.alpha},
          {"kernel", f.kernel},
          {"bandwidth", f.bandwidth},
          {"trunc-eps", f.trunc_eps},
          {"km-conditioning", f.km_conditioning},
          {"screen", f.screen},
          {"max-keep", f.max_keep},
          {"screen-stage", f.screen_stage},
          {"lower", f.lower},
          {"upper", f.upper},
          {"seed", f.seed},
          {"covariance", f.covariance},
          {"no-cross-fit", f.no_cross_fit},
          {"no-censoring-adjustment", f.no_censoring_adjustment}};
}

json data_flags_json(const DataFlags& d, const std::vector<std::string>& ivs) {
  return {{"data", d.path},   {"time", d.time}, {"status", d.status}, {"exposure", d.exposure},
          {"iv", ivs},        {"time-scale", d.time_scale}};
}

/// Prepends config-file entries for options absent from the command line.
std::vector<std::string> apply_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) path = args[k + 1];
    if (args[k].rfind("--config=", 0) == 0) path = args[k].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open config file '" + path + "'");
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw SchemaError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) throw SchemaError("config file must hold a JSON object");
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> injected;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) injected.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      injected.push_back(flag);
      injected.push_back(joined);
    } else if (value.is_string()) {
      injected.push_back(flag);
      injected.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      injected.push_back(flag);
      injected.push_back(value.dump());
    } else {
      throw SchemaError("config entry '" + key + "' has an unsupported type");
    }
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::string join_args(const std::vector<std::string>& args) {
  std::string out = "igsaft";
  for (const auto& a : args) out += " " + a;
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw SchemaError("cannot write '" + path + "'");
  f << text;
}

std::string fmt(double x) {
  if (!std::isfinite(x)) return "NA";
  std::ostringstream s;
  s << std::setprecision(6) << x;
  return s.str();
}

int cmd_fit(const std::vector<std::string>& args, const DataFlags& df, const FitFlags& ff, const std::string& out_path,
             const std::string& dump_moments, bool with_aft, bool diagnose_only, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  ColumnConfig cols;
  cols.time = df.time;
  cols.status = df.status;
  cols.exposure = df.exposure;
  cols.ivs = expand_columns(df.ivs);
  cols.time_scale = df.time_scale == "log" ? TimeScale::log : TimeScale::raw;
  const FitConfig cfg = make_fit_config(ff);
  const Dataset data = load_csv(df.path, cols);
  cfg.check(data.p());

  const PreparedMoments prepared = prepare_moments(data, cfg);
  if (!dump_moments.empty()) write_moments_csv(dump_moments, prepared.moments);
  const FitReport report = estimate(prepared, cfg);

  json j = diagnose_only ? diagnose_report_json(report)
                         : fit_report_json(report, MomentSpec::full(static_cast<int>(data.p()), cfg.q), cfg);
  if (with_aft && !diagnose_only) {
    const AftResult a = aft_benchmark(data);
    j["aft_benchmark"] = {{"beta", a.beta}, {"se", a.se}, {"sigma", a.sigma}, {"converged", a.converged}};
  }
  RunManifest manifest;
  manifest.command = join_args(args);
  manifest.config = data_flags_json(df, cols.ivs);
  manifest.config.update(fit_flags_json(ff));
  manifest.seed = ff.seed;
  manifest.input_hashes = {{"data", fnv1a_file(df.path)}};
  manifest.version = software_version();
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  j["manifest"] = manifest_to_json(manifest);

  if (out_path.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_text(out_path, j.dump(2) + "\n");
    if (!diagnose_only) {
      const double z = report.gel.beta_hat;
      out << "beta_hat " << fmt(z) << " (se " << fmt(report.gel.se) << "), " << fmt(100.0 * (1.0 - cfg.alpha))
          << "% CI [" << fmt(report.gel.ci_lo) << ", " << fmt(report.gel.ci_hi) << "]\n"
          << "exp(beta) " << fmt(report.gel.exp_beta) << " (se " << fmt(report.gel.exp_se) << ")\n";
    }
    out << "moments " << report.spec.m() << ", p_F " << fmt(report.relevance.p_value) << ", p_overid "
        << (report.overid ? fmt(report.overid->p_value) : std::string("not applicable")) << '\n';
    if (!report.findings.empty()) out << report.findings.size() << " finding(s) recorded in the report\n";
  }
  if (!diagnose_only && !report.gel.converged) return kExitEstimation;
  return kExitOk;
}

int cmd_simulate(const std::vector<std::string>& args, const SimFlags& sf, const FitFlags& ff, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  SimConfig sim;
  sim.case_id = sf.case_id;
  sim.n = sf.n;
  sim.p = sf.p;
  sim.target_cr = sf.cr;
  sim.censor_width_sd = sf.censor_width;
  sim.reps = sf.reps;
  sim.c_weak = sf.c_weak;
  sim.beta0 = sf.beta0;
  sim.seed = ff.seed;
  if (sf.nonzero_frac > 0.0) sim.nonzero_frac = sf.nonzero_frac;
  sim.fix_support = sf.fix_support;
  sim.null_interactions = sf.null_interactions;
  sim.check();
  const FitConfig fit = make_fit_config(ff);
  fit.check(sim.p);

  if (!sf.export_data.empty()) {
    const SimDraw draw = generate(sim, replication_seed(sim.seed, 0), resolve_censoring(sim));
    write_csv(sf.export_data, draw.data, ColumnConfig::standard(sim.p));
    if (sf.export_only) return kExitOk;
  }

  std::vector<std::string> estimators = split(sf.estimators.empty() ? sf.gel + ",aft" : sf.estimators, ',');
  const McSummary summary = run_monte_carlo(sim, fit, estimators, fit.threads);
  const std::string table = mc_table_csv(summary);
  if (sf.out.empty()) {
    out << table;
  } else {
    write_text(sf.out, table);
  }
  if (!sf.json_path.empty()) {
    json j = mc_summary_json(summary, sim, fit);
    RunManifest manifest;
    manifest.command = join_args(args);
    manifest.config = fit_flags_json(ff);
    manifest.config.update({{"case", sf.case_id},
                            {"n", sf.n},
                            {"p", sf.p},
                            {"cr", sf.cr},
                            {"censor-width", sf.censor_width},
                            {"reps", sf.reps},
                            {"c-weak", sf.c_weak},
                            {"beta0", sf.beta0},
                            {"estimators", estimators},
                            {"fix-support", sf.fix_support},
                            {"null-interactions", sf.null_interactions}});
    manifest.seed = ff.seed;
    manifest.version = software_version();
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    j["manifest"] = manifest_to_json(manifest);
    write_text(sf.json_path, j.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

std::vector<std::string> expand_columns(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& token : tokens) {
    for (const auto& item : split(token, ',')) {
      const auto dots = item.find("..");
      if (dots == std::string::npos) {
        out.push_back(item);
        continue;
      }
      std::string prefix, right_prefix;
      long long lo = 0, hi = 0;
      const std::string right = item.substr(dots + 2);
      if (!split_numbered(item.substr(0, dots), prefix, lo)) throw ValueError("bad column range '" + item + "'");
      if (!parse_int(right, hi)) {
        if (!split_numbered(right, right_prefix, hi) || right_prefix != prefix) {
          throw ValueError("bad column range '" + item + "'");
        }
      }
      if (hi < lo) throw ValueError("empty column range '" + item + "'");
      for (long long k = lo; k <= hi; ++k) out.push_back(prefix + std::to_string(k));
    }
  }
  return out;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interaction-instrument GEL estimation for censored accelerated failure time models", "igsaft"};
  app.require_subcommand(1);
  app.set_version_flag("--version", software_version());

  DataFlags df;
  FitFlags ff;
  SimFlags sf;
  std::string out_path, dump_moments, config_path;
  bool with_aft = false;

  auto* fit = app.add_subcommand("fit", "Estimate beta and write the JSON report");
  add_data_flags(fit, df);
  add_fit_flags(fit, ff, false);
  fit->add_option("--out", out_path, "JSON report path (stdout when empty)");
  fit->add_option("--dump-moments", dump_moments, "Write the affine moment rows to CSV");
  fit->add_flag("--aft", with_aft, "Add the normal-error AFT benchmark to the report");
  fit->add_option("--config", config_path, "JSON file of flag defaults");

  auto* diag = app.add_subcommand("diagnose", "Relevance and overidentification tests");
  add_data_flags(diag, df);
  add_fit_flags(diag, ff, false);
  diag->add_option("--out", out_path, "JSON report path (stdout when empty)");
  diag->add_option("--config", config_path, "JSON file of flag defaults");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study on the Gaussian design");
  add_fit_flags(sim, ff, true);
  sim->add_option("--case", sf.case_id, "Design case 1-4")->check(CLI::Range(1, 4))->capture_default_str();
  sim->add_option("--n", sf.n, "Sample size")->capture_default_str();
  sim->add_option("--p", sf.p, "Number of candidate instruments")->capture_default_str();
  sim->add_option("--cr", sf.cr, "Target censoring rate")->capture_default_str();
  sim->add_option("--censor-width", sf.censor_width, "Censoring interval width in units of SD(T)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim->add_option("--reps", sf.reps, "Replications")->capture_default_str();
  sim->add_option("--c-weak", sf.c_weak, "Interaction strength constant")->capture_default_str();
  sim->add_option("--beta0", sf.beta0, "True exposure effect")->capture_default_str();
  sim->add_option("--estimators", sf.estimators, "Comma list from el, et, cue, aft, truth (default: --gel plus aft)");
  sim->add_option("--nonzero-frac", sf.nonzero_frac, "Fraction of nonzero exposure interactions");
  sim->add_flag("--fix-support", sf.fix_support, "Draw the interaction support once from the seed");
  sim->add_flag("--null-interactions", sf.null_interactions, "Set every exposure interaction to zero");
  sim->add_option("--out", sf.out, "CSV table path (stdout when empty)");
  sim->add_option("--json", sf.json_path, "JSON sidecar path");
  sim->add_option("--export-data", sf.export_data, "Write the first replication's dataset to CSV (log time)");
  sim->add_flag("--export-only", sf.export_only, "Stop after --export-data");
  sim->add_option("--config", config_path, "JSON file of flag defaults");

  try {
    std::vector<std::string> args = apply_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitInput;
    }
    sf.gel = ff.gel;
    ff.gel = split(ff.gel, ',').front();
    if (*fit) return cmd_fit(raw_args, df, ff, out_path, dump_moments, with_aft, false, out);
    if (*diag) return cmd_fit(raw_args, df, ff, out_path, "", false, true, out);
    return cmd_simulate(raw_args, sf, ff, out);
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ValueError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "estimation error: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitEstimation;
  }
}

}  // namespace igsaft
