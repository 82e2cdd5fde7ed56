// Acceptance checks AC1-AC10. Each prints one PASS/FAIL line with the measured quantities.
// Scale flags allow reduced runs; the defaults are the full-size settings.

#include "igsaft/gel.hpp"
#include "igsaft/moments.hpp"
#include "igsaft/parallel.hpp"
#include "igsaft/pipeline.hpp"
#include "igsaft/rng.hpp"
#include "igsaft/simulate.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace igsaft {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scale {
  std::uint64_t seed = 20240601;
  int threads = 1;
  int ac1_reps = 100;
  int ac2_reps = 100;
  Index ac3_n = 5000;
  int ac3_reps = 100;
  double ac3_c = 8.0;
  Index ac4_n = 100000;
  Index ac5_n = 100000;
  Index ac6_n = 10000;
  int ac6_reps = 100;
  std::string ac6_conditioning = "d_only";
  Index ac6_full_n = 2000;
  int ac6_full_reps = 100;
  Index ac8_n = 2000;
  int ac8_reps = 200;
  int ac9_reps = 100;
  int ac9_null_reps = 1000;
  Index ac10_n = 2000;
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

KmConditioning parse_conditioning(const std::string& s) {
  if (s == "full") return KmConditioning::full;
  if (s == "marginal") return KmConditioning::marginal;
  return KmConditioning::d_only;
}

std::array<NuisanceFit, 2> cross_fit(const Dataset& ds, const FoldAssignment& folds, const MomentSpec& spec,
                                     const KernelConfig& kc) {
  return {fit_nuisance(ds, folds.members(0), spec, kc), fit_nuisance(ds, folds.members(1), spec, kc)};
}

// AC1: with no censoring the AIPCW moment equals the uncensored moment.
Outcome ac1(const Scale& s) {
  SimConfig sim;
  sim.n = 500;
  sim.p = 5;
  sim.target_cr = 0.0;
  sim.seed = s.seed + 1;
  const MomentSpec spec = MomentSpec::full(sim.p, 2);
  double worst = 0.0;
  for (int rep = 0; rep < s.ac1_reps; ++rep) {
    const SimDraw draw = generate(sim, replication_seed(sim.seed, rep), {kInf, kInf});
    const auto folds = FoldAssignment::random_halving(sim.n, replication_seed(sim.seed, rep) + 7);
    const auto fits = cross_fit(draw.data, folds, spec, KernelConfig{});
    const MomentMatrix psi = build_moment_matrix(draw.data, folds, {&fits[0], &fits[1]}, spec);
    MomentBuildOptions plain;
    plain.censoring_adjustment = false;
    const MomentMatrix g = build_moment_matrix(draw.data, folds, {&fits[0], &fits[1]}, spec, plain);
    worst = std::max({worst, (psi.a - g.a).cwiseAbs().maxCoeff(), (psi.b - g.b).cwiseAbs().maxCoeff()});
  }
  return {worst <= 1e-12, "max|psi-g|=" + num(worst) + " over " + std::to_string(s.ac1_reps) + " datasets"};
}

// AC2: inner CUE solution against its closed form.
Outcome ac2(const Scale& s) {
  Rng rng(s.seed + 2);
  double worst_lambda = 0.0;
  double worst_q = 0.0;
  for (int rep = 0; rep < s.ac2_reps; ++rep) {
    const Index n = 200;
    const Index m = 1 + rng.below(10);
    MomentMatrix M{MatrixXd(n, m), MatrixXd(n, m), MomentSpec::full(11, 2), VectorXi::Zero(n)};
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < m; ++j) {
        M.a(i, j) = rng.normal(0.3 * static_cast<double>(j % 3), 1.0);
        M.b(i, j) = rng.normal(-0.5, 1.0);
      }
    }
    const double beta = rng.normal();
    const InnerResult<double> r = inner_lambda<double>(M, beta, RhoFamily::cue);
    const MatrixXd psi = M.at(beta);
    const VectorXd mean = psi.colwise().mean().transpose();
    const MatrixXd omega = psi.transpose() * psi / static_cast<double>(n);
    const VectorXd lambda = -omega.ldlt().solve(mean);
    const double q = 0.5 * mean.dot(omega.ldlt().solve(mean));
    worst_lambda = std::max(worst_lambda, (r.lambda - lambda).cwiseAbs().maxCoeff());
    worst_q = std::max(worst_q, std::abs(r.q - q));
  }
  const bool pass = worst_lambda <= 1e-8 && worst_q <= 1e-8;
  return {pass, "max|lambda-closed|=" + num(worst_lambda) + " max|Q-closed|=" + num(worst_q)};
}

// AC3: single-moment ratio and many-moment coverage on uncensored strong-interaction data.
Outcome ac3(const Scale& s) {
  SimConfig sim;
  sim.n = s.ac3_n;
  sim.p = 10;
  sim.target_cr = 0.0;
  sim.c_weak = s.ac3_c;
  sim.seed = s.seed + 3;

  // Single moment: two instruments give one pairwise interaction.
  SimConfig one = sim;
  one.p = 2;
  const SimDraw d1 = generate(one, replication_seed(one.seed, 0), {kInf, kInf});
  FitConfig f1;
  f1.screen = false;
  const PreparedMoments prep1 = prepare_moments(d1.data, f1);
  const double ratio = -prep1.moments.a.col(0).mean() / prep1.moments.b.col(0).mean();
  const FitReport r1 = estimate(prep1, f1);
  const double ratio_gap = std::abs(r1.gel.beta_hat - ratio);

  FitConfig fit;
  fit.screen = false;
  fit.censoring_adjustment = false;  // identical to the AIPCW moment without censoring (AC1)
  fit.threads = s.threads;
  int within = 0;
  int used = 0;
  for (int rep = 0; rep < s.ac3_reps; ++rep) {
    const std::uint64_t key = replication_seed(sim.seed, rep);
    const SimDraw draw = generate(sim, key, {kInf, kInf});
    fit.seed = key;
    const FitReport r = fit_igsaft(draw.data, fit);
    if (!r.gel.converged) continue;
    ++used;
    within += std::abs(r.gel.beta_hat - sim.beta0) <= 2.0 * r.gel.se ? 1 : 0;
  }
  const double needed = 0.9 * s.ac3_reps;
  const bool pass = ratio_gap <= 1e-3 && within >= needed;
  return {pass, "|beta-ratio|=" + num(ratio_gap) + " within2SE=" + std::to_string(within) + "/" +
                    std::to_string(s.ac3_reps) + " (converged " + std::to_string(used) + ", m=45, n=" +
                    std::to_string(sim.n) + ")"};
}

SimDraw oracle_draw(const Scale& s, Index n, double cr, std::uint64_t offset) {
  SimConfig sim;
  sim.n = n;
  sim.p = 10;
  sim.target_cr = cr;
  sim.seed = s.seed + offset;
  return generate(sim, replication_seed(sim.seed, 0), resolve_censoring(sim));
}

// AC4: second-order sensitivity of the mean moment along the nuisance paths.
Outcome ac4(const Scale& s) {
  const SimDraw draw = oracle_draw(s, s.ac4_n, 0.2, 4);
  const MomentSpec spec = MomentSpec::full(10, 2);
  const std::vector<double> grid{0.0, 0.025, 0.05, 0.1, 0.2};
  const std::vector<double> tpos(grid.begin() + 1, grid.end());
  std::string detail;
  bool pass = true;
  for (auto dir : {OracleDirection::xi, OracleDirection::lambda}) {
    OracleOptions opt;
    opt.direction = dir;
    const GaussianOracle oracle(draw.truth, opt);
    const ProbeCurve curve = orthogonality_probe(draw.data, oracle, spec, grid, s.threads);
    const std::vector<double> v(curve.centered_norm.begin() + 1, curve.centered_norm.end());
    const double slope = loglog_slope(tpos, v);
    pass = pass && slope >= 1.7;
    detail += std::string(dir == OracleDirection::xi ? "xi" : "lambda") + "_slope=" + num(slope) + " ";
  }
  return {pass, detail + "(n=" + std::to_string(s.ac4_n) + ")"};
}

struct MeanTest {
  double hotelling = 0.0;
  double max_z = 0.0;
};

MeanTest mean_psi_test(const Dataset& ds, const GaussianOracle& oracle, const MomentSpec& spec, double beta0) {
  const Index n = ds.n();
  MatrixXd psi(n, spec.m());
  for (Index i = 0; i < n; ++i) psi.row(i) = oracle.psi(ds.observation(i), spec, 0.0).at(beta0).transpose();
  const VectorXd mean = psi.colwise().mean().transpose();
  const MatrixXd centered = psi.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  MeanTest out;
  out.hotelling = static_cast<double>(n) * mean.dot(cov.ldlt().solve(mean));
  out.max_z = (mean.array().abs() / (cov.diagonal().array() / static_cast<double>(n)).sqrt()).maxCoeff();
  return out;
}

// AC5: mean moment stays at zero when exactly one of (xi, G) is wrong.
Outcome ac5(const Scale& s) {
  const SimDraw draw = oracle_draw(s, s.ac5_n, 0.4, 5);
  const MomentSpec spec = MomentSpec::full(10, 2);
  // Joint analogue of |z| <= 3: the chi-squared quantile at the two-sided 3-sigma level.
  const double bound = chi2_quantile(1.0 - 2.0 * (1.0 - normal_cdf(3.0)), static_cast<double>(spec.m()));
  std::string detail;
  bool pass = true;
  const std::pair<XiModel, CensoringModel> settings[3] = {{XiModel::truth, CensoringModel::misspecified},
                                                          {XiModel::misspecified, CensoringModel::truth},
                                                          {XiModel::misspecified, CensoringModel::misspecified}};
  const char* names[3] = {"wrongG", "wrongXi", "bothWrong"};
  for (int k = 0; k < 3; ++k) {
    OracleOptions opt;
    opt.xi = settings[k].first;
    opt.censoring = settings[k].second;
    const MeanTest t = mean_psi_test(draw.data, GaussianOracle(draw.truth, opt), spec, draw.truth.beta0);
    if (k < 2) pass = pass && t.hotelling <= bound;
    detail += std::string(names[k]) + ":T2=" + num(t.hotelling) + ",max|z|=" + num(t.max_z, 3) + " ";
  }
  return {pass, detail + "bound=" + num(bound) + " (bothWrong is a power check, not scored)"};
}

const McRow& row_of(const McSummary& s, const std::string& name) {
  for (const auto& r : s.rows) {
    if (r.estimator == name) return r;
  }
  throw DomainError("missing estimator " + name);
}

std::string mc_line(const McRow& r) {
  return "bias%=" + num(r.bias_pct) + " SD=" + num(r.sd) + " SE=" + num(r.mean_se) + " CP=" + num(r.coverage) +
         " used=" + std::to_string(r.used);
}

// AC6 and AC7 share the Case-1 Monte Carlo runs.
std::pair<Outcome, Outcome> ac6_ac7(const Scale& s) {
  SimConfig sim;
  sim.n = s.ac6_n;
  sim.p = 10;
  sim.target_cr = 0.2;
  sim.reps = s.ac6_reps;
  sim.seed = s.seed + 6;
  FitConfig fit;
  fit.kernel.conditioning = parse_conditioning(s.ac6_conditioning);
  const McSummary main = run_monte_carlo(sim, fit, {"el", "aft"}, s.threads);
  const McRow& el = row_of(main, "el");
  const double ratio = el.sd / el.mean_se;
  bool pass = std::abs(el.bias_pct) < 2.0 && el.coverage >= 0.87 && el.coverage <= 0.99 && ratio >= 0.8 &&
              ratio <= 1.2;
  std::string detail = s.ac6_conditioning + " n=" + std::to_string(sim.n) + ": " + mc_line(el) + " SD/SE=" + num(ratio);

  if (fit.kernel.conditioning != KmConditioning::full && s.ac6_full_reps > 0) {
    SimConfig small = sim;
    small.n = s.ac6_full_n;
    small.reps = s.ac6_full_reps;
    FitConfig full = fit;
    full.kernel.conditioning = KmConditioning::full;
    const McRow f = row_of(run_monte_carlo(small, full, {"el"}, s.threads), "el");
    pass = pass && std::abs(f.bias_pct) < 5.0 && f.coverage >= 0.85 && f.coverage <= 0.99;
    detail += " | full n=" + std::to_string(small.n) + ": " + mc_line(f);
  }
  const McRow& aft = row_of(main, "aft");
  const bool aft_pass = aft.bias_pct <= -15.0 && aft.coverage <= 0.05;
  return {{pass, detail}, {aft_pass, "aft " + mc_line(aft)}};
}

// AC8: size of the overidentification test.
Outcome ac8(const Scale& s) {
  SimConfig sim;
  sim.n = s.ac8_n;
  sim.p = 10;
  sim.target_cr = 0.2;
  sim.reps = s.ac8_reps;
  sim.seed = s.seed + 8;
  const McSummary mc = run_monte_carlo(sim, FitConfig{}, {"el"}, s.threads);
  const McRow& el = row_of(mc, "el");
  const bool pass = el.overid_rejection >= 0.01 && el.overid_rejection <= 0.13;
  return {pass, "rejection@0.05=" + num(el.overid_rejection) + " over " + std::to_string(el.used) + " fits; " +
                    mc_line(el)};
}

// AC9: relevance F test power under Case 1 and size under no exposure interactions.
Outcome ac9(const Scale& s) {
  SimConfig sim;
  sim.n = 2000;
  sim.p = 10;
  sim.target_cr = 0.2;
  sim.seed = s.seed + 9;
  const auto tau = resolve_censoring(sim);
  FitConfig fit;
  int small_p = 0;
  double worst_p = 0.0;
  for (int rep = 0; rep < s.ac9_reps; ++rep) {
    const SimDraw draw = generate(sim, replication_seed(sim.seed, rep), tau);
    ScreenOptions so;
    const ScreenResult sr = screen_interactions(draw.data, MomentSpec::full(sim.p, 2), so);
    const double p = relevance_f_test(draw.data, sr.selected).p_value;
    worst_p = std::max(worst_p, p);
    small_p += p < 1e-3 ? 1 : 0;
  }
  // Size: the full candidate set, since selection on the null would invalidate the reference law.
  SimConfig null_sim = sim;
  null_sim.null_interactions = true;
  const auto null_tau = resolve_censoring(null_sim);
  int rejected = 0;
  for (int rep = 0; rep < s.ac9_null_reps; ++rep) {
    const SimDraw draw = generate(null_sim, replication_seed(null_sim.seed + 1, rep), null_tau);
    rejected += relevance_f_test(draw.data, MomentSpec::full(sim.p, 2)).p_value < 0.05 ? 1 : 0;
  }
  const double size = static_cast<double>(rejected) / s.ac9_null_reps;
  const bool pass = small_p == s.ac9_reps && size >= 0.02 && size <= 0.09;
  return {pass, "pF<0.001 in " + std::to_string(small_p) + "/" + std::to_string(s.ac9_reps) + " (max p " +
                    num(worst_p) + "), null size=" + num(size) + " over " + std::to_string(s.ac9_null_reps)};
}

// AC10: EL, ET and CUE agree on one dataset.
Outcome ac10(const Scale& s) {
  SimConfig sim;
  sim.n = s.ac10_n;
  sim.p = 10;
  sim.target_cr = 0.2;
  sim.seed = s.seed + 10;
  const SimDraw draw = generate(sim, replication_seed(sim.seed, 0), resolve_censoring(sim));
  FitConfig fit;
  const PreparedMoments prepared = prepare_moments(draw.data, fit);
  std::vector<GelFit> fits;
  for (auto f : {RhoFamily::el, RhoFamily::et, RhoFamily::cue}) {
    fit.family = f;
    fits.push_back(estimate(prepared, fit).gel);
  }
  bool pass = true;
  std::string detail;
  for (const auto& g : fits) {
    pass = pass && g.converged;
    detail += to_string(g.family) + "=" + num(g.beta_hat) + "(" + num(g.se, 3) + ") ";
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < fits.size(); ++a) {
    for (std::size_t b = a + 1; b < fits.size(); ++b) {
      const double r = std::abs(fits[a].beta_hat - fits[b].beta_hat) / (2.0 * (fits[a].se + fits[b].se));
      worst = std::max(worst, r);
    }
  }
  pass = pass && worst < 1.0;
  return {pass, detail + "max|diff|/(2 sum SE)=" + num(worst)};
}

void report(const std::string& id, const Outcome& o, double seconds) {
  std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  [" << num(seconds, 3) << " s]"
            << std::endl;
}

}  // namespace
}  // namespace igsaft

int main(int argc, char** argv) {
  using namespace igsaft;
  Scale s;
  std::vector<int> only;
  CLI::App app{"Acceptance checks AC1-AC10"};
  app.add_option("--only", only, "Run only these criteria (numbers 1-10)")->delimiter(',');
  app.add_option("--seed", s.seed)->capture_default_str();
  app.add_option("--threads", s.threads)->capture_default_str();
  app.add_option("--ac1-reps", s.ac1_reps)->capture_default_str();
  app.add_option("--ac2-reps", s.ac2_reps)->capture_default_str();
  app.add_option("--ac3-n", s.ac3_n)->capture_default_str();
  app.add_option("--ac3-reps", s.ac3_reps)->capture_default_str();
  app.add_option("--ac3-c", s.ac3_c, "Interaction strength constant of the strong design")->capture_default_str();
  app.add_option("--ac4-n", s.ac4_n)->capture_default_str();
  app.add_option("--ac5-n", s.ac5_n)->capture_default_str();
  app.add_option("--ac6-n", s.ac6_n)->capture_default_str();
  app.add_option("--ac6-reps", s.ac6_reps)->capture_default_str();
  app.add_option("--ac6-conditioning", s.ac6_conditioning)
      ->check(CLI::IsMember({"full", "d_only", "marginal"}))
      ->capture_default_str();
  app.add_option("--ac6-full-n", s.ac6_full_n)->capture_default_str();
  app.add_option("--ac6-full-reps", s.ac6_full_reps, "0 skips the full-conditioning companion run")
      ->capture_default_str();
  app.add_option("--ac8-n", s.ac8_n)->capture_default_str();
  app.add_option("--ac8-reps", s.ac8_reps)->capture_default_str();
  app.add_option("--ac9-reps", s.ac9_reps)->capture_default_str();
  app.add_option("--ac9-null-reps", s.ac9_null_reps)->capture_default_str();
  app.add_option("--ac10-n", s.ac10_n)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  s.threads = resolve_threads(s.threads);

  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };
  int failures = 0;
  auto timed = [&](const std::string& id, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    report(id, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  };

  if (wanted(1)) timed("AC1", [&] { return ac1(s); });
  if (wanted(2)) timed("AC2", [&] { return ac2(s); });
  if (wanted(3)) timed("AC3", [&] { return ac3(s); });
  if (wanted(4)) timed("AC4", [&] { return ac4(s); });
  if (wanted(5)) timed("AC5", [&] { return ac5(s); });
  if (wanted(6) || wanted(7)) {
    const auto start = std::chrono::steady_clock::now();
    std::pair<Outcome, Outcome> both;
    try {
      both = ac6_ac7(s);
    } catch (const std::exception& e) {
      both = {{false, std::string("error: ") + e.what()}, {false, std::string("error: ") + e.what()}};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (wanted(6)) {
      failures += both.first.pass ? 0 : 1;
      report("AC6", both.first, secs);
    }
    if (wanted(7)) {
      failures += both.second.pass ? 0 : 1;
      report("AC7", both.second, secs);
    }
  }
  if (wanted(8)) timed("AC8", [&] { return ac8(s); });
  if (wanted(9)) timed("AC9", [&] { return ac9(s); });
  if (wanted(10)) timed("AC10", [&] { return ac10(s); });
  return failures == 0 ? 0 : 1;
}
