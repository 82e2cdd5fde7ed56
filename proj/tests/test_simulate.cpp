#include "igsaft/simulate.hpp"

#include "fixtures.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace igsaft {
namespace {

SimConfig small_config(int case_id = 1) {
  SimConfig c;
  c.case_id = case_id;
  c.n = 400;
  c.p = 6;
  c.seed = 11;
  return c;
}

TEST(Simulate, GenerateIsDeterministicPerReplication) {
  const SimConfig cfg = small_config();
  const auto tau = resolve_censoring(cfg);
  const SimDraw a = generate(cfg, replication_seed(cfg.seed, 3), tau);
  const SimDraw b = generate(cfg, replication_seed(cfg.seed, 3), tau);
  const SimDraw c = generate(cfg, replication_seed(cfg.seed, 4), tau);
  EXPECT_EQ(a.data.y(), b.data.y());
  EXPECT_EQ(a.data.z(), b.data.z());
  EXPECT_NE(a.data.y(), c.data.y());
}

TEST(Simulate, ObservedTimeIsMinimumOfLatentTimes) {
  const SimConfig cfg = small_config();
  const SimDraw s = generate(cfg, 5, resolve_censoring(cfg));
  for (Index i = 0; i < cfg.n; ++i) {
    const double t = s.truth.latent_t(i);
    const double c = s.truth.censor_time(i);
    EXPECT_DOUBLE_EQ(s.data.y()(i), std::min(t, c));
    EXPECT_EQ(s.data.delta()(i), t <= c ? 1 : 0);
    EXPECT_GE(c, s.truth.tau1);
    EXPECT_LE(c, s.truth.tau2);
  }
}

TEST(Simulate, CaseCoefficientPatterns) {
  SimConfig cfg = small_config(1);
  cfg.p = 10;
  const SimDraw c1 = generate(cfg, 7, {INFINITY, INFINITY});
  EXPECT_EQ((c1.truth.phi.array() == 0.2).count(), 3);
  EXPECT_EQ((c1.truth.phi.array() == 0.0).count(), 7);
  EXPECT_TRUE((c1.truth.theta.array() == 1.0).all());
  const double expected_phi_d = 4.0 * std::pow(static_cast<double>(cfg.n), -0.25);
  EXPECT_EQ(c1.truth.phi_d.size(), 45);
  for (Index t = 0; t < 45; ++t) EXPECT_DOUBLE_EQ(c1.truth.phi_d(t), expected_phi_d);

  cfg.case_id = 2;
  const SimDraw c2 = generate(cfg, 7, {INFINITY, INFINITY});
  EXPECT_EQ((c2.truth.phi.array() == 0.2).count(), 2);
  EXPECT_EQ((c2.truth.phi.array() == 0.4).count(), 2);
  EXPECT_EQ((c2.truth.phi.array() == 0.6).count(), 2);

  cfg.case_id = 4;
  const SimDraw c4 = generate(cfg, 7, {INFINITY, INFINITY});
  int tied = 0;
  for (int j = 0; j < cfg.p; ++j) tied += c4.truth.phi(j) == 0.5 * c4.truth.theta(j) ? 1 : 0;
  EXPECT_EQ(tied, 7);

  cfg.case_id = 1;
  cfg.null_interactions = true;
  EXPECT_TRUE(generate(cfg, 7, {INFINITY, INFINITY}).truth.phi_d.isZero());
}

TEST(Simulate, SparseInteractionSupport) {
  SimConfig cfg = small_config();
  cfg.p = 20;
  const SimDraw s = generate(cfg, 2, {INFINITY, INFINITY});
  EXPECT_EQ((s.truth.phi_d.array() != 0.0).count(), 76);  // 0.4 * 190
  cfg.fix_support = true;
  const SimDraw a = generate(cfg, 2, {INFINITY, INFINITY});
  const SimDraw b = generate(cfg, 9, {INFINITY, INFINITY});
  EXPECT_TRUE(((a.truth.phi_d.array() != 0.0) == (b.truth.phi_d.array() != 0.0)).all());
}

TEST(Simulate, CalibrationHitsTargetRate) {
  for (double cr : {0.2, 0.4}) {
    SimConfig cfg = small_config();
    cfg.n = 5000;
    cfg.target_cr = cr;
    const auto tau = calibrate_censoring(cfg);
    double rate = 0.0;
    for (int rep = 0; rep < 4; ++rep) rate += generate(cfg, replication_seed(cfg.seed, rep), tau).data.censoring_rate();
    EXPECT_NEAR(rate / 4.0, cr, 0.02) << "target " << cr;
  }
}

TEST(Simulate, CalibrationWidthScalesWithSetting) {
  SimConfig cfg = small_config();
  const auto wide = calibrate_censoring(cfg);
  cfg.censor_width_sd = 6.0;
  const auto narrow = calibrate_censoring(cfg);
  EXPECT_NEAR((wide.second - wide.first) / (narrow.second - narrow.first), 2.0, 1e-12);
  cfg.censor_width_sd = 0.0;
  EXPECT_THROW(cfg.check(), ValueError);
}

TEST(Simulate, ZeroTargetDisablesCensoring) {
  SimConfig cfg = small_config();
  cfg.target_cr = 0.0;
  const auto tau = resolve_censoring(cfg);
  EXPECT_TRUE(std::isinf(tau.first));
  EXPECT_EQ(generate(cfg, 1, tau).data.censoring_rate(), 0.0);
}

TEST(Simulate, ConfigValidation) {
  SimConfig cfg = small_config();
  cfg.case_id = 5;
  EXPECT_THROW(cfg.check(), ValueError);
  cfg = small_config();
  cfg.target_cr = 1.0;
  EXPECT_THROW(cfg.check(), ValueError);
  cfg = small_config();
  cfg.nonzero_frac = 0.0;
  EXPECT_THROW(cfg.check(), ValueError);
}

TEST(Aft, UncensoredFitIsOrdinaryLeastSquares) {
  const Dataset ds = testing::toy_dataset(500, 3, 4);
  const AftResult a = aft_benchmark(ds);
  ASSERT_TRUE(a.converged);
  MatrixXd x(ds.n(), 2);
  x.col(0).setOnes();
  x.col(1) = ds.d();
  const VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * ds.y());
  EXPECT_NEAR(a.intercept, ols(0), 1e-8);
  EXPECT_NEAR(a.beta, ols(1), 1e-8);
  const double sigma_ml = std::sqrt((ds.y() - x * ols).squaredNorm() / static_cast<double>(ds.n()));
  EXPECT_NEAR(a.sigma, sigma_ml, 1e-8);
  const double se_ml = sigma_ml * std::sqrt((x.transpose() * x).inverse()(1, 1));
  EXPECT_NEAR(a.se, se_ml, 1e-8);
}

TEST(Aft, RecoversNormalModelUnderCensoring) {
  Rng rng(21);
  const Index n = 20000;
  MatrixXd z = MatrixXd::Zero(n, 1);
  VectorXd d(n), y(n);
  VectorXi delta(n);
  for (Index i = 0; i < n; ++i) {
    d(i) = rng.normal();
    const double t = 0.5 + 1.5 * d(i) + 0.8 * rng.normal();
    const double c = rng.uniform(-1.0, 4.0);
    y(i) = std::min(t, c);
    delta(i) = t <= c ? 1 : 0;
  }
  const AftResult a = aft_benchmark(Dataset(std::move(z), std::move(d), std::move(y), std::move(delta)));
  ASSERT_TRUE(a.converged);
  EXPECT_NEAR(a.beta, 1.5, 4.0 * a.se);
  EXPECT_NEAR(a.intercept, 0.5, 0.05);
  EXPECT_NEAR(a.sigma, 0.8, 0.03);
}

TEST(Oracle, TruncatedMeanMatchesQuadrature) {
  const double mu = 0.7;
  const double sigma = 1.3;
  for (double u : {-3.0, -0.5, 0.7, 2.0, 5.0}) {
    auto dens = [&](double x) {
      const double r = (x - mu) / sigma;
      return std::exp(-0.5 * r * r) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    };
    using Q = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double upper = mu + 40.0 * sigma;
    const double mass = Q::integrate(dens, u, upper, 15, 1e-14);
    const double first = Q::integrate([&](double x) { return x * dens(x); }, u, upper, 15, 1e-14);
    EXPECT_NEAR(GaussianOracle::truncated_mean(u, mu, sigma), first / mass, 1e-8 * std::max(1.0, std::abs(u)));
  }
  EXPECT_EQ(GaussianOracle::truncated_mean(-INFINITY, mu, sigma), mu);
}

TEST(Oracle, RejectsBadTruncation) {
  Truth truth;
  OracleOptions opt;
  opt.trunc_eps = 0.0;
  EXPECT_THROW(GaussianOracle(truth, opt), ValueError);
}

McRecord record(const std::string& est, double beta, double se, bool covers, bool converged, double p_overid) {
  McRecord r;
  r.estimator = est;
  r.beta = beta;
  r.se = se;
  r.covers = covers;
  r.converged = converged;
  r.p_overid = p_overid;
  return r;
}

TEST(MonteCarlo, SummaryStatistics) {
  const std::vector<McRecord> recs{
      record("el", 1.1, 0.1, true, true, 0.5),  record("el", 0.9, 0.3, false, true, 0.01),
      record("el", 1.3, 0.2, true, true, NAN),  record("el", 9.0, 9.0, false, false, 0.01),
      record("aft", 0.5, 0.1, false, true, NAN),
  };
  const McSummary s = summarize(recs, {"el", "aft"}, 1.0, 0.05);
  ASSERT_EQ(s.rows.size(), 2U);
  const McRow& el = s.rows[0];
  EXPECT_EQ(el.used, 3);
  EXPECT_EQ(el.excluded, 1);
  EXPECT_DOUBLE_EQ(el.exclusion_rate, 0.25);
  EXPECT_NEAR(el.bias_pct, 10.0, 1e-12);
  EXPECT_NEAR(el.sd, 0.2, 1e-12);
  EXPECT_NEAR(el.mean_se, 0.2, 1e-12);
  EXPECT_NEAR(el.coverage, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(el.overid_rejection, 0.5, 1e-12);
  const McRow& aft = s.rows[1];
  EXPECT_NEAR(aft.bias_pct, -50.0, 1e-12);
  EXPECT_TRUE(std::isnan(aft.sd));
  EXPECT_TRUE(std::isnan(aft.overid_rejection));
}

TEST(MonteCarlo, SmallRunIsReproducible) {
  SimConfig sim = small_config();
  sim.n = 300;
  sim.p = 4;
  sim.reps = 2;
  FitConfig fit;
  fit.kernel.conditioning = KmConditioning::d_only;
  const McSummary a = run_monte_carlo(sim, fit, {"cue", "aft", "truth"});
  const McSummary b = run_monte_carlo(sim, fit, {"cue", "aft", "truth"}, 2);
  ASSERT_EQ(a.records.size(), 6U);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].beta, b.records[k].beta);
    EXPECT_EQ(a.records[k].se, b.records[k].se);
  }
  EXPECT_EQ(a.rows[2].bias_pct, 0.0);
  EXPECT_EQ(a.rows[2].coverage, 1.0);
  EXPECT_GT(a.mean_censoring_rate, 0.0);
  EXPECT_THROW(run_monte_carlo(sim, fit, {"gmm"}), ValueError);
}

}  // namespace
}  // namespace igsaft
