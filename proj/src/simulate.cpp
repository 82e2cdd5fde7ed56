#include "igsaft/simulate.hpp"

#include "igsaft/interactions.hpp"
#include "igsaft/parallel.hpp"
#include "igsaft/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace igsaft {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kErrorVar = 0.4;
constexpr double kErrorCov = 0.2;

constexpr std::uint64_t kCoefStream = 1;
constexpr std::uint64_t kDataStream = 2;
constexpr std::uint64_t kCensorStream = 3;
constexpr std::uint64_t kSupportStream = 4;
constexpr std::uint64_t kFoldSeedStream = 5;
constexpr std::uint64_t kPilotStream = 0x9170;
constexpr std::uint64_t kFixedSupportStream = 0x5e7;

struct Coefficients {
  VectorXd theta;
  VectorXd phi;
  VectorXd phi_d;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      c_ += (sum_ - t) + x;
    } else {
      c_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

Coefficients draw_coefficients(const SimConfig& cfg, Rng& rng, Rng& support_rng) {
  const int p = cfg.p;
  Coefficients c;
  c.theta = VectorXd::Ones(p);
  c.phi = VectorXd::Zero(p);
  auto count = [p](double frac) { return static_cast<int>(std::lround(frac * p)); };
  switch (cfg.case_id) {
    case 1:
      for (int j : rng.choose(p, count(0.3))) c.phi(j) = 0.2;
      break;
    case 2: {
      const auto perm = rng.permutation(p);
      const int invalid = count(0.6);
      const double levels[3] = {0.2, 0.4, 0.6};
      for (int r = 0; r < invalid; ++r) c.phi(perm[static_cast<std::size_t>(r)]) = levels[(3 * r) / invalid];
      break;
    }
    case 3:
      for (int j = 0; j < p; ++j) c.theta(j) = rng.normal(1.0, 1.0);
      for (int j = 0; j < p; ++j) c.phi(j) = rng.normal(0.2, std::sqrt(0.2));
      break;
    case 4:
      for (int j = 0; j < p; ++j) c.theta(j) = rng.normal(1.0, 1.0);
      for (int j : rng.choose(p, count(0.7))) c.phi(j) = 0.5 * c.theta(j);
      break;
    default:
      throw ValueError("unknown simulation case " + std::to_string(cfg.case_id));
  }
  const auto pairs = static_cast<int>(binomial(p, 2));
  c.phi_d = VectorXd::Zero(pairs);
  if (!cfg.null_interactions) {
    const double value = cfg.c_weak * std::pow(static_cast<double>(cfg.n), -0.25);
    const double frac = cfg.resolved_nonzero_frac();
    if (frac >= 1.0) {
      c.phi_d.setConstant(value);
    } else {
      const int k = static_cast<int>(std::lround(frac * pairs));
      for (int j : support_rng.choose(pairs, k)) c.phi_d(j) = value;
    }
  }
  return c;
}

/// Pairwise products z_j z_k (j < k) in canonical order.
double pair_term(const double* z, int p, const VectorXd& phi_d) {
  double s = 0.0;
  Index t = 0;
  for (int j = 0; j < p; ++j) {
    for (int k = j + 1; k < p; ++k, ++t) {
      if (phi_d(t) != 0.0) s += phi_d(t) * z[j] * z[k];
    }
  }
  return s;
}

/// Draws instruments, exposure and latent log-time for `count` units.
void draw_units(const SimConfig& cfg, const Coefficients& c, Rng& rng, Index count, MatrixXd& z, VectorXd& d,
                VectorXd& t) {
  const int p = cfg.p;
  z.resize(count, p);
  d.resize(count);
  t.resize(count);
  const double sd_nu = std::sqrt(kErrorVar);
  const double slope = kErrorCov / kErrorVar;
  const double sd_eta = std::sqrt(kErrorVar - kErrorCov * kErrorCov / kErrorVar);
  std::vector<double> row(static_cast<std::size_t>(p));
  for (Index i = 0; i < count; ++i) {
    for (int j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = rng.normal();
    const double nu = sd_nu * rng.normal();
    const double eps = slope * nu + sd_eta * rng.normal();
    double lin_d = 0.0;
    double lin_t = 0.0;
    for (int j = 0; j < p; ++j) {
      z(i, j) = row[static_cast<std::size_t>(j)];
      lin_d += c.theta(j) * row[static_cast<std::size_t>(j)];
      lin_t += c.phi(j) * row[static_cast<std::size_t>(j)];
    }
    d(i) = lin_d + pair_term(row.data(), p, c.phi_d) + nu;
    t(i) = cfg.beta0 * d(i) + lin_t + eps;
  }
}

double sample_sd(const VectorXd& x) {
  const double mean = x.mean();
  return std::sqrt((x.array() - mean).square().sum() / static_cast<double>(x.size() - 1));
}

}  // namespace

void SimConfig::check() const {
  if (case_id < 1 || case_id > 4) throw ValueError("case must be 1, 2, 3 or 4");
  if (n < 100) throw ValueError("simulation needs n >= 100");
  if (p < 2) throw ValueError("simulation needs p >= 2");
  if (reps < 1) throw ValueError("simulation needs reps >= 1");
  if (!(target_cr >= 0.0 && target_cr < 1.0)) throw ValueError("target censoring rate must lie in [0, 1)");
  if (!(censor_width_sd > 0.0)) throw ValueError("censoring interval width must be positive");
  if (nonzero_frac && !(*nonzero_frac > 0.0 && *nonzero_frac <= 1.0)) {
    throw ValueError("nonzero_frac must lie in (0, 1]");
  }
}

double SimConfig::resolved_nonzero_frac() const {
  if (nonzero_frac) return *nonzero_frac;
  return p >= 20 ? 0.4 : 1.0;
}

std::uint64_t replication_seed(std::uint64_t seed, int rep) {
  return substream_seed(seed, static_cast<std::uint64_t>(rep));
}

SimDraw generate(const SimConfig& config, std::uint64_t rep_seed, std::pair<double, double> tau) {
  config.check();
  Rng coef_rng(substream_seed(rep_seed, kCoefStream));
  Rng data_rng(substream_seed(rep_seed, kDataStream));
  Rng censor_rng(substream_seed(rep_seed, kCensorStream));
  Rng support_rng(config.fix_support ? substream_seed(config.seed, kFixedSupportStream)
                                     : substream_seed(rep_seed, kSupportStream));
  const Coefficients c = draw_coefficients(config, coef_rng, support_rng);

  MatrixXd z;
  VectorXd d, t;
  draw_units(config, c, data_rng, config.n, z, d, t);

  const Index n = config.n;
  VectorXd y(n), cens(n);
  VectorXi delta(n);
  const bool censored = std::isfinite(tau.first);
  for (Index i = 0; i < n; ++i) {
    cens(i) = censored ? censor_rng.uniform(tau.first, tau.second) : kInf;
    delta(i) = t(i) <= cens(i) ? 1 : 0;
    y(i) = std::min(t(i), cens(i));
  }
  Truth truth{config.beta0, c.theta, c.phi, c.phi_d, tau.first, tau.second, t, cens};
  return SimDraw{Dataset(std::move(z), std::move(d), std::move(y), std::move(delta)), std::move(truth)};
}

std::pair<double, double> calibrate_censoring(const SimConfig& config) {
  config.check();
  if (!(config.target_cr > 0.0 && config.target_cr < 1.0)) {
    throw DomainError("calibration needs a target censoring rate in (0, 1)");
  }
  constexpr Index blocks = 100;
  constexpr Index block_size = 1000;
  VectorXd pilot(blocks * block_size);
  for (Index b = 0; b < blocks; ++b) {
    const std::uint64_t key = substream_seed(substream_seed(config.seed, kPilotStream), static_cast<std::uint64_t>(b));
    Rng coef_rng(substream_seed(key, kCoefStream));
    Rng data_rng(substream_seed(key, kDataStream));
    Rng support_rng(config.fix_support ? substream_seed(config.seed, kFixedSupportStream)
                                       : substream_seed(key, kSupportStream));
    const Coefficients c = draw_coefficients(config, coef_rng, support_rng);
    MatrixXd z;
    VectorXd d, t;
    draw_units(config, c, data_rng, block_size, z, d, t);
    pilot.segment(b * block_size, block_size) = t;
  }
  const double width = config.censor_width_sd * sample_sd(pilot);
  // Expected censoring rate given the pilot times: P(C < T) for C uniform on [tau1, tau1 + width].
  auto rate = [&](double tau1) { return ((pilot.array() - tau1) / width).max(0.0).min(1.0).mean(); };
  double lo = pilot.minCoeff() - width;
  double hi = pilot.maxCoeff();
  if (!(rate(lo) >= config.target_cr && rate(hi) <= config.target_cr)) {
    throw CalibrationError("censoring calibration does not bracket the target rate");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate(mid) > config.target_cr) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double tau1 = 0.5 * (lo + hi);
  if (std::abs(rate(tau1) - config.target_cr) > 0.005) {
    throw CalibrationError("censoring calibration missed the target rate");
  }
  return {tau1, tau1 + width};
}

std::pair<double, double> resolve_censoring(const SimConfig& config) {
  if (config.tau) return *config.tau;
  if (config.target_cr == 0.0) return {kInf, kInf};
  return calibrate_censoring(config);
}

// ---------------------------------------------------------------------------
// Normal-error AFT benchmark

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log of the standard normal upper tail.
double log_upper_tail(double r) {
  if (r < 30.0) return std::log(0.5 * std::erfc(r / std::numbers::sqrt2));
  const double r2 = r * r;
  return -0.5 * r2 - std::log(r) - kLogSqrt2Pi + std::log1p(-1.0 / r2 + 3.0 / (r2 * r2));
}

/// Inverse Mills ratio phi(r) / (1 - Phi(r)).
double inverse_mills(double r) {
  if (r < 30.0) {
    return std::exp(-0.5 * r * r - kLogSqrt2Pi) / (0.5 * std::erfc(r / std::numbers::sqrt2));
  }
  const double r2 = r * r;
  return r + 1.0 / r - 2.0 / (r2 * r) + 10.0 / (r2 * r2 * r);
}

struct AftState {
  double loglik = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();
  Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
};

AftState aft_evaluate(const Dataset& data, const Eigen::Vector3d& par, bool derivatives) {
  AftState s;
  const double sigma = std::exp(par(2));
  CompensatedSum ll;
  for (Index i = 0; i < data.n(); ++i) {
    const double x1 = data.d()(i);
    const double r = (data.y()(i) - par(0) - par(1) * x1) / sigma;
    const Eigen::Vector2d x(1.0, x1);
    if (data.delta()(i) == 1) {
      ll.add(-par(2) - 0.5 * r * r - kLogSqrt2Pi);
      if (!derivatives) continue;
      s.grad.head<2>() += r / sigma * x;
      s.grad(2) += r * r - 1.0;
      s.hess.topLeftCorner<2, 2>() -= x * x.transpose() / (sigma * sigma);
      s.hess.block<2, 1>(0, 2) -= 2.0 * r / sigma * x;
      s.hess(2, 2) -= 2.0 * r * r;
    } else {
      ll.add(log_upper_tail(r));
      if (!derivatives) continue;
      const double lam = inverse_mills(r);
      const double dlam = lam * (lam - r);
      s.grad.head<2>() += lam / sigma * x;
      s.grad(2) += lam * r;
      s.hess.topLeftCorner<2, 2>() -= dlam * x * x.transpose() / (sigma * sigma);
      s.hess.block<2, 1>(0, 2) -= (r * dlam + lam) / sigma * x;
      s.hess(2, 2) -= r * (r * dlam + lam);
    }
  }
  s.hess.block<1, 2>(2, 0) = s.hess.block<2, 1>(0, 2).transpose();
  s.loglik = ll.value();
  return s;
}

}  // namespace

AftResult aft_benchmark(const Dataset& dataset) {
  AftResult out;
  const Index n = dataset.n();
  MatrixXd x(n, 2);
  x.col(0).setOnes();
  x.col(1) = dataset.d();
  const VectorXd ols = x.colPivHouseholderQr().solve(dataset.y());
  const double rss = (dataset.y() - x * ols).squaredNorm();
  Eigen::Vector3d par(ols(0), ols(1), 0.5 * std::log(std::max(rss / static_cast<double>(n), 1e-12)));

  AftState state = aft_evaluate(dataset, par, true);
  bool converged = false;
  int it = 0;
  for (; it < 200; ++it) {
    if (state.grad.cwiseAbs().maxCoeff() < 1e-10 * std::max<double>(1.0, static_cast<double>(n))) {
      converged = true;
      break;
    }
    Eigen::Matrix3d neg = -state.hess;
    Eigen::LLT<Eigen::Matrix3d> llt(neg);
    double damping = 0.0;
    while (llt.info() != Eigen::Success && damping < 1e12) {
      damping = damping == 0.0 ? 1e-8 * std::max(1.0, neg.trace()) : damping * 10.0;
      llt.compute(neg + damping * Eigen::Matrix3d::Identity());
    }
    const Eigen::Vector3d step = llt.solve(state.grad);
    double s = 1.0;
    bool improved = false;
    for (int h = 0; h < 60; ++h, s *= 0.5) {
      const Eigen::Vector3d trial = par + s * step;
      const AftState ts = aft_evaluate(dataset, trial, false);
      if (std::isfinite(ts.loglik) && ts.loglik >= state.loglik) {
        par = trial;
        improved = true;
        break;
      }
    }
    state = aft_evaluate(dataset, par, true);
    if (!improved) {
      converged = state.grad.cwiseAbs().maxCoeff() < 1e-6 * std::max<double>(1.0, static_cast<double>(n));
      break;
    }
  }
  out.iterations = it;
  const Eigen::Matrix3d info = -state.hess;
  Eigen::LDLT<Eigen::Matrix3d> ldlt(info);
  if (!converged || ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    return out;
  }
  const Eigen::Matrix3d cov = ldlt.solve(Eigen::Matrix3d::Identity());
  out.intercept = par(0);
  out.beta = par(1);
  out.sigma = std::exp(par(2));
  out.se = std::sqrt(cov(1, 1));
  out.converged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo harness

McSummary summarize(const std::vector<McRecord>& records, const std::vector<std::string>& estimators, double beta0,
                    double alpha) {
  McSummary out;
  for (const auto& name : estimators) {
    McRow row;
    row.estimator = name;
    CompensatedSum sum_beta, sum_se, sum_cover, sum_reject;
    std::vector<double> betas;
    Index overid_count = 0;
    for (const auto& r : records) {
      if (r.estimator != name) continue;
      if (!r.converged) {
        ++row.excluded;
        continue;
      }
      ++row.used;
      betas.push_back(r.beta);
      sum_beta.add(r.beta);
      sum_se.add(r.se);
      sum_cover.add(r.covers ? 1.0 : 0.0);
      if (std::isfinite(r.p_overid)) {
        ++overid_count;
        sum_reject.add(r.p_overid < alpha ? 1.0 : 0.0);
      }
    }
    const Index total = row.used + row.excluded;
    row.exclusion_rate = total > 0 ? static_cast<double>(row.excluded) / static_cast<double>(total) : 0.0;
    if (row.used > 0) {
      const auto k = static_cast<double>(row.used);
      const double mean = sum_beta.value() / k;
      row.bias_pct = 100.0 * (mean - beta0) / beta0;
      row.mean_se = sum_se.value() / k;
      row.coverage = sum_cover.value() / k;
      if (row.used > 1) {
        CompensatedSum ss;
        for (double b : betas) ss.add((b - mean) * (b - mean));
        row.sd = std::sqrt(ss.value() / (k - 1.0));
      }
    }
    if (overid_count > 0) row.overid_rejection = sum_reject.value() / static_cast<double>(overid_count);
    out.rows.push_back(row);
  }
  out.records = records;
  return out;
}

McSummary run_monte_carlo(const SimConfig& sim, const FitConfig& fit, const std::vector<std::string>& estimators,
                          int threads) {
  sim.check();
  for (const auto& e : estimators) {
    if (e != "el" && e != "et" && e != "cue" && e != "aft" && e != "truth") {
      throw ValueError("unknown estimator '" + e + "'");
    }
  }
  const auto tau = resolve_censoring(sim);
  const std::size_t per_rep = estimators.size();
  std::vector<McRecord> records(static_cast<std::size_t>(sim.reps) * per_rep);
  std::vector<double> rates(static_cast<std::size_t>(sim.reps));
  const double z = normal_quantile(1.0 - fit.alpha / 2.0);

  parallel_for(sim.reps, threads, [&](Index begin, Index end) {
    for (Index rep = begin; rep < end; ++rep) {
      const std::uint64_t rep_seed = replication_seed(sim.seed, static_cast<int>(rep));
      const SimDraw draw = generate(sim, rep_seed, tau);
      rates[static_cast<std::size_t>(rep)] = draw.data.censoring_rate();
      FitConfig fc = fit;
      fc.seed = substream_seed(rep_seed, kFoldSeedStream);
      fc.threads = 1;
      std::optional<PreparedMoments> prepared;
      bool prepared_failed = false;
      for (std::size_t e = 0; e < per_rep; ++e) {
        McRecord& r = records[static_cast<std::size_t>(rep) * per_rep + e];
        r.rep = static_cast<int>(rep);
        r.estimator = estimators[e];
        r.censoring_rate = draw.data.censoring_rate();
        const std::string& name = estimators[e];
        if (name == "truth") {
          r.beta = sim.beta0;
          r.se = 0.0;
          r.covers = true;
          r.converged = true;
        } else if (name == "aft") {
          const AftResult a = aft_benchmark(draw.data);
          r.beta = a.beta;
          r.se = a.se;
          r.converged = a.converged;
          r.covers = a.converged && std::abs(a.beta - sim.beta0) <= z * a.se;
        } else {
          if (!prepared && !prepared_failed) {
            try {
              prepared = prepare_moments(draw.data, fc);
            } catch (const Error&) {
              prepared_failed = true;
            }
          }
          if (!prepared) continue;
          fc.family = parse_family(name);
          try {
            const FitReport rep_fit = estimate(*prepared, fc);
            r.beta = rep_fit.gel.beta_hat;
            r.se = rep_fit.gel.se;
            r.converged = rep_fit.gel.converged && std::isfinite(rep_fit.gel.se);
            r.covers = rep_fit.gel.ci_lo <= sim.beta0 && sim.beta0 <= rep_fit.gel.ci_hi;
            r.p_f = rep_fit.relevance.p_value;
            if (rep_fit.overid) r.p_overid = rep_fit.overid->p_value;
          } catch (const Error&) {
            r.converged = false;
          }
        }
      }
    }
  });

  McSummary out = summarize(records, estimators, sim.beta0, fit.alpha);
  out.tau = tau;
  CompensatedSum cr;
  for (double r : rates) cr.add(r);
  out.mean_censoring_rate = cr.value() / static_cast<double>(rates.size());
  return out;
}

// ---------------------------------------------------------------------------
// Analytic oracle

GaussianOracle::GaussianOracle(const Truth& truth, const OracleOptions& options) : truth_(truth), options_(options) {
  if (!(options.trunc_eps > 0.0 && options.trunc_eps < 1.0)) throw ValueError("trunc_eps must lie in (0, 1)");
}

double GaussianOracle::truncated_mean(double u, double mu, double sigma) {
  if (u == -kInf) return mu;
  return mu + sigma * inverse_mills((u - mu) / sigma);
}

namespace {

/// Survival function of the censoring law used by the oracle, with optional multiplicative perturbation.
struct SurvivalShape {
  double lo = kInf;
  double hi = kInf;
  double tk = 0.0;  // t * kappa
  double eps = 0.01;

  double base(double u) const {
    if (u <= lo) return 1.0;
    if (u >= hi) return 0.0;
    return (hi - u) / (hi - lo);
  }
  double value(double u) const {
    const double g = base(u);
    return std::max(g * (1.0 - tk * (1.0 - g)), eps);
  }
  /// Point beyond which the clipped value applies.
  double clip_point() const {
    if (!std::isfinite(lo)) return kInf;
    double g_star = eps;
    if (tk != 0.0) {
      const double b = 1.0 - tk;
      g_star = (-b + std::sqrt(b * b + 4.0 * tk * eps)) / (2.0 * tk);
    }
    return hi - g_star * (hi - lo);
  }
};

template <typename F>
double integrate_segment(F&& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-11);
}

}  // namespace

AffineMoment<double> GaussianOracle::psi(const Observation& obs, const MomentSpec& spec, double t) const {
  const int p = spec.p();
  for (const auto& idx : spec.indices()) {
    if (idx.order() != 2) throw DomainError("the analytic oracle supports order-2 moments only");
  }
  const Index m = spec.m();
  const double beta0 = truth_.beta0;
  const OracleDirection dir = options_.direction;

  VectorXd zeta = VectorXd::Zero(p);
  VectorXd theta_y(p + 1), theta_d(p + 1);
  theta_y(0) = 0.0;
  theta_d(0) = 0.0;
  theta_y.tail(p) = beta0 * truth_.theta + truth_.phi;
  theta_d.tail(p) = truth_.theta;
  if (dir == OracleDirection::lambda) {
    zeta.array() += t * 0.5 * options_.lambda_scale;
    theta_y.tail(p).array() += t * 0.5 * options_.lambda_scale;
  }
  VectorXd v(p + 1);
  v(0) = 1.0;
  v.tail(p) = obs.z;
  const VectorXd inter = eval_centered(obs.z, zeta, spec);
  const double fit_y = v.dot(theta_y);
  const double rd = obs.d - v.dot(theta_d);
  const AffineMoment<double> g{inter * (obs.y - fit_y), -inter * rd};

  // Conditional law of T given (Z, D).
  double nu = obs.d - truth_.theta.dot(obs.z) - pair_term(obs.z.data(), p, truth_.phi_d);
  double mu = beta0 * obs.d + truth_.phi.dot(obs.z) + kErrorCov / kErrorVar * nu;
  double sigma = std::sqrt(kErrorVar - kErrorCov * kErrorCov / kErrorVar);
  if (options_.xi == XiModel::misspecified) {
    mu += 0.5;
    sigma *= 1.5;
  }
  const bool xi_on = options_.xi != XiModel::zero;

  const double tau1 = truth_.tau1;
  const double tau2 = truth_.tau2;
  SurvivalShape shape;
  shape.eps = options_.trunc_eps;
  if (options_.censoring == CensoringModel::truth) {
    shape.lo = tau1;
    shape.hi = tau2;
  } else if (options_.censoring == CensoringModel::misspecified) {
    const double w = tau2 - tau1;
    shape.lo = tau1 + 0.5 * w;
    shape.hi = tau2 + 0.5 * w;
  }
  if (dir == OracleDirection::xi || dir == OracleDirection::censoring) shape.tk = t * options_.kappa;
  const bool xi_shift = dir == OracleDirection::xi || dir == OracleDirection::xi_only;
  const double shift = xi_shift ? t * options_.xi_scale : 0.0;
  // True censoring survival, the shape of the xi perturbation.
  SurvivalShape g0;
  g0.lo = tau1;
  g0.hi = tau2;
  g0.eps = 0.0;

  CensoringTerms terms;
  const double y = obs.y;
  terms.g_at_y = shape.value(y);
  terms.g_clipped = shape.base(y) * (1.0 - shape.tk * (1.0 - shape.base(y))) < shape.eps;

  const VectorXd ones = VectorXd::Ones(m);
  const double m_y = xi_on ? truncated_mean(y, mu, sigma) : 0.0;
  const double m_inf = xi_on ? mu : 0.0;
  const VectorXd xi_b = xi_on ? VectorXd(-inter * rd) : VectorXd::Zero(m);
  terms.xi_at_y = {xi_on ? VectorXd(inter * (m_y - fit_y)) : VectorXd::Zero(m), xi_b};
  terms.xi_at_y.a += shift * g0.base(y) * ones;
  terms.xi_minus_inf = {xi_on ? VectorXd(inter * (m_inf - fit_y)) : VectorXd::Zero(m), xi_b};
  terms.xi_minus_inf.a += shift * ones;

  // Integrals of dM / G and dG0 / G over (-inf, y), split where G changes form.
  const double first = std::min(y, shape.lo);
  const double clip = std::max(first, std::min(shape.clip_point(), y));
  double j_mean = 0.0;
  double j_shape = 0.0;
  if (xi_on) {
    auto dm = [&](double u) {
      const double a = (u - mu) / sigma;
      const double lam = inverse_mills(a);
      return lam * (lam - a) / shape.value(u);
    };
    j_mean = truncated_mean(first, mu, sigma) - mu;
    j_mean += integrate_segment(dm, first, clip);
    if (y > clip) j_mean += (truncated_mean(y, mu, sigma) - truncated_mean(clip, mu, sigma)) / shape.eps;
  }
  if (shift != 0.0) {
    const double w0 = tau2 - tau1;
    auto dg = [&](double u) { return (u > tau1 && u < tau2 ? -1.0 / w0 : 0.0) / shape.value(u); };
    j_shape = g0.base(first) - 1.0;
    std::vector<double> cuts{first, std::max(first, std::min(tau1, y)), clip, std::max(clip, std::min(tau2, y)), y};
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t k = 1; k < cuts.size(); ++k) j_shape += integrate_segment(dg, cuts[k - 1], cuts[k]);
  }
  terms.integral = {inter * j_mean + shift * j_shape * ones, VectorXd::Zero(m)};
  return combine_aipcw(g, obs.delta, terms);
}

}  // namespace igsaft
