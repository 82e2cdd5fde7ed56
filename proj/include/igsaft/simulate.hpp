#pragma once

#include "igsaft/core.hpp"
#include "igsaft/data.hpp"
#include "igsaft/moments.hpp"
#include "igsaft/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace igsaft {

struct SimConfig {
  int case_id = 1;
  Index n = 2000;
  int p = 10;
  double target_cr = 0.2;
  /// Width of the uniform censoring interval in units of SD(T).
  double censor_width_sd = 12.0;
  double c_weak = 4.0;
  double beta0 = 1.0;
  int reps = 100;
  std::uint64_t seed = 1;
  /// Fraction of nonzero pairwise exposure interactions; empty means 1 for p < 20 and 0.4 otherwise.
  std::optional<double> nonzero_frac;
  /// Draw the interaction support once from the base seed instead of per replication.
  bool fix_support = false;
  /// Set every exposure interaction to zero.
  bool null_interactions = false;
  /// Censoring interval used instead of calibration.
  std::optional<std::pair<double, double>> tau;

  void check() const;
  double resolved_nonzero_frac() const;
};

/// Coefficient draws and latent variables behind one simulated dataset.
struct Truth {
  double beta0 = 1.0;
  VectorXd theta;
  VectorXd phi;
  /// Coefficients of the pairwise products in canonical order.
  VectorXd phi_d;
  double tau1 = 0.0;
  double tau2 = 0.0;
  VectorXd latent_t;
  VectorXd censor_time;
};

struct SimDraw {
  Dataset data;
  Truth truth;
};

std::uint64_t replication_seed(std::uint64_t seed, int rep);

/// Censoring interval (+inf, +inf) disables censoring.
SimDraw generate(const SimConfig& config, std::uint64_t rep_seed, std::pair<double, double> tau);

/// Interval of width censor_width_sd * SD(T) whose left end gives the target censoring rate on a 1e5-draw pilot.
std::pair<double, double> calibrate_censoring(const SimConfig& config);

/// Calibrated interval, or no censoring when target_cr is 0, or the configured interval.
std::pair<double, double> resolve_censoring(const SimConfig& config);

struct AftResult {
  double intercept = std::nan("");
  double beta = std::nan("");
  double sigma = std::nan("");
  double se = std::nan("");
  bool converged = false;
  int iterations = 0;
};

/// Normal-error censored regression of Y on D by safeguarded Newton.
AftResult aft_benchmark(const Dataset& dataset);

struct McRecord {
  int rep = 0;
  std::string estimator;
  double beta = std::nan("");
  double se = std::nan("");
  bool covers = false;
  bool converged = false;
  double p_overid = std::nan("");
  double p_f = std::nan("");
  double censoring_rate = std::nan("");
};

struct McRow {
  std::string estimator;
  double bias_pct = std::nan("");
  double sd = std::nan("");
  double mean_se = std::nan("");
  double coverage = std::nan("");
  Index used = 0;
  Index excluded = 0;
  double exclusion_rate = 0.0;
  /// Fraction of used replications whose overidentification p-value is below alpha.
  double overid_rejection = std::nan("");
};

struct McSummary {
  std::vector<McRow> rows;
  std::vector<McRecord> records;
  std::pair<double, double> tau;
  double mean_censoring_rate = std::nan("");
};

/// Estimator names: el, et, cue, aft and truth (reports beta0 with zero standard error).
McSummary run_monte_carlo(const SimConfig& sim, const FitConfig& fit, const std::vector<std::string>& estimators,
                          int threads = 1);

McSummary summarize(const std::vector<McRecord>& records, const std::vector<std::string>& estimators, double beta0,
                    double alpha);

// ---------------------------------------------------------------------------
// Analytic nuisances of the Gaussian design.

/// Direction of the nuisance path eta0 + t h.
enum class OracleDirection {
  none,
  /// Means and partialling coefficients, with xi recomputed from them.
  lambda,
  /// Joint path: xi + t c G0(u) together with G0 (1 - t kappa (1 - G0)).
  xi,
  /// xi + t c G0(u) alone.
  xi_only,
  /// G0 (1 - t kappa (1 - G0)) alone.
  censoring,
};

enum class XiModel { truth, zero, misspecified };
enum class CensoringModel { truth, none, misspecified };

struct OracleOptions {
  OracleDirection direction = OracleDirection::none;
  double kappa = 2.0;
  double xi_scale = 1.0;
  double lambda_scale = 1.0;
  XiModel xi = XiModel::truth;
  CensoringModel censoring = CensoringModel::truth;
  double trunc_eps = 0.01;
};

/**
 * True nuisances for the Gaussian design with order-2 moments.
 *
 * Given (Z, D), T is normal with mean beta0 D + phi'Z + nu / 2 and variance 0.3,
 * and C is uniform on [tau1, tau2].
 */
class GaussianOracle final : public NuisanceOracle {
 public:
  GaussianOracle(const Truth& truth, const OracleOptions& options);

  double beta0() const override { return truth_.beta0; }
  AffineMoment<double> psi(const Observation& obs, const MomentSpec& spec, double t) const override;

  /// Conditional mean of T given T >= u under the given normal law.
  static double truncated_mean(double u, double mu, double sigma);

 private:
  Truth truth_;
  OracleOptions options_;
};

}  // namespace igsaft
