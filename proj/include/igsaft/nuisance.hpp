#pragma once

#include "igsaft/affine.hpp"
#include "igsaft/core.hpp"
#include "igsaft/data.hpp"
#include "igsaft/interactions.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace igsaft {

enum class KernelFamily { gaussian, uniform, epanechnikov };
enum class BandwidthRule { silverman, fixed };

/// Coordinates the local Kaplan-Meier conditions on.
enum class KmConditioning { full, d_only, marginal };

struct KernelConfig {
  KernelFamily kernel = KernelFamily::gaussian;
  BandwidthRule bandwidth_rule = BandwidthRule::silverman;
  std::optional<double> fixed_h;
  double trunc_eps = 0.01;
  /// Empty means full for p <= 5 and d_only otherwise.
  std::optional<KmConditioning> conditioning;

  void check() const;
};

KmConditioning resolve_conditioning(const KernelConfig& cfg, Index p);

VectorXd estimate_means(const Dataset& fold);

/// Least-squares coefficients of Y and D on V_k.
struct PartialFit {
  int order = 2;
  VectorXd theta_y;
  VectorXd theta_d;
};

PartialFit fit_partials(const Dataset& fold, int k, Findings* findings = nullptr);

/// Outcome of one kernel-weight evaluation.
struct WeightStatus {
  int widenings = 0;
  bool uniform_fallback = false;
};

/**
 * Product-kernel smoother over a fixed fold.
 *
 * Coordinates are divided by their fold standard deviations; the bandwidth is
 * then shared by every coordinate.
 */
class KernelSmoother {
 public:
  KernelSmoother(const Dataset& fold, const KernelConfig& cfg);

  /// Normalized weights over the fold rows, in fold order.
  void weights(const double* z, double d, VectorXd& out, WeightStatus* status = nullptr) const;
  VectorXd weights(const VectorXd& z, double d, WeightStatus* status = nullptr) const;

  double bandwidth() const noexcept { return h_; }
  KmConditioning conditioning() const noexcept { return conditioning_; }
  Index dim() const noexcept { return coords_.rows(); }
  Index p() const noexcept { return p_; }

 private:
  bool evaluate(const VectorXd& target, double h, VectorXd& out) const;

  KernelFamily kernel_;
  KmConditioning conditioning_;
  Index p_;
  MatrixXd coords_;  // dim x n, standardized
  VectorXd inv_scale_;
  double h_ = 1.0;
};

VectorXd kernel_weights(const VectorXd& z, double d, const Dataset& fold, const KernelConfig& cfg,
                        Findings* findings = nullptr);

/**
 * Kernel-weighted product-limit estimate of the censoring survival G(y | z, d).
 *
 * Rows are stored sorted by observed time; tied times form one group.
 */
class CensorModel {
 public:
  CensorModel(const Dataset& fold, const KernelConfig& cfg);

  /// Per-target survival curve in sorted-row coordinates.
  struct Curve {
    VectorXd weights;     // kernel weights of sorted rows
    VectorXd group_surv;  // unclipped G at each time group (value at and right after the group time)
  };

  void curve(const double* z, double d, Curve& out, WeightStatus* status = nullptr) const;
  Curve curve(const VectorXd& z, double d) const;

  /// Clipped G(y) from a curve; right-continuous step function.
  double evaluate(const Curve& c, double y) const;
  double unclipped(const Curve& c, double y) const;

  double G(double y, const VectorXd& z, double d) const;

  Index size() const noexcept { return times_.size(); }
  const VectorXd& times() const noexcept { return times_; }
  const VectorXi& events() const noexcept { return delta_; }
  const std::vector<Index>& order() const noexcept { return order_; }
  const std::vector<Index>& group_of() const noexcept { return group_of_; }
  const VectorXd& group_times() const noexcept { return group_times_; }
  /// Index of the last group with time <= y, or -1.
  Index group_at(double y) const;
  double trunc_eps() const noexcept { return eps_; }
  const KernelSmoother& smoother() const noexcept { return smoother_; }

 private:
  std::vector<Index> order_;  // sorted position -> fold row
  VectorXd times_;
  VectorXi delta_;
  std::vector<Index> group_of_;
  std::vector<Index> group_start_;
  VectorXd group_times_;
  double eps_;
  KernelSmoother smoother_;
};

std::shared_ptr<const CensorModel> fit_local_km(const Dataset& fold, const KernelConfig& cfg);

/// Censoring-side pieces of one observation, before multiplying by its interactions.
struct MeanTerms {
  double g_at_y = 1.0;
  double mean_at_y = 0.0;
  double mean_minus_inf = 0.0;
  /// Sum over event times u_s <= y of (m(u_{s+1}) - m(u_s)) / G(u_s), with m(u_{L+1}) = m(y).
  double integral = 0.0;
  bool g_clipped = false;
  Index grid_clipped = 0;
  bool carry_forward = false;
  bool empty_risk_set = false;
};

/**
 * Kernel-weighted inverse-censoring-weighted mean of the outcome over the
 * risk set {Y_j >= u}:
 *
 *   m(u; z, d) = sum_j I(Y_j >= u) B_j delta_j Y_j / G(Y_j) / sum_j I(Y_j >= u) B_j delta_j / G(Y_j).
 *
 * Because g is affine in the outcome, xi(beta; u, z, d) = g evaluated at
 * (m(u; z, d), z, d).
 */
class CondMoment {
 public:
  CondMoment(std::shared_ptr<const CensorModel> censor, const VectorXd& outcome);

  /// m at u; carry_forward is set when the weighted risk set at u is empty.
  double operator()(double u, const VectorXd& z, double d, bool* carry_forward = nullptr) const;
  double at_minus_infinity(const VectorXd& z, double d) const;

  /// All censoring-side pieces for an observation in one backward pass.
  MeanTerms terms(const double* z, double d, double y, CensorModel::Curve& scratch,
                  WeightStatus* status = nullptr) const;
  MeanTerms terms(const VectorXd& z, double d, double y) const;

  const CensorModel& censor() const noexcept { return *censor_; }

 private:
  std::shared_ptr<const CensorModel> censor_;
  VectorXd values_;                 // outcomes of event rows, sorted by time
  std::vector<Index> event_pos_;    // sorted position of each event row
  std::vector<Index> event_group_;  // time group of each event row
};

std::shared_ptr<const CondMoment> fit_cond_moment(std::shared_ptr<const CensorModel> censor, const VectorXd& outcome);

/// Maps scalar terms to the moment vector: xi(u) has a-part I (m(u) - V theta_y) and b-part g.b.
CensoringTerms expand_terms(const MeanTerms& s, const VectorXd& interactions, const VectorXd& fitted_y,
                            const AffineMoment<double>& g);

/// All nuisance estimates trained on one fold.
struct NuisanceFit {
  VectorXd zeta;
  std::vector<PartialFit> partials;
  std::shared_ptr<const CensorModel> censor_model;
  std::shared_ptr<const CondMoment> cond_moment;
  std::vector<Index> training_ids;

  const PartialFit& partial(int k) const;
};

/// g rows (a and b parts) for every row of `data` under the given nuisances; optionally also
/// the centered interactions and the fitted outcome V theta_y of each component's order.
void eval_g_rows(const Dataset& data, const VectorXd& zeta, const std::vector<PartialFit>& partials,
                 const MomentSpec& spec, MatrixXd& a, MatrixXd& b, MatrixXd* interactions = nullptr,
                 MatrixXd* fitted_y = nullptr);

NuisanceFit fit_nuisance(const Dataset& dataset, std::span<const Index> training_ids, const MomentSpec& spec,
                         const KernelConfig& cfg, Findings* findings = nullptr);

}  // namespace igsaft
