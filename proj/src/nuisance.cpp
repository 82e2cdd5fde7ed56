#include "igsaft/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace igsaft {

void KernelConfig::check() const {
  if (bandwidth_rule == BandwidthRule::fixed && !(fixed_h && *fixed_h > 0.0)) {
    throw ValueError("fixed bandwidth rule needs a positive bandwidth");
  }
  if (!(trunc_eps > 0.0 && trunc_eps < 1.0)) throw ValueError("trunc_eps must lie in (0, 1)");
}

KmConditioning resolve_conditioning(const KernelConfig& cfg, Index p) {
  if (cfg.conditioning) return *cfg.conditioning;
  return p > 5 ? KmConditioning::d_only : KmConditioning::full;
}

VectorXd estimate_means(const Dataset& fold) { return fold.z().colwise().mean().transpose(); }

namespace {

VectorXd least_squares(const MatrixXd& x, const VectorXd& y, bool& jittered) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() == x.cols()) {
    jittered = false;
    return qr.solve(y);
  }
  jittered = true;
  MatrixXd normal = x.transpose() * x;
  const double scale = std::max(1.0, normal.diagonal().mean());
  normal.diagonal().array() += 1e-8 * scale;
  return normal.ldlt().solve(x.transpose() * y);
}

}  // namespace

PartialFit fit_partials(const Dataset& fold, int k, Findings* findings) {
  const MatrixXd v = build_vk(fold, k);
  if (v.cols() >= fold.n()) {
    throw IllPosedError("partialling design of order " + std::to_string(k) + " has " + std::to_string(v.cols()) +
                        " columns for " + std::to_string(fold.n()) + " rows");
  }
  PartialFit fit;
  fit.order = k;
  bool jit_y = false;
  bool jit_d = false;
  fit.theta_y = least_squares(v, fold.y(), jit_y);
  fit.theta_d = least_squares(v, fold.d(), jit_d);
  if (jit_y || jit_d) {
    add_finding(findings, "rank_deficient_partials",
                "partialling design of order " + std::to_string(k) + " is rank deficient; ridge jitter applied");
  }
  if (!fit.theta_y.allFinite() || !fit.theta_d.allFinite()) {
    throw EstimationError("partialling regression produced non-finite coefficients");
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Kernel smoother

KernelSmoother::KernelSmoother(const Dataset& fold, const KernelConfig& cfg)
    : kernel_(cfg.kernel), conditioning_(resolve_conditioning(cfg, fold.p())), p_(fold.p()) {
  cfg.check();
  const Index n = fold.n();
  Index dim = 0;
  if (conditioning_ == KmConditioning::full) dim = p_ + 1;
  if (conditioning_ == KmConditioning::d_only) dim = 1;
  coords_.resize(dim, n);
  inv_scale_.resize(dim);
  auto fill = [&](Index row, const auto& col) {
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(std::max<Index>(n - 1, 1));
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    inv_scale_(row) = 1.0 / sd;
    coords_.row(row) = col.transpose() * inv_scale_(row);
  };
  if (conditioning_ == KmConditioning::full) {
    for (Index j = 0; j < p_; ++j) fill(j, fold.z().col(j));
    fill(p_, fold.d());
  } else if (conditioning_ == KmConditioning::d_only) {
    fill(0, fold.d());
  }
  if (cfg.bandwidth_rule == BandwidthRule::fixed) {
    h_ = *cfg.fixed_h;
  } else {
    h_ = 1.06 * std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(dim)));
  }
}

bool KernelSmoother::evaluate(const VectorXd& target, double h, VectorXd& out) const {
  const Index n = coords_.cols();
  out.resize(n);
  switch (kernel_) {
    case KernelFamily::gaussian: {
      out = (coords_.colwise() - target).colwise().squaredNorm().transpose();
      const double nearest = out.minCoeff();
      out = ((out.array() - nearest) * (-0.5 / (h * h))).exp();
      break;
    }
    case KernelFamily::uniform:
      for (Index j = 0; j < n; ++j) {
        out(j) = ((coords_.col(j) - target).array().abs() <= h).all() ? 1.0 : 0.0;
      }
      break;
    case KernelFamily::epanechnikov:
      for (Index j = 0; j < n; ++j) {
        const auto u2 = ((coords_.col(j) - target).array() / h).square();
        out(j) = (1.0 - u2).max(0.0).prod();
      }
      break;
  }
  const double total = out.sum();
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  out /= total;
  return true;
}

void KernelSmoother::weights(const double* z, double d, VectorXd& out, WeightStatus* status) const {
  const Index n = coords_.cols();
  if (coords_.rows() == 0) {
    out.setConstant(n, 1.0 / static_cast<double>(n));
    return;
  }
  VectorXd target(coords_.rows());
  if (conditioning_ == KmConditioning::full) {
    for (Index j = 0; j < p_; ++j) target(j) = z[j] * inv_scale_(j);
    target(p_) = d * inv_scale_(p_);
  } else {
    target(0) = d * inv_scale_(0);
  }
  double h = h_;
  for (int attempt = 0; attempt <= 5; ++attempt) {
    if (evaluate(target, h, out)) {
      if (status != nullptr) status->widenings = attempt;
      return;
    }
    h *= 1.5;
  }
  out.setConstant(n, 1.0 / static_cast<double>(n));
  if (status != nullptr) {
    status->widenings = 5;
    status->uniform_fallback = true;
  }
}

VectorXd KernelSmoother::weights(const VectorXd& z, double d, WeightStatus* status) const {
  if (z.size() != p_) throw DomainError("target instrument vector has the wrong length");
  VectorXd out;
  weights(z.data(), d, out, status);
  return out;
}

VectorXd kernel_weights(const VectorXd& z, double d, const Dataset& fold, const KernelConfig& cfg, Findings* findings) {
  const KernelSmoother smoother(fold, cfg);
  WeightStatus status;
  VectorXd w = smoother.weights(z, d, &status);
  if (status.uniform_fallback) {
    add_finding(findings, "kernel_uniform_fallback", "empty kernel window after widening; uniform weights used");
  }
  return w;
}

// ---------------------------------------------------------------------------
// Local Kaplan-Meier

namespace {

std::vector<Index> sorted_order(const Dataset& fold) {
  std::vector<Index> order(static_cast<std::size_t>(fold.n()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index l, Index r) { return fold.y()(l) < fold.y()(r); });
  return order;
}

}  // namespace

CensorModel::CensorModel(const Dataset& fold, const KernelConfig& cfg)
    : order_(sorted_order(fold)), eps_(cfg.trunc_eps), smoother_(fold.subset(order_), cfg) {
  const Index n = fold.n();
  times_.resize(n);
  delta_.resize(n);
  group_of_.resize(static_cast<std::size_t>(n));
  std::vector<double> gtimes;
  for (Index s = 0; s < n; ++s) {
    const Index i = order_[static_cast<std::size_t>(s)];
    times_(s) = fold.y()(i);
    delta_(s) = fold.delta()(i);
    if (s == 0 || times_(s) != times_(s - 1)) {
      group_start_.push_back(s);
      gtimes.push_back(times_(s));
    }
    group_of_[static_cast<std::size_t>(s)] = static_cast<Index>(group_start_.size()) - 1;
  }
  group_start_.push_back(n);
  group_times_ = Eigen::Map<VectorXd>(gtimes.data(), static_cast<Index>(gtimes.size()));
}

void CensorModel::curve(const double* z, double d, Curve& out, WeightStatus* status) const {
  smoother_.weights(z, d, out.weights, status);
  const auto groups = static_cast<Index>(group_times_.size());
  out.group_surv.resize(groups);
  VectorXd& w = out.weights;
  // Backward pass: risk-set weight at each group start, then a forward product.
  double risk = 0.0;
  VectorXd risk_at(groups);
  for (Index g = groups - 1; g >= 0; --g) {
    double censored = 0.0;
    for (Index s = group_start_[static_cast<std::size_t>(g)]; s < group_start_[static_cast<std::size_t>(g + 1)]; ++s) {
      risk += w(s);
      if (delta_(s) == 0) censored += w(s);
    }
    risk_at(g) = risk;
    out.group_surv(g) = censored;
  }
  double surv = 1.0;
  for (Index g = 0; g < groups; ++g) {
    const double censored = out.group_surv(g);
    if (censored > 0.0 && risk_at(g) > 0.0) surv *= std::max(0.0, 1.0 - censored / risk_at(g));
    out.group_surv(g) = surv;
  }
}

CensorModel::Curve CensorModel::curve(const VectorXd& z, double d) const {
  if (z.size() != smoother_.p()) {
    throw DomainError("target instrument vector has the wrong length");
  }
  Curve c;
  curve(z.data(), d, c);
  return c;
}

Index CensorModel::group_at(double y) const {
  const double* begin = group_times_.data();
  const double* end = begin + group_times_.size();
  return static_cast<Index>(std::upper_bound(begin, end, y) - begin) - 1;
}

double CensorModel::unclipped(const Curve& c, double y) const {
  const Index g = group_at(y);
  return g < 0 ? 1.0 : c.group_surv(g);
}

double CensorModel::evaluate(const Curve& c, double y) const { return std::max(unclipped(c, y), eps_); }

double CensorModel::G(double y, const VectorXd& z, double d) const { return evaluate(curve(z, d), y); }

std::shared_ptr<const CensorModel> fit_local_km(const Dataset& fold, const KernelConfig& cfg) {
  return std::make_shared<const CensorModel>(fold, cfg);
}

// ---------------------------------------------------------------------------
// Conditional moment

CondMoment::CondMoment(std::shared_ptr<const CensorModel> censor, const VectorXd& outcome)
    : censor_(std::move(censor)) {
  const CensorModel& cm = *censor_;
  if (outcome.size() != cm.size()) throw DomainError("outcome length does not match the censoring model's fold");
  for (Index s = 0; s < cm.size(); ++s) {
    if (cm.events()(s) == 1) {
      event_pos_.push_back(s);
      event_group_.push_back(cm.group_of()[static_cast<std::size_t>(s)]);
    }
  }
  values_.resize(static_cast<Index>(event_pos_.size()));
  for (std::size_t e = 0; e < event_pos_.size(); ++e) {
    values_(static_cast<Index>(e)) = outcome(cm.order()[static_cast<std::size_t>(event_pos_[e])]);
  }
}

double CondMoment::operator()(double u, const VectorXd& z, double d, bool* carry_forward) const {
  const CensorModel::Curve c = censor_->curve(z, d);
  const double eps = censor_->trunc_eps();
  double num = 0.0;
  double den = 0.0;
  auto e = static_cast<Index>(event_pos_.size()) - 1;
  auto add = [&](Index k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    const double w = c.weights(event_pos_[ks]) / std::max(c.group_surv(event_group_[ks]), eps);
    num += w * values_(k);
    den += w;
  };
  while (e >= 0 && censor_->times()(event_pos_[static_cast<std::size_t>(e)]) >= u) add(e--);
  if (carry_forward != nullptr) *carry_forward = !(den > 0.0);
  while (!(den > 0.0) && e >= 0) {
    const Index grp = event_group_[static_cast<std::size_t>(e)];
    while (e >= 0 && event_group_[static_cast<std::size_t>(e)] == grp) add(e--);
  }
  return den > 0.0 ? num / den : 0.0;
}

double CondMoment::at_minus_infinity(const VectorXd& z, double d) const {
  return (*this)(-std::numeric_limits<double>::infinity(), z, d);
}

MeanTerms CondMoment::terms(const double* z, double d, double y, CensorModel::Curve& scratch,
                            WeightStatus* status) const {
  const CensorModel& cm = *censor_;
  cm.curve(z, d, scratch, status);
  const VectorXd& weight = scratch.weights;
  const VectorXd& surv = scratch.group_surv;
  const double eps = cm.trunc_eps();

  MeanTerms out;
  const double g_y = cm.unclipped(scratch, y);
  out.g_clipped = g_y < eps;
  out.g_at_y = std::max(g_y, eps);

  double num = 0.0;
  double den = 0.0;
  double integral = 0.0;
  double mean_y = 0.0;
  double pending = 0.0;
  bool y_pending = false;

  auto inv_g = [&](Index grp) { return 1.0 / std::max(surv(grp), eps); };
  auto add = [&](Index k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    const double w = weight(event_pos_[ks]) * inv_g(event_group_[ks]);
    num += w * values_(k);
    den += w;
  };
  // Adds coef * m(current) to the integral, deferring while the risk set is empty.
  auto emit = [&](double coef) {
    if (den > 0.0) {
      integral += coef * (num / den);
    } else {
      pending += coef;
    }
  };
  auto resolve = [&]() {
    if (den > 0.0 && (y_pending || pending != 0.0)) {
      if (y_pending) mean_y = num / den;
      integral += pending * (num / den);
      pending = 0.0;
      y_pending = false;
      out.carry_forward = true;
    }
  };

  auto e = static_cast<Index>(event_pos_.size()) - 1;
  while (e >= 0 && cm.times()(event_pos_[static_cast<std::size_t>(e)]) >= y) add(e--);
  if (den > 0.0) {
    mean_y = num / den;
  } else {
    y_pending = true;
  }

  // Summation by parts of sum_s (m(u_{s+1}) - m(u_s)) / G(u_s) over event groups below y,
  // with m(u_{L+1}) := m(y).
  if (e >= 0) emit(inv_g(event_group_[static_cast<std::size_t>(e)]));
  while (e >= 0) {
    const Index grp = event_group_[static_cast<std::size_t>(e)];
    const double c_s = inv_g(grp);
    if (surv(grp) < eps) ++out.grid_clipped;
    while (e >= 0 && event_group_[static_cast<std::size_t>(e)] == grp) add(e--);
    resolve();
    emit(e >= 0 ? inv_g(event_group_[static_cast<std::size_t>(e)]) - c_s : -c_s);
  }

  if (den > 0.0) {
    out.mean_minus_inf = num / den;
  } else {
    out.empty_risk_set = true;
    out.carry_forward = true;
  }
  out.mean_at_y = mean_y;
  out.integral = integral;
  return out;
}

MeanTerms CondMoment::terms(const VectorXd& z, double d, double y) const {
  CensorModel::Curve scratch;
  return terms(z.data(), d, y, scratch);
}

std::shared_ptr<const CondMoment> fit_cond_moment(std::shared_ptr<const CensorModel> censor, const VectorXd& outcome) {
  return std::make_shared<const CondMoment>(std::move(censor), outcome);
}

CensoringTerms expand_terms(const MeanTerms& s, const VectorXd& interactions, const VectorXd& fitted_y,
                            const AffineMoment<double>& g) {
  CensoringTerms out;
  out.g_at_y = s.g_at_y;
  out.g_clipped = s.g_clipped;
  out.grid_clipped = s.grid_clipped;
  out.carry_forward = s.carry_forward;
  out.empty_risk_set = s.empty_risk_set;
  out.xi_at_y = {interactions.cwiseProduct((s.mean_at_y - fitted_y.array()).matrix()), g.b};
  out.xi_minus_inf = {interactions.cwiseProduct((s.mean_minus_inf - fitted_y.array()).matrix()), g.b};
  out.integral = {s.integral * interactions, VectorXd::Zero(g.b.size())};
  return out;
}

// ---------------------------------------------------------------------------

const PartialFit& NuisanceFit::partial(int k) const {
  for (const auto& p : partials) {
    if (p.order == k) return p;
  }
  throw DomainError("no partialling fit for order " + std::to_string(k));
}

void eval_g_rows(const Dataset& data, const VectorXd& zeta, const std::vector<PartialFit>& partials,
                 const MomentSpec& spec, MatrixXd& a, MatrixXd& b, MatrixXd* interactions, MatrixXd* fitted_y) {
  MatrixXd inter = centered_design(data.z(), zeta, spec);
  a.resize(data.n(), spec.m());
  b.resize(data.n(), spec.m());
  if (fitted_y != nullptr) fitted_y->resize(data.n(), spec.m());
  for (int k : spec.orders()) {
    const auto it = std::find_if(partials.begin(), partials.end(), [k](const PartialFit& f) { return f.order == k; });
    if (it == partials.end()) throw DomainError("no partialling fit for order " + std::to_string(k));
    const MatrixXd v = build_vk(data.z(), k);
    const VectorXd fit = v * it->theta_y;
    const VectorXd ry = data.y() - fit;
    const VectorXd rd = data.d() - v * it->theta_d;
    for (Index t = 0; t < spec.m(); ++t) {
      if (spec[t].order() != k) continue;
      a.col(t) = inter.col(t).cwiseProduct(ry);
      b.col(t) = -inter.col(t).cwiseProduct(rd);
      if (fitted_y != nullptr) fitted_y->col(t) = fit;
    }
  }
  if (interactions != nullptr) *interactions = std::move(inter);
}

NuisanceFit fit_nuisance(const Dataset& dataset, std::span<const Index> training_ids, const MomentSpec& spec,
                         const KernelConfig& cfg, Findings* findings) {
  NuisanceFit fit;
  fit.training_ids.assign(training_ids.begin(), training_ids.end());
  const Dataset fold = dataset.subset(training_ids);
  fit.zeta = estimate_means(fold);
  for (int k : spec.orders()) fit.partials.push_back(fit_partials(fold, k, findings));
  fit.censor_model = fit_local_km(fold, cfg);
  fit.cond_moment = fit_cond_moment(fit.censor_model, fold.y());
  return fit;
}

}  // namespace igsaft
