#include "igsaft/gel.hpp"

#include "igsaft/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace igsaft {

std::string to_string(RhoFamily family) {
  switch (family) {
    case RhoFamily::el:
      return "el";
    case RhoFamily::et:
      return "et";
    case RhoFamily::cue:
      return "cue";
  }
  return "?";
}

RhoFamily parse_family(const std::string& name) {
  if (name == "el" || name == "EL") return RhoFamily::el;
  if (name == "et" || name == "ET") return RhoFamily::et;
  if (name == "cue" || name == "CUE") return RhoFamily::cue;
  throw SchemaError("unknown GEL family '" + name + "' (expected el, et or cue)");
}

namespace {

/// Q(beta) evaluations sharing one warm-start tilting vector.
class Objective {
 public:
  Objective(const MomentMatrix& M, RhoFamily family, const InnerOptions& opt) : M_(M), family_(family), opt_(opt) {}

  InnerResult<double> solve(double beta, bool warm) {
    InnerResult<double> r = inner_lambda<double>(M_, beta, family_, warm && have_warm_ ? &warm_ : nullptr, opt_);
    if (r.lambda.allFinite()) {
      warm_ = r.lambda;
      have_warm_ = true;
    }
    ++evaluations_;
    return r;
  }

  double value(double beta, bool warm = true) {
    const InnerResult<double> r = solve(beta, warm);
    return std::isfinite(r.q) ? r.q : std::numeric_limits<double>::infinity();
  }

 private:
  const MomentMatrix& M_;
  RhoFamily family_;
  InnerOptions opt_;
  VectorXd warm_;
  bool have_warm_ = false;
  int evaluations_ = 0;
};

}  // namespace

GelFit minimize_beta(const MomentMatrix& M, RhoFamily family, const GelOptions& options) {
  if (!(options.lower < options.upper)) throw DomainError("search interval must satisfy lower < upper");
  if (options.grid_points < 3) throw DomainError("search grid needs at least 3 points");
  Objective objective(M, family, options.inner);
  GelFit fit;
  fit.family = family;
  fit.n = M.n();
  fit.m = M.m();
  fit.alpha = options.alpha;

  const int g = options.grid_points;
  const double step = (options.upper - options.lower) / static_cast<double>(g - 1);
  std::vector<double> grid(static_cast<std::size_t>(g));
  std::vector<double> values(static_cast<std::size_t>(g));
  int best = -1;
  for (int i = 0; i < g; ++i) {
    grid[static_cast<std::size_t>(i)] = i == g - 1 ? options.upper : options.lower + step * i;
    values[static_cast<std::size_t>(i)] = objective.value(grid[static_cast<std::size_t>(i)], false);
    if (std::isfinite(values[static_cast<std::size_t>(i)]) &&
        (best < 0 || values[static_cast<std::size_t>(i)] < values[static_cast<std::size_t>(best)])) {
      best = i;
    }
  }
  if (best < 0) throw EstimationError("GEL objective failed at every grid point");

  double lo = grid[static_cast<std::size_t>(std::max(best - 1, 0))];
  double hi = grid[static_cast<std::size_t>(std::min(best + 1, g - 1))];
  const double bracket_lo = lo;
  const double bracket_hi = hi;

  // Golden-section search on [lo, hi].
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - ratio * (hi - lo);
  double x2 = lo + ratio * (hi - lo);
  double f1 = objective.value(x1);
  double f2 = objective.value(x2);
  double beta = grid[static_cast<std::size_t>(best)];
  double fbest = values[static_cast<std::size_t>(best)];
  while (hi - lo > options.width_tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = objective.value(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = objective.value(x2);
    }
  }
  if (f1 < fbest) {
    beta = x1;
    fbest = f1;
  }
  if (f2 < fbest) {
    beta = x2;
    fbest = f2;
  }

  // One safeguarded Newton step from finite differences.
  {
    const double h = 1e-4 * std::max(1.0, std::abs(beta));
    const double f0 = objective.value(beta);
    const double fp = objective.value(beta + h);
    const double fm = objective.value(beta - h);
    const double d1 = (fp - fm) / (2.0 * h);
    const double d2 = (fp - 2.0 * f0 + fm) / (h * h);
    if (std::isfinite(d1) && std::isfinite(d2) && d2 > 0.0) {
      const double candidate = beta - d1 / d2;
      if (candidate >= bracket_lo && candidate <= bracket_hi && std::abs(candidate - beta) <= h) {
        const double fc = objective.value(candidate);
        if (fc < std::min(f0, fbest)) {
          beta = candidate;
          fbest = fc;
        }
      }
    }
  }

  const InnerResult<double> final_inner = objective.solve(beta, true);
  fit.beta_hat = beta;
  fit.lambda_hat = final_inner.lambda;
  fit.q_hat = final_inner.q;
  fit.inner_iterations = final_inner.iterations;
  fit.converged = final_inner.converged && std::isfinite(final_inner.q);
  if (!final_inner.converged) {
    add_finding(&fit.findings, "inner_not_converged", "tilting problem did not converge at the estimate");
  }
  if (beta - options.lower < 1e-3 || options.upper - beta < 1e-3) {
    fit.near_boundary = true;
    add_finding(&fit.findings, "beta_near_boundary", "estimate lies within 1e-3 of the search interval boundary");
  }
  return fit;
}

GelFit variance(const MomentMatrix& M, GelFit fit, RhoFamily family, const GelOptions& options) {
  fit.alpha = options.alpha;
  if (!std::isfinite(fit.beta_hat) || fit.lambda_hat.size() != M.m()) {
    throw DomainError("variance needs a fit from minimize_beta");
  }
  const double beta = fit.beta_hat;
  const double h = std::max(1e-4, 1e-4 * std::abs(beta));
  const InnerResult<double> plus = inner_lambda<double>(M, beta + h, family, &fit.lambda_hat, options.inner);
  const InnerResult<double> minus = inner_lambda<double>(M, beta - h, family, &fit.lambda_hat, options.inner);
  fit.h_hat = (plus.q - 2.0 * fit.q_hat + minus.q) / (h * h);

  const MatrixXd psi = M.at(beta);
  const VectorXd v = psi * fit.lambda_hat;
  VectorXd d1, d2;
  detail::rho_derivatives(v, family, d1, d2);
  fit.d_hat = M.b.transpose() * d1 / d1.sum();
  MatrixXd omega = psi.transpose() * psi / static_cast<double>(M.n());
  omega.diagonal().array() += 1e-10 * std::max(omega.trace() / static_cast<double>(M.m()), 1e-300);
  const Eigen::LDLT<MatrixXd> ldlt(omega);
  const double quad = fit.d_hat.dot(ldlt.solve(fit.d_hat));
  const double n = static_cast<double>(M.n());
  const MatrixXd gamma = M.b.transpose() * psi / n;
  MatrixXd u = M.b - psi * ldlt.solve(gamma.transpose());
  u.rowwise() -= fit.d_hat.transpose();
  fit.v_many = (u.transpose() * u / n).cwiseProduct(ldlt.solve(MatrixXd::Identity(M.m(), M.m()))).sum();

  if (!(fit.h_hat > 0.0) || !std::isfinite(fit.h_hat)) {
    add_finding(&fit.findings, "non_identification", "objective curvature at the estimate is not positive");
    fit.converged = false;
    fit.v_hat = std::nan("");
    fit.se = std::nan("");
  } else {
    fit.v_hat = quad / (fit.h_hat * fit.h_hat);
    fit.se = std::sqrt((fit.v_hat + fit.v_many / (n * fit.h_hat * fit.h_hat)) / n);
  }
  const double z = normal_quantile(1.0 - options.alpha / 2.0);
  fit.ci_lo = beta - z * fit.se;
  fit.ci_hi = beta + z * fit.se;
  fit.exp_beta = std::exp(beta);
  fit.exp_se = fit.exp_beta * fit.se;
  return fit;
}

GelFit fit_gel(const MomentMatrix& M, RhoFamily family, const GelOptions& options) {
  return variance(M, minimize_beta(M, family, options), family, options);
}

}  // namespace igsaft
