#pragma once

#include "igsaft/core.hpp"
#include "igsaft/moments.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace igsaft {

enum class RhoFamily { el, et, cue };

std::string to_string(RhoFamily family);
RhoFamily parse_family(const std::string& name);

template <typename Scalar>
struct RhoValue {
  Scalar value;
  Scalar d1;
  Scalar d2;
};

/// rho and its first two derivatives; every family has rho(0) = 0 and rho'(0) = rho''(0) = -1.
template <typename Scalar>
RhoValue<Scalar> rho(Scalar v, RhoFamily family) {
  using std::exp;
  using std::expm1;
  using std::log1p;
  switch (family) {
    case RhoFamily::el: {
      if (!(v < Scalar(1) - Scalar(1e-10))) throw DomainError("empirical likelihood argument at or beyond 1");
      const Scalar r = Scalar(1) / (Scalar(1) - v);
      return {log1p(-v), -r, -r * r};
    }
    case RhoFamily::et: {
      const Scalar e = exp(v);
      return {-expm1(v), -e, -e};
    }
    case RhoFamily::cue:
      return {-v - v * v / Scalar(2), Scalar(-1) - v, Scalar(-1)};
  }
  throw DomainError("unknown rho family");
}

struct InnerOptions {
  double tol = 1e-9;
  int max_iter = 100;
  double el_guard = 1e-6;
};

template <typename Scalar>
struct InnerResult {
  VectorX<Scalar> lambda;
  Scalar q = Scalar(0);
  bool converged = false;
  int iterations = 0;
  Scalar grad_norm = Scalar(0);
};

namespace detail {

/// Mean of rho over v; -inf outside the empirical likelihood domain.
template <typename Scalar>
Scalar mean_rho(const VectorX<Scalar>& v, RhoFamily family, Scalar guard) {
  switch (family) {
    case RhoFamily::el:
      if ((v.array() > Scalar(1) - guard).any()) return -std::numeric_limits<Scalar>::infinity();
      return (-v.array()).log1p().mean();
    case RhoFamily::et:
      return -(v.array().exp() - Scalar(1)).mean();
    case RhoFamily::cue:
      return (-v.array() - v.array().square() / Scalar(2)).mean();
  }
  return Scalar(0);
}

template <typename Scalar>
void rho_derivatives(const VectorX<Scalar>& v, RhoFamily family, VectorX<Scalar>& d1, VectorX<Scalar>& d2) {
  switch (family) {
    case RhoFamily::el:
      d1 = -(Scalar(1) - v.array()).inverse();
      d2 = -d1.array().square();
      break;
    case RhoFamily::et:
      d1 = -v.array().exp();
      d2 = d1;
      break;
    case RhoFamily::cue:
      d1 = Scalar(-1) - v.array();
      d2 = VectorX<Scalar>::Constant(v.size(), Scalar(-1));
      break;
  }
}

}  // namespace detail

/**
 * Maximizes P(lambda) = mean rho(lambda' psi_i) over lambda by damped Newton.
 *
 * psi holds one moment row per observation. The ridge jitter
 * 1e-10 * trace / m enters only the Newton system, never the objective.
 */
template <typename Scalar>
InnerResult<Scalar> solve_inner(const MatrixX<Scalar>& psi, RhoFamily family,
                                const VectorX<Scalar>* warm = nullptr, const InnerOptions& opt = {}) {
  const Index n = psi.rows();
  const Index m = psi.cols();
  const Scalar guard(opt.el_guard);
  const Scalar inv_n = Scalar(1) / Scalar(n);
  InnerResult<Scalar> out;
  out.lambda = VectorX<Scalar>::Zero(m);
  VectorX<Scalar> v = VectorX<Scalar>::Zero(n);
  Scalar objective(0);
  if (warm != nullptr && warm->size() == m && warm->allFinite()) {
    VectorX<Scalar> vw = psi * *warm;
    const Scalar pw = detail::mean_rho(vw, family, guard);
    if (pw >= Scalar(0)) {
      out.lambda = *warm;
      v = std::move(vw);
      objective = pw;
    }
  }

  VectorX<Scalar> d1, d2, grad, step, trial_v;
  MatrixX<Scalar> hess(m, m);
  // Gradient tolerance scales with the moment magnitude. Near the optimum the
  // objective changes by less than its rounding error, so the line search
  // accepts steps within that slack and a stalled search with a negligible
  // Newton decrement counts as converged.
  const Scalar scale = std::max(Scalar(1), Scalar(psi.norm() / std::sqrt(static_cast<double>(n * m))));
  const Scalar grad_tol = Scalar(opt.tol) * scale;
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  for (int it = 0; it <= opt.max_iter; ++it) {
    detail::rho_derivatives(v, family, d1, d2);
    grad = psi.transpose() * d1 * inv_n;
    out.grad_norm = grad.norm();
    out.iterations = it;
    if (out.grad_norm < grad_tol) {
      out.converged = true;
      break;
    }
    if (it == opt.max_iter) break;
    const MatrixX<Scalar> weighted = psi.array().colwise() * (-d2.array()).sqrt();
    hess.setZero();
    hess.template selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose(), inv_n);
    const Scalar jitter = Scalar(1e-10) * std::max(hess.trace() / Scalar(m), Scalar(1e-300));
    hess.diagonal().array() += jitter;
    Eigen::LLT<MatrixX<Scalar>, Eigen::Lower> llt(hess);
    if (llt.info() != Eigen::Success) {
      hess.diagonal().array() += Scalar(1e-6) * std::max(hess.trace() / Scalar(m), Scalar(1));
      llt.compute(hess);
      if (llt.info() != Eigen::Success) break;
    }
    step = llt.solve(grad);
    const Scalar decrement = grad.dot(step);
    const Scalar slack = Scalar(16) * eps * (v.cwiseAbs().mean() + std::abs(objective));
    Scalar s(1);
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, s /= Scalar(2)) {
      trial_v = v + s * (psi * step);
      const Scalar trial = detail::mean_rho(trial_v, family, guard);
      if (std::isfinite(static_cast<double>(trial)) && trial >= objective - slack) {
        out.lambda += s * step;
        v = trial_v;
        objective = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.converged = decrement >= Scalar(0) && decrement < Scalar(64) * slack;
      break;
    }
  }
  out.q = objective;
  return out;
}

/// Inner problem at beta for an affine moment matrix.
template <typename Scalar>
InnerResult<Scalar> inner_lambda(const MomentMatrix& M, Scalar beta, RhoFamily family,
                                 const VectorX<Scalar>* warm = nullptr, const InnerOptions& opt = {}) {
  const MatrixX<Scalar> psi = M.a.template cast<Scalar>() + beta * M.b.template cast<Scalar>();
  return solve_inner<Scalar>(psi, family, warm, opt);
}

struct GelOptions {
  double lower = -10.0;
  double upper = 10.0;
  int grid_points = 41;
  double width_tol = 1e-8;
  double alpha = 0.05;
  InnerOptions inner;
};

/// GEL point estimate with its inference quantities.
struct GelFit {
  RhoFamily family = RhoFamily::el;
  Index n = 0;
  Index m = 0;
  double beta_hat = std::nan("");
  VectorXd lambda_hat;
  double q_hat = std::nan("");
  double h_hat = std::nan("");
  VectorXd d_hat;
  double v_hat = std::nan("");
  /// Many-moment term mean(U' Omega^-1 U) from the residuals U of b regressed on psi.
  double v_many = std::nan("");
  double se = std::nan("");
  double alpha = 0.05;
  double ci_lo = std::nan("");
  double ci_hi = std::nan("");
  double exp_beta = std::nan("");
  double exp_se = std::nan("");
  Index clip_count = 0;
  bool converged = false;
  bool near_boundary = false;
  int inner_iterations = 0;
  Findings findings;
};

GelFit minimize_beta(const MomentMatrix& M, RhoFamily family, const GelOptions& options = {});

/// Fills curvature, variance, standard error and intervals of a fit from minimize_beta.
GelFit variance(const MomentMatrix& M, GelFit fit, RhoFamily family, const GelOptions& options = {});

/// minimize_beta followed by variance.
GelFit fit_gel(const MomentMatrix& M, RhoFamily family, const GelOptions& options = {});

}  // namespace igsaft
