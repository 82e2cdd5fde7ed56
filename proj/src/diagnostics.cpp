#include "igsaft/diagnostics.hpp"

#include "igsaft/rng.hpp"

#include <cmath>

namespace igsaft {

std::string to_string(TestKind kind) {
  return kind == TestKind::relevance_f ? "relevance_F" : "overidentification";
}

TestResult relevance_f_test(const Dataset& dataset, const MomentSpec& spec, RobustCovariance covariance) {
  const Index n = dataset.n();
  const Index p = dataset.p();
  const Index m = spec.m();
  const Index k = 1 + p + m;
  if (n <= k) throw IllPosedError("relevance test needs more observations than regressors");

  MatrixXd x(n, k);
  x.col(0).setOnes();
  x.middleCols(1, p) = dataset.z();
  const VectorXd zeta = dataset.z().colwise().mean().transpose();
  x.rightCols(m) = centered_design(dataset.z(), zeta, spec);

  MatrixXd xtx = MatrixXd::Zero(k, k);
  xtx.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  xtx = xtx.selfadjointView<Eigen::Lower>();
  Eigen::LDLT<MatrixXd> ldlt(xtx);
  const double tiny = 1e-12 * xtx.diagonal().maxCoeff();
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= tiny) {
    xtx.diagonal().array() += 1e-8 * std::max(1.0, xtx.diagonal().mean());
    ldlt.compute(xtx);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
      throw EstimationError("relevance test design is singular");
    }
  }
  const VectorXd coef = ldlt.solve(x.transpose() * dataset.d());
  VectorXd resid = dataset.d() - x * coef;
  const MatrixXd bread = ldlt.solve(MatrixXd::Identity(k, k));
  if (covariance == RobustCovariance::hc3) {
    const VectorXd leverage = ((x * bread).array() * x.array()).rowwise().sum();
    resid = resid.array() / (1.0 - leverage.array()).max(1e-12);
  }
  const MatrixXd scaled = x.array().colwise() * resid.array();
  MatrixXd meat = MatrixXd::Zero(k, k);
  meat.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
  meat = meat.selfadjointView<Eigen::Lower>();
  const MatrixXd vcov = bread * meat * bread;

  const VectorXd b = coef.tail(m);
  const MatrixXd v = vcov.bottomRightCorner(m, m);
  const double wald = b.dot(v.ldlt().solve(b));
  if (!std::isfinite(wald)) throw EstimationError("relevance test statistic is not finite");

  TestResult out;
  out.kind = TestKind::relevance_f;
  out.statistic = std::max(wald, 0.0);
  out.df1 = static_cast<double>(m);
  out.df2 = static_cast<double>(n - k);
  out.p_value = chi2_sf(out.statistic, out.df1);
  return out;
}

TestResult overid_test(const GelFit& fit, Index n, Index m) {
  if (m < 2) throw DomainError("overidentification test undefined with one moment (just identified)");
  TestResult out;
  out.kind = TestKind::overidentification;
  out.statistic = std::max(0.0, 2.0 * static_cast<double>(n) * fit.q_hat);
  out.df1 = static_cast<double>(m - 1);
  out.p_value = chi2_sf(out.statistic, out.df1);
  return out;
}

}  // namespace igsaft
