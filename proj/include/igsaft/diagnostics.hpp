#pragma once

#include "igsaft/core.hpp"
#include "igsaft/data.hpp"
#include "igsaft/gel.hpp"
#include "igsaft/interactions.hpp"

#include <string>

namespace igsaft {

enum class TestKind { relevance_f, overidentification };
enum class RobustCovariance { hc0, hc3 };

struct TestResult {
  TestKind kind = TestKind::relevance_f;
  /// Wald chi-squared statistic (relevance) or 2 n Q (overidentification).
  double statistic = 0.0;
  double df1 = 0.0;
  /// Residual degrees of freedom for the F form; NaN for chi-squared tests.
  double df2 = std::nan("");
  double p_value = 1.0;

  /// statistic / df1, the F-scale value.
  double f_statistic() const { return statistic / df1; }
};

std::string to_string(TestKind kind);

/**
 * Robust Wald test that every interaction coefficient is zero in the regression
 * of D on [1, Z, centered interactions], referred to chi-squared(m).
 */
TestResult relevance_f_test(const Dataset& dataset, const MomentSpec& spec,
                            RobustCovariance covariance = RobustCovariance::hc0);

/// 2 n Q(beta_hat) against chi-squared(m - 1).
TestResult overid_test(const GelFit& fit, Index n, Index m);

}  // namespace igsaft
