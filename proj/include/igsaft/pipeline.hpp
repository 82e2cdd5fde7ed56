#pragma once

#include "igsaft/core.hpp"
#include "igsaft/data.hpp"
#include "igsaft/diagnostics.hpp"
#include "igsaft/gel.hpp"
#include "igsaft/moments.hpp"
#include "igsaft/nuisance.hpp"
#include "igsaft/screening.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace igsaft {

enum class ScreenStage { pre, post };

struct FitConfig {
  int q = 2;
  RhoFamily family = RhoFamily::el;
  KernelConfig kernel;
  bool screen = true;
  Index max_keep = 100;
  ScreenStage screen_stage = ScreenStage::pre;
  double lower = -10.0;
  double upper = 10.0;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  RobustCovariance covariance = RobustCovariance::hc0;
  /// Debug switches: train nuisances on all rows, or use the uncensored moment g.
  bool cross_fit = true;
  bool censoring_adjustment = true;
  int threads = 1;

  void check(Index p) const;
  GelOptions gel_options() const;
};

/// Everything that does not depend on the GEL family.
struct PreparedMoments {
  MomentMatrix moments;
  std::optional<ScreenResult> screen;
  TestResult relevance;
  FoldAssignment folds;
  std::array<Index, 2> fold_sizes{};
  std::array<double, 2> bandwidths{};
  KmConditioning conditioning = KmConditioning::full;
  MomentDiagnostics moment_diagnostics;
  Findings findings;
};

struct FitReport {
  GelFit gel;
  std::optional<ScreenResult> screen;
  TestResult relevance;
  std::optional<TestResult> overid;
  std::array<Index, 2> fold_sizes{};
  std::array<double, 2> bandwidths{};
  KmConditioning conditioning = KmConditioning::full;
  MomentDiagnostics moment_diagnostics;
  MomentSpec spec;
  Findings findings;
};

PreparedMoments prepare_moments(const Dataset& dataset, const FitConfig& config);

FitReport estimate(const PreparedMoments& prepared, const FitConfig& config);

/// Fold split, cross-fitted nuisances, screening, GEL fit, variance and diagnostics.
FitReport fit_igsaft(const Dataset& dataset, const FitConfig& config);

struct EffectPrediction {
  double ratio = 1.0;
  double se = 0.0;
};

/// Time ratio exp(beta * delta_d) with its delta-method standard error.
EffectPrediction predict_effect(const GelFit& fit, double delta_d);

}  // namespace igsaft
