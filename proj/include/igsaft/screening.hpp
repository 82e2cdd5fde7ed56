#pragma once

#include "igsaft/core.hpp"
#include "igsaft/data.hpp"
#include "igsaft/interactions.hpp"

#include <utility>
#include <vector>

namespace igsaft {

struct ScreenResult {
  MomentSpec selected;
  /// Positions of the selected terms within the candidate spec.
  std::vector<Index> positions;
  VectorXd pilot_coefs;
  /// Interaction coefficients at the chosen penalty.
  VectorXd coefficients;
  double penalty = 0.0;
  /// (penalty, support size) along the path, penalty decreasing.
  std::vector<std::pair<double, Index>> path;
  std::vector<double> bic;
  bool fallback = false;
};

struct ScreenOptions {
  Index max_keep = 100;
  int path_points = 50;
  double path_ratio = 1e-4;
  double ridge_scale = 1e-4;
  double tol = 1e-7;
  int max_sweeps = 1000;
};

/// Largest candidate count handled by the dense Gram solver.
inline constexpr Index kMaxScreenCandidates = 10000;

/**
 * Adaptive-lasso screen of the exposure regression D ~ 1 + Z + centered candidates.
 *
 * Only interaction coefficients are penalized; the penalty is chosen by BIC.
 */
ScreenResult screen_interactions(const Dataset& dataset, const MomentSpec& candidates, const ScreenOptions& options = {});

}  // namespace igsaft
