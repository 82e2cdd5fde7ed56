#pragma once

#include "igsaft/affine.hpp"
#include "igsaft/core.hpp"
#include "igsaft/data.hpp"
#include "igsaft/interactions.hpp"
#include "igsaft/nuisance.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace igsaft {

/// Two-fold partition of the rows; fold_of[i] is 0 or 1.
struct FoldAssignment {
  std::vector<int> fold_of;

  static FoldAssignment random_halving(Index n, std::uint64_t seed);
  std::vector<Index> members(int fold) const;
  Index size(int fold) const;
};

/// Evaluated moments in affine form: row i is psi_i(beta) = a.row(i) + beta * b.row(i).
struct MomentMatrix {
  MatrixXd a;
  MatrixXd b;
  MomentSpec spec;
  VectorXi fold_tags;

  Index n() const noexcept { return a.rows(); }
  Index m() const noexcept { return a.cols(); }
  AffineMoment<double> row(Index i) const { return {a.row(i).transpose(), b.row(i).transpose()}; }
  MatrixXd at(double beta) const { return a + beta * b; }
};

struct MomentBuildOptions {
  bool censoring_adjustment = true;
  int threads = 1;
};

/// Counters gathered while evaluating the censoring terms.
struct MomentDiagnostics {
  Index g_clipped = 0;
  Index grid_clipped = 0;
  Index carry_forward = 0;
  Index empty_risk_set = 0;
  Index kernel_widened = 0;
  Index kernel_uniform_fallback = 0;
};

AffineMoment<double> eval_g(const Observation& obs, const NuisanceFit& nuis, const MomentSpec& spec);

AffineMoment<double> eval_psi(const Observation& obs, const NuisanceFit& nuis, const MomentSpec& spec,
                              CensoringTerms* terms = nullptr);

/// Throws IllPosedError when a fold is too small for the order-q partialling design.
void check_fold_sizes(const FoldAssignment& folds, int p, int q);

/// Row i is evaluated with nuisances[1 - fold_of[i]].
MomentMatrix build_moment_matrix(const Dataset& dataset, const FoldAssignment& folds,
                                 const std::array<const NuisanceFit*, 2>& nuisances, const MomentSpec& spec,
                                 const MomentBuildOptions& options = {}, MomentDiagnostics* diagnostics = nullptr);

/// Sample mean and uncentered second moment of psi(beta).
template <typename Scalar>
std::pair<VectorX<Scalar>, MatrixX<Scalar>> mean_and_cov(const MomentMatrix& M, Scalar beta) {
  if (M.n() == 0) throw DomainError("moment matrix is empty");
  const MatrixX<Scalar> psi = M.a.template cast<Scalar>() + beta * M.b.template cast<Scalar>();
  const Scalar inv_n = Scalar(1) / Scalar(M.n());
  VectorX<Scalar> mean = psi.colwise().sum().transpose() * inv_n;
  MatrixX<Scalar> omega = (psi.transpose() * psi) * inv_n;
  return {std::move(mean), std::move(omega)};
}

void write_moments_csv(const std::string& path, const MomentMatrix& M);

/**
 * Known nuisance functions along a perturbation path eta0 + t * h, available
 * when the data-generating process is known.
 */
class NuisanceOracle {
 public:
  virtual ~NuisanceOracle() = default;
  virtual double beta0() const = 0;
  virtual AffineMoment<double> psi(const Observation& obs, const MomentSpec& spec, double t) const = 0;
};

struct ProbeCurve {
  std::vector<double> t;
  std::vector<VectorXd> mean;
  /// ||mean psi(beta0; t)||.
  std::vector<double> norm;
  /// ||mean psi(beta0; t) - mean psi(beta0; 0)||, same draws.
  std::vector<double> centered_norm;
  /// Per-observation standard deviation of each component at t = 0.
  VectorXd sd0;
};

ProbeCurve orthogonality_probe(const Dataset& dataset, const NuisanceOracle& oracle, const MomentSpec& spec,
                               std::span<const double> t_grid, int threads = 1);

/// Least-squares slope of log(v) on log(t).
double loglog_slope(std::span<const double> t, std::span<const double> v);

}  // namespace igsaft
