#pragma once

#include "igsaft/core.hpp"
#include "igsaft/data.hpp"

#include <vector>

namespace igsaft {

/// Sorted set of distinct 0-based instrument positions; order() = |subset|.
struct InteractionIndex {
  std::vector<int> subset;

  int order() const noexcept { return static_cast<int>(subset.size()); }
  friend bool operator==(const InteractionIndex&, const InteractionIndex&) = default;
};

/// Binomial coefficient C(n, k) as a 64-bit integer.
long long binomial(int n, int k);

/// All size-k subsets of {0..p-1} in lexicographic order.
std::vector<InteractionIndex> enumerate_subsets(int p, int k);

/// Number of interaction terms of orders 2..q among p instruments.
long long interaction_count(int p, int q);

/**
 * Ordered interaction terms defining the moment vector.
 *
 * Orders are ascending and subsets lexicographic within an order.
 */
class MomentSpec {
 public:
  MomentSpec(int p, int q, std::vector<InteractionIndex> indices);

  /// Every interaction of orders 2..q.
  static MomentSpec full(int p, int q);

  int p() const noexcept { return p_; }
  int q() const noexcept { return q_; }
  Index m() const noexcept { return static_cast<Index>(indices_.size()); }
  const std::vector<InteractionIndex>& indices() const noexcept { return indices_; }
  const InteractionIndex& operator[](Index t) const { return indices_[static_cast<std::size_t>(t)]; }

  /// Distinct orders present, ascending.
  std::vector<int> orders() const;

  /// Sub-spec keeping the given positions (sorted, distinct).
  MomentSpec restrict(const std::vector<Index>& positions) const;

  friend bool operator==(const MomentSpec&, const MomentSpec&) = default;

 private:
  int p_;
  int q_;
  std::vector<InteractionIndex> indices_;
};

/// Component t is the product of (z_j - zeta_j) over j in spec[t].
template <typename DerivedZ, typename DerivedZeta>
VectorX<typename DerivedZ::Scalar> eval_centered(const Eigen::MatrixBase<DerivedZ>& z,
                                                 const Eigen::MatrixBase<DerivedZeta>& zeta, const MomentSpec& spec) {
  using Scalar = typename DerivedZ::Scalar;
  if (z.size() != spec.p() || zeta.size() != spec.p()) {
    throw DomainError("instrument vector length does not match the moment spec");
  }
  VectorX<Scalar> out(spec.m());
  for (Index t = 0; t < spec.m(); ++t) {
    Scalar prod(1);
    for (int j : spec[t].subset) prod *= z(j) - zeta(j);
    out(t) = prod;
  }
  return out;
}

/// n x m matrix of centered interactions, one row per dataset row.
MatrixXd centered_design(const MatrixXd& z, const VectorXd& zeta, const MomentSpec& spec);

/// Width of V_k: 1 + sum_{j=1}^{k-1} C(p, j).
Index vk_width(int p, int k);

/// Row [1, raw interactions of orders 1..k-1] for a single instrument vector.
template <typename DerivedZ>
VectorX<typename DerivedZ::Scalar> vk_row(const Eigen::MatrixBase<DerivedZ>& z, int k) {
  using Scalar = typename DerivedZ::Scalar;
  const int p = static_cast<int>(z.size());
  VectorX<Scalar> out(vk_width(p, k));
  out(0) = Scalar(1);
  Index col = 1;
  for (int order = 1; order < k; ++order) {
    for (const auto& idx : enumerate_subsets(p, order)) {
      Scalar prod(1);
      for (int j : idx.subset) prod *= z(j);
      out(col++) = prod;
    }
  }
  return out;
}

/// Partialling design V_k, n x vk_width(p, k).
MatrixXd build_vk(const MatrixXd& z, int k);
MatrixXd build_vk(const Dataset& dataset, int k);

}  // namespace igsaft
