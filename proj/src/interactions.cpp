#include "igsaft/interactions.hpp"

#include <algorithm>
#include <string>

namespace igsaft {

long long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long out = 1;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

std::vector<InteractionIndex> enumerate_subsets(int p, int k) {
  if (k < 1 || k > p) {
    throw DomainError("subset order " + std::to_string(k) + " outside 1.." + std::to_string(p));
  }
  std::vector<InteractionIndex> out;
  out.reserve(static_cast<std::size_t>(binomial(p, k)));
  std::vector<int> current(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) current[static_cast<std::size_t>(i)] = i;
  while (true) {
    out.push_back({current});
    int i = k - 1;
    while (i >= 0 && current[static_cast<std::size_t>(i)] == p - k + i) --i;
    if (i < 0) break;
    ++current[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) current[static_cast<std::size_t>(j)] = current[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

long long interaction_count(int p, int q) {
  if (q < 2 || q > p) throw DomainError("interaction order q must satisfy 2 <= q <= p");
  long long total = 0;
  for (int k = 2; k <= q; ++k) total += binomial(p, k);
  return total;
}

MomentSpec::MomentSpec(int p, int q, std::vector<InteractionIndex> indices) : p_(p), q_(q), indices_(std::move(indices)) {
  if (q < 2 || q > p) throw DomainError("interaction order q must satisfy 2 <= q <= p");
  if (indices_.empty()) throw DomainError("moment spec must contain at least one interaction");
  for (std::size_t t = 0; t < indices_.size(); ++t) {
    const auto& s = indices_[t].subset;
    const int k = indices_[t].order();
    if (k < 2 || k > q) throw DomainError("interaction order outside 2..q");
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] < 0 || s[j] >= p) throw DomainError("instrument position out of range");
      if (j > 0 && s[j] <= s[j - 1]) throw DomainError("interaction subset not strictly increasing");
    }
    if (t > 0) {
      const auto& prev = indices_[t - 1];
      const bool ordered = prev.order() < k || (prev.order() == k && prev.subset < s);
      if (!ordered) throw DomainError("moment spec is not in canonical order");
    }
  }
}

MomentSpec MomentSpec::full(int p, int q) {
  if (q < 2 || q > p) throw DomainError("interaction order q must satisfy 2 <= q <= p");
  std::vector<InteractionIndex> all;
  for (int k = 2; k <= q; ++k) {
    auto level = enumerate_subsets(p, k);
    all.insert(all.end(), level.begin(), level.end());
  }
  return MomentSpec(p, q, std::move(all));
}

std::vector<int> MomentSpec::orders() const {
  std::vector<int> out;
  for (const auto& idx : indices_) {
    if (out.empty() || out.back() != idx.order()) out.push_back(idx.order());
  }
  return out;
}

MomentSpec MomentSpec::restrict(const std::vector<Index>& positions) const {
  std::vector<InteractionIndex> kept;
  kept.reserve(positions.size());
  for (Index t : positions) {
    if (t < 0 || t >= m()) throw DomainError("restriction position out of range");
    kept.push_back(indices_[static_cast<std::size_t>(t)]);
  }
  return MomentSpec(p_, q_, std::move(kept));
}

MatrixXd centered_design(const MatrixXd& z, const VectorXd& zeta, const MomentSpec& spec) {
  if (z.cols() != spec.p() || zeta.size() != spec.p()) {
    throw DomainError("instrument dimension does not match the moment spec");
  }
  const MatrixXd centered = z.rowwise() - zeta.transpose();
  MatrixXd out(z.rows(), spec.m());
  for (Index t = 0; t < spec.m(); ++t) {
    const auto& s = spec[t].subset;
    out.col(t) = centered.col(s[0]);
    for (std::size_t j = 1; j < s.size(); ++j) out.col(t).array() *= centered.col(s[j]).array();
  }
  return out;
}

Index vk_width(int p, int k) {
  if (k < 2 || k > p) throw DomainError("partialling order k must satisfy 2 <= k <= p");
  long long w = 1;
  for (int j = 1; j < k; ++j) w += binomial(p, j);
  return static_cast<Index>(w);
}

MatrixXd build_vk(const MatrixXd& z, int k) {
  const int p = static_cast<int>(z.cols());
  MatrixXd out(z.rows(), vk_width(p, k));
  out.col(0).setOnes();
  Index col = 1;
  for (int order = 1; order < k; ++order) {
    for (const auto& idx : enumerate_subsets(p, order)) {
      out.col(col) = z.col(idx.subset[0]);
      for (std::size_t j = 1; j < idx.subset.size(); ++j) out.col(col).array() *= z.col(idx.subset[j]).array();
      ++col;
    }
  }
  return out;
}

MatrixXd build_vk(const Dataset& dataset, int k) { return build_vk(dataset.z(), k); }

}  // namespace igsaft
