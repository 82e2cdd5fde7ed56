#include "igsaft/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace igsaft {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// Coordinate descent for (1/2) b'Gb - r'b + lambda * sum_j w_j |b_j|, warm-started at coef.
void coordinate_descent(const MatrixXd& gram, const VectorXd& r, const VectorXd& w, double lambda, VectorXd& coef,
                        VectorXd& gb, const ScreenOptions& options) {
  const Index P = gram.rows();
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < P; ++j) {
      const double gjj = gram(j, j);
      if (!(gjj > 0.0)) continue;
      const double partial = r(j) - gb(j) + gjj * coef(j);
      const double updated = soft_threshold(partial, lambda * w(j)) / gjj;
      const double change = updated - coef(j);
      if (change != 0.0) {
        gb.noalias() += change * gram.col(j);
        coef(j) = updated;
        max_change = std::max(max_change, std::abs(change) * std::sqrt(gjj));
      }
    }
    if (max_change < options.tol) break;
  }
}

}  // namespace

ScreenResult screen_interactions(const Dataset& dataset, const MomentSpec& candidates, const ScreenOptions& options) {
  if (candidates.m() == 0) throw DomainError("screening needs at least one candidate");
  if (candidates.m() > kMaxScreenCandidates) {
    throw DomainError("screening supports at most " + std::to_string(kMaxScreenCandidates) + " candidates");
  }
  if (options.max_keep < 1) throw DomainError("max_keep must be at least 1");
  const Index n = dataset.n();
  const Index p = dataset.p();
  const Index m = candidates.m();
  const Index P = p + m;
  const auto dn = static_cast<double>(n);

  MatrixXd x(n, P);
  x.leftCols(p) = dataset.z();
  const VectorXd zeta = dataset.z().colwise().mean().transpose();
  x.rightCols(m) = centered_design(dataset.z(), zeta, candidates);
  const VectorXd means = x.colwise().mean().transpose();
  x.rowwise() -= means.transpose();
  const VectorXd dc = dataset.d().array() - dataset.d().mean();

  MatrixXd gram = MatrixXd::Zero(P, P);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / dn);
  gram = gram.selfadjointView<Eigen::Lower>();
  const VectorXd r = x.transpose() * dc / dn;

  // Ridge pilot with penalty ridge_scale * n on the unnormalized normal equations.
  MatrixXd ridge = gram;
  ridge.diagonal().array() += options.ridge_scale;
  const VectorXd pilot_all = ridge.ldlt().solve(r);
  const VectorXd pilot = pilot_all.tail(m);

  VectorXd w = VectorXd::Zero(P);
  w.tail(m) = (pilot.array().abs() + 1e-8).inverse();

  // Start from the unpenalized fit on Z alone.
  VectorXd coef = VectorXd::Zero(P);
  coef.head(p) = gram.topLeftCorner(p, p).ldlt().solve(r.head(p));
  VectorXd gb = gram * coef;
  const VectorXd partial = r - gb;
  double lambda_max = 0.0;
  for (Index t = 0; t < m; ++t) lambda_max = std::max(lambda_max, std::abs(partial(p + t)) / w(p + t));
  if (!(lambda_max > 0.0)) lambda_max = 1e-12;

  std::vector<std::pair<double, Index>> path;
  std::vector<double> bic;
  std::vector<VectorXd> coefs;
  const int L = options.path_points;
  for (int l = 0; l < L; ++l) {
    const double lambda = lambda_max * std::pow(options.path_ratio, static_cast<double>(l) / (L - 1));
    coordinate_descent(gram, r, w, lambda, coef, gb, options);
    Index support = 0;
    for (Index t = 0; t < m; ++t) support += coef(p + t) != 0.0 ? 1 : 0;
    const double rss = (dc - x * coef).squaredNorm();
    const double df = static_cast<double>(1 + p + support);
    path.emplace_back(lambda, support);
    bic.push_back(dn * std::log(std::max(rss, 1e-300) / dn) + df * std::log(dn));
    coefs.push_back(coef.tail(m));
  }
  const auto chosen = static_cast<std::size_t>(std::min_element(bic.begin(), bic.end()) - bic.begin());
  const VectorXd& beta = coefs[chosen];

  std::vector<Index> positions;
  for (Index t = 0; t < m; ++t) {
    if (beta(t) != 0.0) positions.push_back(t);
  }
  auto keep_largest = [](std::vector<Index> idx, const VectorXd& score, Index keep) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Index l, Index r) { return std::abs(score(l)) > std::abs(score(r)); });
    if (static_cast<Index>(idx.size()) > keep) idx.resize(static_cast<std::size_t>(keep));
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  bool fallback = false;
  if (m == 1) {
    positions = {0};
  } else if (positions.empty()) {
    fallback = true;
    std::vector<Index> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), Index{0});
    positions = keep_largest(all, pilot, std::min<Index>(options.max_keep, 10));
  } else {
    positions = keep_largest(positions, beta, options.max_keep);
  }

  ScreenResult out{candidates.restrict(positions), positions, pilot, beta, path[chosen].first, path, bic, fallback};
  return out;
}

}  // namespace igsaft
