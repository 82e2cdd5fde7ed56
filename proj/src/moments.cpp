#include "igsaft/moments.hpp"

#include "igsaft/parallel.hpp"
#include "igsaft/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>

namespace igsaft {

namespace {
constexpr std::uint64_t kFoldStream = 0xf01d;
constexpr Index kBlock = 1024;
}  // namespace

FoldAssignment FoldAssignment::random_halving(Index n, std::uint64_t seed) {
  Rng rng(substream_seed(seed, kFoldStream));
  const auto perm = rng.permutation(static_cast<int>(n));
  FoldAssignment out;
  out.fold_of.assign(static_cast<std::size_t>(n), 1);
  for (Index r = 0; r < n / 2; ++r) out.fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])] = 0;
  return out;
}

std::vector<Index> FoldAssignment::members(int fold) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(static_cast<Index>(i));
  }
  return out;
}

Index FoldAssignment::size(int fold) const {
  return static_cast<Index>(std::count(fold_of.begin(), fold_of.end(), fold));
}

namespace {

AffineMoment<double> eval_g_parts(const Observation& obs, const NuisanceFit& nuis, const MomentSpec& spec,
                                  VectorXd& inter, VectorXd& fitted_y) {
  inter = eval_centered(obs.z, nuis.zeta, spec);
  fitted_y.resize(spec.m());
  AffineMoment<double> out = AffineMoment<double>::zero(spec.m());
  for (int k : spec.orders()) {
    const PartialFit& fit = nuis.partial(k);
    const VectorXd v = vk_row(obs.z, k);
    const double fy = v.dot(fit.theta_y);
    const double rd = obs.d - v.dot(fit.theta_d);
    for (Index t = 0; t < spec.m(); ++t) {
      if (spec[t].order() != k) continue;
      fitted_y(t) = fy;
      out.a(t) = inter(t) * (obs.y - fy);
      out.b(t) = -inter(t) * rd;
    }
  }
  return out;
}

}  // namespace

AffineMoment<double> eval_g(const Observation& obs, const NuisanceFit& nuis, const MomentSpec& spec) {
  VectorXd inter, fitted;
  return eval_g_parts(obs, nuis, spec, inter, fitted);
}

AffineMoment<double> eval_psi(const Observation& obs, const NuisanceFit& nuis, const MomentSpec& spec,
                              CensoringTerms* terms) {
  VectorXd inter, fitted;
  const AffineMoment<double> g = eval_g_parts(obs, nuis, spec, inter, fitted);
  const CensoringTerms t = expand_terms(nuis.cond_moment->terms(obs.z, obs.d, obs.y), inter, fitted, g);
  if (terms != nullptr) *terms = t;
  return combine_aipcw(g, obs.delta, t);
}

void check_fold_sizes(const FoldAssignment& folds, int p, int q) {
  const Index need = vk_width(p, q) + 2;
  for (int f = 0; f < 2; ++f) {
    if (folds.size(f) < need) {
      throw IllPosedError("fold " + std::to_string(f) + " has " + std::to_string(folds.size(f)) +
                          " observations; at least " + std::to_string(need) + " are needed");
    }
  }
}

MomentMatrix build_moment_matrix(const Dataset& dataset, const FoldAssignment& folds,
                                 const std::array<const NuisanceFit*, 2>& nuisances, const MomentSpec& spec,
                                 const MomentBuildOptions& options, MomentDiagnostics* diagnostics) {
  if (static_cast<Index>(folds.fold_of.size()) != dataset.n()) {
    throw DomainError("fold assignment does not cover the dataset");
  }
  int max_order = 2;
  for (int k : spec.orders()) max_order = std::max(max_order, k);
  check_fold_sizes(folds, spec.p(), max_order);

  const Index m = spec.m();
  MomentMatrix M{MatrixXd(dataset.n(), m), MatrixXd(dataset.n(), m), spec, VectorXi(dataset.n())};
  MomentDiagnostics total;
  std::mutex total_mutex;

  for (int f = 0; f < 2; ++f) {
    const std::vector<Index> rows = folds.members(f);
    const Dataset sub = dataset.subset(rows);
    const NuisanceFit& nuis = *nuisances[static_cast<std::size_t>(1 - f)];
    MatrixXd ga, gb, inter, fitted;
    eval_g_rows(sub, nuis.zeta, nuis.partials, spec, ga, gb, &inter, &fitted);
    const auto count = static_cast<Index>(rows.size());

    parallel_for(count, options.threads, [&](Index begin, Index end) {
      MomentDiagnostics local;
      CensorModel::Curve scratch;
      VectorXd z(sub.p());
      for (Index r = begin; r < end; ++r) {
        const Index i = rows[static_cast<std::size_t>(r)];
        M.fold_tags(i) = f;
        if (!options.censoring_adjustment) {
          M.a.row(i) = ga.row(r);
          M.b.row(i) = gb.row(r);
          continue;
        }
        z = sub.z().row(r).transpose();
        WeightStatus status;
        const MeanTerms s = nuis.cond_moment->terms(z.data(), sub.d()(r), sub.y()(r), scratch, &status);
        const AffineMoment<double> g{ga.row(r).transpose(), gb.row(r).transpose()};
        const CensoringTerms t = expand_terms(s, inter.row(r).transpose(), fitted.row(r).transpose(), g);
        const AffineMoment<double> psi = combine_aipcw(g, sub.delta()(r), t);
        M.a.row(i) = psi.a.transpose();
        M.b.row(i) = psi.b.transpose();
        local.g_clipped += (t.g_clipped && sub.delta()(r) == 1) ? 1 : 0;
        local.grid_clipped += t.grid_clipped;
        local.carry_forward += t.carry_forward ? 1 : 0;
        local.empty_risk_set += t.empty_risk_set ? 1 : 0;
        local.kernel_widened += status.widenings > 0 ? 1 : 0;
        local.kernel_uniform_fallback += status.uniform_fallback ? 1 : 0;
      }
      const std::lock_guard<std::mutex> lock(total_mutex);
      total.g_clipped += local.g_clipped;
      total.grid_clipped += local.grid_clipped;
      total.carry_forward += local.carry_forward;
      total.empty_risk_set += local.empty_risk_set;
      total.kernel_widened += local.kernel_widened;
      total.kernel_uniform_fallback += local.kernel_uniform_fallback;
    });
  }
  if (!M.a.allFinite() || !M.b.allFinite()) throw EstimationError("moment evaluation produced non-finite values");
  if (diagnostics != nullptr) *diagnostics = total;
  return M;
}

void write_moments_csv(const std::string& path, const MomentMatrix& M) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  auto num = [](double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, ptr);
  };
  out << "fold";
  for (Index t = 0; t < M.m(); ++t) out << ",a" << t + 1;
  for (Index t = 0; t < M.m(); ++t) out << ",b" << t + 1;
  out << '\n';
  for (Index i = 0; i < M.n(); ++i) {
    out << M.fold_tags(i);
    for (Index t = 0; t < M.m(); ++t) out << ',' << num(M.a(i, t));
    for (Index t = 0; t < M.m(); ++t) out << ',' << num(M.b(i, t));
    out << '\n';
  }
}

ProbeCurve orthogonality_probe(const Dataset& dataset, const NuisanceOracle& oracle, const MomentSpec& spec,
                               std::span<const double> t_grid, int threads) {
  const Index n = dataset.n();
  const Index m = spec.m();
  const auto grid = static_cast<Index>(t_grid.size());
  const double beta0 = oracle.beta0();
  const Index blocks = (n + kBlock - 1) / kBlock;
  // Per block: sums of psi(t) for each grid point, of psi(t) - psi(0), and of psi(0)^2.
  std::vector<MatrixXd> sums(static_cast<std::size_t>(blocks));
  std::vector<MatrixXd> diffs(static_cast<std::size_t>(blocks));
  std::vector<VectorXd> squares(static_cast<std::size_t>(blocks));
  parallel_for(blocks, threads, [&](Index begin, Index end) {
    for (Index blk = begin; blk < end; ++blk) {
      MatrixXd s = MatrixXd::Zero(m, grid);
      MatrixXd dsum = MatrixXd::Zero(m, grid);
      VectorXd sq = VectorXd::Zero(m);
      for (Index i = blk * kBlock; i < std::min(n, (blk + 1) * kBlock); ++i) {
        const Observation obs = dataset.observation(i);
        const VectorXd base = oracle.psi(obs, spec, 0.0).at(beta0);
        sq += base.cwiseAbs2();
        for (Index g = 0; g < grid; ++g) {
          const double t = t_grid[static_cast<std::size_t>(g)];
          const VectorXd v = t == 0.0 ? base : oracle.psi(obs, spec, t).at(beta0);
          s.col(g) += v;
          dsum.col(g) += v - base;
        }
      }
      sums[static_cast<std::size_t>(blk)] = std::move(s);
      diffs[static_cast<std::size_t>(blk)] = std::move(dsum);
      squares[static_cast<std::size_t>(blk)] = std::move(sq);
    }
  });
  MatrixXd s = MatrixXd::Zero(m, grid);
  MatrixXd dsum = MatrixXd::Zero(m, grid);
  VectorXd sq = VectorXd::Zero(m);
  for (Index blk = 0; blk < blocks; ++blk) {
    s += sums[static_cast<std::size_t>(blk)];
    dsum += diffs[static_cast<std::size_t>(blk)];
    sq += squares[static_cast<std::size_t>(blk)];
  }
  ProbeCurve out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index g = 0; g < grid; ++g) {
    out.t.push_back(t_grid[static_cast<std::size_t>(g)]);
    out.mean.push_back(s.col(g) * inv_n);
    out.norm.push_back((s.col(g) * inv_n).norm());
    out.centered_norm.push_back((dsum.col(g) * inv_n).norm());
  }
  // Standard deviation at the zero-perturbation point, using the t = 0 column when present.
  VectorXd mean0 = VectorXd::Zero(m);
  for (Index g = 0; g < grid; ++g) {
    if (t_grid[static_cast<std::size_t>(g)] == 0.0) mean0 = s.col(g) * inv_n;
  }
  out.sd0 = (sq * inv_n - mean0.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  return out;
}

double loglog_slope(std::span<const double> t, std::span<const double> v) {
  if (t.size() != v.size() || t.size() < 2) throw DomainError("slope needs at least two matching points");
  const auto k = static_cast<Index>(t.size());
  VectorXd x(k), y(k);
  for (Index i = 0; i < k; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    const double vi = v[static_cast<std::size_t>(i)];
    if (!(ti > 0.0) || !(vi > 0.0)) throw DomainError("log-log slope needs positive values");
    x(i) = std::log(ti);
    y(i) = std::log(vi);
  }
  const double xm = x.mean();
  const double ym = y.mean();
  return ((x.array() - xm) * (y.array() - ym)).sum() / (x.array() - xm).square().sum();
}

}  // namespace igsaft
