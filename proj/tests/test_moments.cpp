#include "igsaft/moments.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

namespace igsaft {
namespace {

using testing::toy_dataset;

struct CrossFit {
  FoldAssignment folds;
  std::array<NuisanceFit, 2> fits;
  std::array<const NuisanceFit*, 2> ptrs() const { return {&fits[0], &fits[1]}; }
};

CrossFit cross_fit(const Dataset& ds, const MomentSpec& spec, const KernelConfig& cfg, std::uint64_t seed = 3) {
  CrossFit out;
  out.folds = FoldAssignment::random_halving(ds.n(), seed);
  for (int f = 0; f < 2; ++f) out.fits[static_cast<std::size_t>(f)] = fit_nuisance(ds, out.folds.members(f), spec, cfg);
  return out;
}

TEST(Folds, RandomHalvingIsBalancedAndReproducible) {
  const auto a = FoldAssignment::random_halving(101, 9);
  const auto b = FoldAssignment::random_halving(101, 9);
  const auto c = FoldAssignment::random_halving(101, 10);
  EXPECT_EQ(a.fold_of, b.fold_of);
  EXPECT_NE(a.fold_of, c.fold_of);
  EXPECT_EQ(a.size(0), 50);
  EXPECT_EQ(a.size(1), 51);
  auto members = a.members(0);
  auto rest = a.members(1);
  members.insert(members.end(), rest.begin(), rest.end());
  std::sort(members.begin(), members.end());
  for (Index i = 0; i < 101; ++i) EXPECT_EQ(members[static_cast<std::size_t>(i)], i);
}

TEST(Folds, TooSmallForPartialling) {
  const auto folds = FoldAssignment::random_halving(20, 1);
  EXPECT_THROW(check_fold_sizes(folds, 5, 3), IllPosedError);
  EXPECT_NO_THROW(check_fold_sizes(folds, 3, 2));
}

TEST(Moments, ZeroCensoringReducesToUncensoredMoment) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset ds = toy_dataset(300, 4, seed);
    const auto spec = MomentSpec::full(4, 3);
    for (auto cond : {KmConditioning::full, KmConditioning::d_only}) {
      KernelConfig cfg;
      cfg.conditioning = cond;
      const CrossFit cf = cross_fit(ds, spec, cfg, seed);
      const MomentMatrix psi = build_moment_matrix(ds, cf.folds, cf.ptrs(), spec);
      MomentBuildOptions plain;
      plain.censoring_adjustment = false;
      const MomentMatrix g = build_moment_matrix(ds, cf.folds, cf.ptrs(), spec, plain);
      EXPECT_LE((psi.a - g.a).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((psi.b - g.b).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Moments, RowsUseTheOppositeFold) {
  const Dataset ds = toy_dataset(200, 3, 21, -0.5, 3.0);
  const auto spec = MomentSpec::full(3, 2);
  KernelConfig cfg;
  const CrossFit cf = cross_fit(ds, spec, cfg);
  MomentDiagnostics diag;
  const MomentMatrix M = build_moment_matrix(ds, cf.folds, cf.ptrs(), spec, {}, &diag);
  for (Index i : {0, 5, 77, 199}) {
    const int f = cf.folds.fold_of[static_cast<std::size_t>(i)];
    EXPECT_EQ(M.fold_tags(i), f);
    const AffineMoment<double> ref = eval_psi(ds.observation(i), cf.fits[static_cast<std::size_t>(1 - f)], spec);
    EXPECT_TRUE(M.row(i).a.isApprox(ref.a, 1e-12));
    EXPECT_TRUE(M.row(i).b.isApprox(ref.b, 1e-12));
  }
}

TEST(Moments, AipcwCombinationByHand) {
  const Dataset ds = toy_dataset(200, 3, 22, -0.5, 2.5);
  const auto spec = MomentSpec::full(3, 2);
  const CrossFit cf = cross_fit(ds, spec, KernelConfig{});
  for (Index i = 0; i < 10; ++i) {
    const Observation obs = ds.observation(i);
    const NuisanceFit& nuis = cf.fits[0];
    CensoringTerms t;
    const AffineMoment<double> psi = eval_psi(obs, nuis, spec, &t);
    const AffineMoment<double> g = eval_g(obs, nuis, spec);
    VectorXd ref = t.xi_minus_inf.a + t.integral.a;
    if (obs.delta == 1) ref += (g.a - t.xi_at_y.a) / t.g_at_y;
    EXPECT_TRUE(psi.a.isApprox(ref, 1e-12));
    // The slope part does not involve the outcome, so augmentation leaves it unchanged.
    EXPECT_TRUE(psi.b.isApprox(g.b, 1e-12));
  }
}

TEST(Moments, MeanAndSecondMoment) {
  MomentMatrix M{MatrixXd::Random(50, 3), MatrixXd::Random(50, 3), MomentSpec::full(3, 2), VectorXi::Zero(50)};
  const auto [mean, omega] = mean_and_cov<double>(M, 0.7);
  const MatrixXd psi = M.at(0.7);
  EXPECT_TRUE(mean.isApprox(psi.colwise().mean().transpose(), 1e-14));
  EXPECT_TRUE(omega.isApprox(psi.transpose() * psi / 50.0, 1e-14));
}

TEST(Moments, CsvDumpLayout) {
  MomentMatrix M{MatrixXd::Ones(2, 2), MatrixXd::Zero(2, 2), MomentSpec::full(2, 2).restrict({0}), VectorXi::Zero(2)};
  M.a.resize(2, 1);
  M.b.resize(2, 1);
  M.a << 1.5, 2.5;
  M.b << -1, 0;
  M.fold_tags << 0, 1;
  const auto path = testing::temp_path("moments.csv");
  write_moments_csv(path, M);
  std::ifstream in(path);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header, "fold,a1,b1");
  EXPECT_EQ(row0, "0,1.5,-1");
  EXPECT_EQ(row1, "1,2.5,0");
}

TEST(Probe, LogLogSlopeOfPowerLaw) {
  const std::vector<double> t{0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<double> v;
  for (double x : t) v.push_back(3.0 * x * x);
  EXPECT_NEAR(loglog_slope(t, v), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope(std::vector<double>{1.0}, std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(loglog_slope(t, std::vector<double>{1, 1, 0, 1, 1}), DomainError);
}

}  // namespace
}  // namespace igsaft
