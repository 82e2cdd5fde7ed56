#include "igsaft/pipeline.hpp"

#include <cmath>
#include <string>

namespace igsaft {

void FitConfig::check(Index p) const {
  if (q < 2 || q > p) throw ValueError("interaction order q must satisfy 2 <= q <= p");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValueError("alpha must lie in (0, 1)");
  if (!(lower < upper)) throw ValueError("search interval must satisfy lower < upper");
  if (max_keep < 1) throw ValueError("max_keep must be at least 1");
  kernel.check();
}

GelOptions FitConfig::gel_options() const {
  GelOptions o;
  o.lower = lower;
  o.upper = upper;
  o.alpha = alpha;
  return o;
}

namespace {

void require_events(const Dataset& dataset, const std::vector<Index>& rows, int fold) {
  for (Index i : rows) {
    if (dataset.delta()(i) == 1) return;
  }
  throw IllPosedError("fold " + std::to_string(fold) + " contains no observed events");
}

}  // namespace

PreparedMoments prepare_moments(const Dataset& dataset, const FitConfig& config) {
  config.check(dataset.p());
  const int p = static_cast<int>(dataset.p());
  PreparedMoments out{MomentMatrix{MatrixXd(), MatrixXd(), MomentSpec::full(p, config.q), VectorXi()},
                      std::nullopt,
                      TestResult{},
                      FoldAssignment{},
                      {},
                      {},
                      KmConditioning::full,
                      {},
                      {}};
  if (dataset.n() < 200) {
    add_finding(&out.findings, "small_sample", "fewer than 200 observations; local Kaplan-Meier may be unstable");
  }

  const MomentSpec candidates = MomentSpec::full(p, config.q);
  MomentSpec spec = candidates;
  if (config.screen) {
    ScreenOptions so;
    so.max_keep = config.max_keep;
    out.screen = screen_interactions(dataset, candidates, so);
    if (out.screen->fallback) {
      add_finding(&out.findings, "screening_fallback", "screen selected nothing; kept the largest pilot coefficients");
    }
    if (config.screen_stage == ScreenStage::pre) spec = out.screen->selected;
  }

  out.folds = FoldAssignment::random_halving(dataset.n(), config.seed);
  check_fold_sizes(out.folds, p, config.q);
  std::array<std::vector<Index>, 2> members{out.folds.members(0), out.folds.members(1)};
  for (int f = 0; f < 2; ++f) {
    require_events(dataset, members[static_cast<std::size_t>(f)], f);
    out.fold_sizes[static_cast<std::size_t>(f)] = static_cast<Index>(members[static_cast<std::size_t>(f)].size());
  }

  std::array<NuisanceFit, 2> fits;
  std::array<const NuisanceFit*, 2> pointers{};
  if (config.cross_fit) {
    for (int f = 0; f < 2; ++f) {
      fits[static_cast<std::size_t>(f)] =
          fit_nuisance(dataset, members[static_cast<std::size_t>(f)], spec, config.kernel, &out.findings);
      pointers[static_cast<std::size_t>(f)] = &fits[static_cast<std::size_t>(f)];
    }
  } else {
    std::vector<Index> all(static_cast<std::size_t>(dataset.n()));
    for (Index i = 0; i < dataset.n(); ++i) all[static_cast<std::size_t>(i)] = i;
    fits[0] = fit_nuisance(dataset, all, spec, config.kernel, &out.findings);
    pointers = {&fits[0], &fits[0]};
    add_finding(&out.findings, "cross_fitting_disabled", "nuisances trained and evaluated on the same rows");
  }
  for (int f = 0; f < 2; ++f) {
    out.bandwidths[static_cast<std::size_t>(f)] = pointers[static_cast<std::size_t>(f)]->censor_model->smoother().bandwidth();
  }
  out.conditioning = pointers[0]->censor_model->smoother().conditioning();

  MomentBuildOptions mo;
  mo.censoring_adjustment = config.censoring_adjustment;
  mo.threads = config.threads;
  out.moments = build_moment_matrix(dataset, out.folds, pointers, spec, mo, &out.moment_diagnostics);

  if (config.screen && config.screen_stage == ScreenStage::post) {
    const auto& keep = out.screen->positions;
    MomentMatrix restricted{MatrixXd(dataset.n(), static_cast<Index>(keep.size())),
                            MatrixXd(dataset.n(), static_cast<Index>(keep.size())), out.screen->selected,
                            out.moments.fold_tags};
    for (std::size_t j = 0; j < keep.size(); ++j) {
      restricted.a.col(static_cast<Index>(j)) = out.moments.a.col(keep[j]);
      restricted.b.col(static_cast<Index>(j)) = out.moments.b.col(keep[j]);
    }
    out.moments = std::move(restricted);
  }

  const auto& diag = out.moment_diagnostics;
  if (diag.g_clipped > 0) {
    add_finding(&out.findings, "censoring_weight_clipped",
                std::to_string(diag.g_clipped) + " event rows had G clipped at trunc_eps");
  }
  if (diag.empty_risk_set > 0 || diag.carry_forward > 0) {
    add_finding(&out.findings, "empty_risk_set",
                std::to_string(diag.carry_forward) + " rows used carried-forward conditional moments");
  }
  if (diag.kernel_uniform_fallback > 0) {
    add_finding(&out.findings, "kernel_uniform_fallback",
                std::to_string(diag.kernel_uniform_fallback) + " kernel evaluations fell back to uniform weights");
  }

  out.relevance = relevance_f_test(dataset, out.moments.spec, config.covariance);
  return out;
}

FitReport estimate(const PreparedMoments& prepared, const FitConfig& config) {
  FitReport report{GelFit{},
                   prepared.screen,
                   prepared.relevance,
                   std::nullopt,
                   prepared.fold_sizes,
                   prepared.bandwidths,
                   prepared.conditioning,
                   prepared.moment_diagnostics,
                   prepared.moments.spec,
                   prepared.findings};
  report.gel = fit_gel(prepared.moments, config.family, config.gel_options());
  report.gel.clip_count = prepared.moment_diagnostics.g_clipped;
  for (const auto& f : report.gel.findings) report.findings.push_back(f);
  if (prepared.moments.m() >= 2) report.overid = overid_test(report.gel, prepared.moments.n(), prepared.moments.m());
  return report;
}

FitReport fit_igsaft(const Dataset& dataset, const FitConfig& config) {
  return estimate(prepare_moments(dataset, config), config);
}

EffectPrediction predict_effect(const GelFit& fit, double delta_d) {
  EffectPrediction out;
  out.ratio = std::exp(fit.beta_hat * delta_d);
  out.se = delta_d == 0.0 ? 0.0 : out.ratio * std::abs(delta_d) * fit.se;
  return out;
}

}  // namespace igsaft
