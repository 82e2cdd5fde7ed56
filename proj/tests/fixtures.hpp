#pragma once

#include "igsaft/data.hpp"
#include "igsaft/rng.hpp"

#include <cmath>
#include <filesystem>
#include <string>

namespace igsaft::testing {

/// Linear model with a pairwise exposure interaction and optional uniform censoring.
inline Dataset toy_dataset(Index n, Index p, std::uint64_t seed, double censor_lo = INFINITY,
                           double censor_hi = INFINITY, double beta = 1.0) {
  Rng rng(seed);
  MatrixXd z(n, p);
  VectorXd d(n), y(n);
  VectorXi delta(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    const double nu = rng.normal(0.0, std::sqrt(0.4));
    double dd = nu;
    for (Index j = 0; j < p; ++j) dd += 0.5 * z(i, j);
    if (p >= 2) dd += 0.8 * z(i, 0) * z(i, 1);
    const double t = beta * dd + 0.2 * z(i, 0) + 0.5 * nu + rng.normal(0.0, std::sqrt(0.3));
    d(i) = dd;
    if (std::isfinite(censor_lo)) {
      const double c = rng.uniform(censor_lo, censor_hi);
      y(i) = std::min(t, c);
      delta(i) = t <= c ? 1 : 0;
    } else {
      y(i) = t;
      delta(i) = 1;
    }
  }
  return Dataset(std::move(z), std::move(d), std::move(y), std::move(delta));
}

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::path(IGSAFT_TEST_TMP) / name).string();
}

}  // namespace igsaft::testing
