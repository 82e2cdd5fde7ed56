#pragma once

#include "igsaft/core.hpp"

namespace igsaft {

/// Moment vector that is affine in beta: value(beta) = a + b * beta.
template <typename Scalar>
struct AffineMoment {
  VectorX<Scalar> a;
  VectorX<Scalar> b;

  AffineMoment() = default;
  AffineMoment(VectorX<Scalar> a_, VectorX<Scalar> b_) : a(std::move(a_)), b(std::move(b_)) {}

  static AffineMoment zero(Index m) { return {VectorX<Scalar>::Zero(m), VectorX<Scalar>::Zero(m)}; }

  Index size() const noexcept { return a.size(); }
  VectorX<Scalar> at(Scalar beta) const { return a + beta * b; }

  AffineMoment& operator+=(const AffineMoment& o) {
    a += o.a;
    b += o.b;
    return *this;
  }
  friend AffineMoment operator+(AffineMoment l, const AffineMoment& r) { return l += r; }
  friend AffineMoment operator-(const AffineMoment& l, const AffineMoment& r) { return {l.a - r.a, l.b - r.b}; }
  friend AffineMoment operator*(Scalar s, const AffineMoment& x) { return {s * x.a, s * x.b}; }
};

/**
 * Censoring-side pieces of the augmented moment for one observation.
 *
 * psi = delta / G(Y) * (g - xi(Y)) + xi(-inf) + integral, where integral is the
 * Stieltjes integral of 1/G against the step function xi over (-inf, Y).
 */
struct CensoringTerms {
  double g_at_y = 1.0;
  AffineMoment<double> xi_at_y;
  AffineMoment<double> xi_minus_inf;
  AffineMoment<double> integral;
  bool g_clipped = false;
  Index grid_clipped = 0;
  bool carry_forward = false;
  bool empty_risk_set = false;
};

template <typename Scalar>
AffineMoment<Scalar> combine_aipcw(const AffineMoment<Scalar>& g, int delta, const CensoringTerms& t) {
  AffineMoment<Scalar> out{t.xi_minus_inf.a.template cast<Scalar>() + t.integral.a.template cast<Scalar>(),
                           t.xi_minus_inf.b.template cast<Scalar>() + t.integral.b.template cast<Scalar>()};
  if (delta == 1) {
    const Scalar w = Scalar(1) / Scalar(t.g_at_y);
    out.a += w * (g.a - t.xi_at_y.a.template cast<Scalar>());
    out.b += w * (g.b - t.xi_at_y.b.template cast<Scalar>());
  }
  return out;
}

}  // namespace igsaft
