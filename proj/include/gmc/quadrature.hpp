#pragma once

#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace gmc::quad {

// Relative (to the L1 norm) target handed to the adaptive rule.  Kernel
// integrands have L1 norms of order t, so this keeps absolute errors well
// below 1e-10.
inline constexpr double kRelativeTolerance = 1e-13;

// Adaptive 15-point Gauss-Kronrod on [a, b].  The interval is first cut into
// `panels` equal pieces so integrands with features at several scales are not
// under-sampled by the first estimate.  `max_depth` bounds the bisection when
// round-off makes the tolerance unreachable.
template <class F>
double integrate(F&& f, double a, double b, int panels = 1, unsigned max_depth = 15) {
  if (!(b > a)) return 0.0;
  using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
  double total = 0.0;
  const double width = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * width;
    const double hi = (p + 1 == panels) ? b : lo + width;
    total += Rule::integrate(f, lo, hi, max_depth, kRelativeTolerance);
  }
  return total;
}

template <class F>
double integrate_to_infinity(F&& f, double a) {
  using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
  return Rule::integrate(f, a, std::numeric_limits<double>::infinity(), 15, kRelativeTolerance);
}

}  // namespace gmc::quad
