#pragma once

#include <cmath>
#include <cstddef>

#include "pwcc/errors.hpp"

namespace pwcc {

namespace detail {

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm,
                            double fb, double whole, double tol, int depth,
                            long long& budget) {
  if (budget <= 0)
    throw DomainError("QuadratureFailure",
                      "adaptive quadrature exceeded its subdivision budget");
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = f(lm);
  double frm = f(rm);
  budget -= 2;
  double h = b - a;
  double left = (h / 12.0) * (fa + 4.0 * flm + fm);
  double right = (h / 12.0) * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0)
    throw DomainError("QuadratureFailure", "adaptive quadrature hit max depth");
  if (std::fabs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, budget) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, budget);
}

}  // namespace detail

// Adaptive Simpson on [a,b]. `rel_tol` is applied against a first-pass scale
// estimate; throws QuadratureFailure when the eval budget or depth runs out.
template <typename F>
double adaptive_simpson(const F& f, double a, double b, double rel_tol = 1e-10,
                        long long budget = 2'000'000) {
  if (!(b >= a)) throw DomainError("InvalidInterval", "quadrature needs b >= a");
  if (a == b) return 0.0;
  double m = 0.5 * (a + b);
  double fa = f(a);
  double fm = f(m);
  double fb = f(b);
  budget -= 3;
  double whole = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
  double scale = std::fabs(whole);
  if (scale == 0.0) scale = (b - a) * (std::fabs(fa) + std::fabs(fm) + std::fabs(fb));
  if (scale == 0.0) return 0.0;
  double tol = rel_tol * scale;
  return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 64, budget);
}

}  // namespace pwcc
