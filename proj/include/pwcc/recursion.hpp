#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "pwcc/errors.hpp"

namespace pwcc {

inline constexpr double kE = 2.71828182845904523536;

// Homogeneous scalar tree recursion F(lambda, z) = lambda * exp(-z * c_phi).
// Everything here is a function of alpha = lambda * c_phi after the
// substitution y = z / lambda.
struct ScalarRecursion {
  double lambda = 1.0;
  double c_phi = 1.0;

  double alpha() const { return lambda * c_phi; }

  void validate() const {
    if (!(lambda >= 0.0))
      throw DomainError("NegativeActivity", "activity lambda must be >= 0");
    if (!(c_phi >= 0.0))
      throw DomainError("NegativeTemperedness", "c_phi must be >= 0");
  }
};

// Half-width of the alpha band around e that is reported as Critical;
// below double-precision resolution of the transition.
inline constexpr double kCriticalBand = 1e-9;

enum class Classification { Unique, Critical, NonUnique };

inline std::string classification_name(Classification c) {
  switch (c) {
    case Classification::Unique: return "Unique";
    case Classification::Critical: return "Critical";
    case Classification::NonUnique: return "NonUnique";
  }
  return "?";
}

inline double scalar_map(const ScalarRecursion& rec, double z) {
  rec.validate();
  if (!(z >= 0.0)) throw DomainError("NegativeArgument", "scalar_map needs z >= 0");
  return rec.lambda * std::exp(-z * rec.c_phi);
}

// Unique root of z - F(z) on [0, lambda] by bisection; z - F(z) is strictly
// increasing, negative at 0 and nonnegative at lambda.
inline double fixed_point(const ScalarRecursion& rec, double tol = 1e-12) {
  rec.validate();
  if (rec.lambda == 0.0) return 0.0;
  double lo = 0.0;
  double hi = rec.lambda;
  auto g = [&](double z) { return z - rec.lambda * std::exp(-z * rec.c_phi); };
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (g(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= tol * 1e-3 * std::max(1.0, hi)) break;
  }
  double z = 0.5 * (lo + hi);
  // Lambert-W identity check: (z c) e^(z c) must reproduce alpha.
  double alpha = rec.alpha();
  if (alpha > 0.0) {
    double w = z * rec.c_phi;
    if (std::fabs(w * std::exp(w) - alpha) > 1e-10 * alpha)
      throw DomainError("CrossCheckFailure",
                        "fixed point violates the Lambert-W identity");
  }
  return z;
}

struct TwoCycle {
  double z1 = 0.0;
  double z2 = 0.0;
};

namespace detail {

inline double cycle_f(double alpha, double y) {
  return std::exp(-alpha * std::exp(-alpha * y)) - y;
}

inline double bisect_cycle_root(double alpha, double lo, double hi, double flo) {
  // generic sign-change bisection; flo carries the sign at lo
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    double fm = cycle_f(alpha, mid);
    if ((fm > 0.0) == (flo > 0.0))
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-16) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Result of the two-cycle search including the dense sign-change scan that
// guards against roots beyond the three bracketed ones.
struct CycleScan {
  std::optional<TwoCycle> cycle;
  int sign_changes = 0;       // from the dense scan of f_alpha on [0,1]
  bool extra_roots = false;   // more sign changes than the three expected
  double middle_root = 0.0;   // root between the cycle points; equals z*/lambda
};

// Roots of f_alpha(y) = exp(-alpha exp(-alpha y)) - y. For alpha > e there
// are sign changes in (0, 1/alpha), (1/alpha, 1/e), (1/e, 1); the outer two
// give the cycle, the middle one is the fixed point. Near the critical
// point the textbook bracket endpoints evaluate to sub-ulp values, so the
// outer brackets are grown from the fixed point y* instead: walk toward y*
// geometrically until the sign flips.
inline CycleScan two_cycle(const ScalarRecursion& rec, double tol = 1e-12) {
  rec.validate();
  if (!(rec.lambda > 0.0))
    throw DomainError("NegativeActivity", "two_cycle needs lambda > 0");
  CycleScan out;
  double alpha = rec.alpha();
  if (alpha <= kE + kCriticalBand) return out;

  // dense scan, step 1e-4: count every sign change, never absorb extras
  {
    double prev = detail::cycle_f(alpha, 0.0);
    for (int i = 1; i <= 10'000; ++i) {
      double y = static_cast<double>(i) * 1e-4;
      double f = detail::cycle_f(alpha, y);
      if ((f > 0.0) != (prev > 0.0)) ++out.sign_changes;
      prev = f;
    }
    out.extra_roots = out.sign_changes > 3;
  }

  double ystar = fixed_point(rec, tol) / rec.lambda;

  // left root: f > 0 at 0, find a point left of y* with f < 0.
  // f(0) = e^-alpha and f(1) = exp(-alpha e^-alpha) - 1 can underflow to
  // zero for very large alpha although their signs are certain; pin them.
  double f0 = detail::cycle_f(alpha, 0.0);
  if (f0 == 0.0) f0 = 5e-324;
  double left_in = ystar;
  bool found_left = false;
  for (int m = 1; m <= 60; ++m) {
    double t = ystar * (1.0 - std::pow(0.5, m));
    double ft = detail::cycle_f(alpha, t);
    if (ft < 0.0) {
      left_in = t;
      found_left = true;
      break;
    }
  }
  // right root: f < 0 at 1, find a point right of y* with f > 0
  double f1 = detail::cycle_f(alpha, 1.0);
  if (f1 == 0.0) f1 = -5e-324;
  double right_in = ystar;
  bool found_right = false;
  for (int m = 1; m <= 60; ++m) {
    double t = ystar + (1.0 - ystar) * std::pow(0.5, m);
    double ft = detail::cycle_f(alpha, t);
    if (ft > 0.0) {
      right_in = t;
      found_right = true;
      break;
    }
  }
  if (!(f0 > 0.0) || !(f1 < 0.0) || !found_left || !found_right)
    throw DomainError("BracketFailure",
                      "two-cycle sign changes not found for alpha > e");

  double y1 = detail::bisect_cycle_root(alpha, 0.0, left_in, f0);
  double y2 = detail::bisect_cycle_root(alpha, right_in, 1.0,
                                        detail::cycle_f(alpha, right_in));
  out.middle_root = ystar;

  // middle-root consistency against the textbook bracket (1/alpha, 1/e)
  // whenever it is numerically usable. f'(y*) = (alpha y*)^2 - 1 vanishes
  // at the critical point, so bisection resolves the root only to
  // noise / slope; widen the tolerance accordingly.
  double fa = detail::cycle_f(alpha, 1.0 / alpha);
  double fe = detail::cycle_f(alpha, 1.0 / kE);
  if (fa < 0.0 && fe > 0.0) {
    double ymid = detail::bisect_cycle_root(alpha, 1.0 / alpha, 1.0 / kE, fa);
    double w = alpha * ystar;
    double slope = std::fabs(w * w - 1.0);
    double allowed = tol + 4e-16 / std::max(slope, 1e-12);
    if (std::fabs(ymid - ystar) > allowed)
      throw DomainError("CrossCheckFailure",
                        "middle two-cycle root does not match the fixed point");
  }

  out.cycle = TwoCycle{rec.lambda * y1, rec.lambda * y2};
  return out;
}

inline Classification classify_alpha(double alpha) {
  if (std::fabs(alpha - kE) <= kCriticalBand) return Classification::Critical;
  return alpha < kE ? Classification::Unique : Classification::NonUnique;
}

struct FixedPointReport {
  double lambda = 0.0;
  double c_phi = 0.0;
  double alpha = 0.0;
  double z_star = 0.0;
  std::optional<TwoCycle> cycle;
  Classification classification = Classification::Unique;
  double fixed_point_residual = 0.0;
  double cycle_residual = 0.0;
  int sign_changes = 0;
  bool extra_roots = false;
};

inline FixedPointReport classify(const ScalarRecursion& rec, double tol = 1e-12) {
  rec.validate();
  FixedPointReport rep;
  rep.lambda = rec.lambda;
  rep.c_phi = rec.c_phi;
  rep.alpha = rec.alpha();
  rep.z_star = fixed_point(rec, tol);
  rep.fixed_point_residual = std::fabs(scalar_map(rec, rep.z_star) - rep.z_star);
  rep.classification = classify_alpha(rep.alpha);
  if (rep.classification == Classification::NonUnique && rec.lambda > 0.0) {
    CycleScan scan = two_cycle(rec, tol);
    rep.cycle = scan.cycle;
    rep.sign_changes = scan.sign_changes;
    rep.extra_roots = scan.extra_roots;
    if (rep.cycle) {
      double r1 = std::fabs(scalar_map(rec, rep.cycle->z1) - rep.cycle->z2);
      double r2 = std::fabs(scalar_map(rec, rep.cycle->z2) - rep.cycle->z1);
      rep.cycle_residual = std::max(r1, r2);
    }
  }
  return rep;
}

// Depth-k tree recursion with constant boundary condition tau and damping
// identically 1; collapses to k applications of the scalar map.
inline double depth_k_iterate(const ScalarRecursion& rec, double tau, int k) {
  rec.validate();
  if (!(tau >= 0.0))
    throw DomainError("NegativeArgument", "boundary condition must be >= 0");
  if (k < 0) throw DomainError("InvalidK", "depth k must be >= 0");
  double pi_val = tau;
  for (int j = 0; j < k; ++j) pi_val = rec.lambda * std::exp(-rec.c_phi * pi_val);
  return pi_val;
}

struct ContractionCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

// |sqrt(pi_k(tau1)) - sqrt(pi_k(tau2))|^2 <= (lambda/e)^k C_phi^k |tau1-tau2|.
inline ContractionCheck contraction_check(const ScalarRecursion& rec, double tau1,
                                          double tau2, int k) {
  rec.validate();
  if (k < 1) throw DomainError("InvalidK", "contraction check needs k >= 1");
  double s1 = std::sqrt(depth_k_iterate(rec, tau1, k));
  double s2 = std::sqrt(depth_k_iterate(rec, tau2, k));
  ContractionCheck out;
  out.lhs = (s1 - s2) * (s1 - s2);
  out.rhs = std::pow(rec.alpha() / kE, k) * std::fabs(tau1 - tau2);
  out.ok = out.lhs <= out.rhs * (1.0 + 1e-9) + 1e-300;
  return out;
}

}  // namespace pwcc
