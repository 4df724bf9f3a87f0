#pragma once

#include <cmath>

#include "pwcc/chain.hpp"
#include "pwcc/errors.hpp"
#include "pwcc/geometry.hpp"
#include "pwcc/potential.hpp"
#include "pwcc/quadrature.hpp"

namespace pwcc {

inline constexpr double kPi = 3.14159265358979323846;

// 1/2 + 3*sqrt(3)/(8*pi): the hard-disk V_2 as a fraction of C_phi^2.
inline double hard_disk_v2_fraction() {
  return 0.5 + 3.0 * std::sqrt(3.0) / (8.0 * kPi);
}

inline double exact_v2_hard_disk_value(double r) {
  double v = kPi * r * r;
  return v * v * hard_disk_v2_fraction();
}

// Radial reconstruction of the hard-disk V_2: for a first step of length
// s (in units of r) the surviving area fraction of the second step is
// pi*(1-s^2) for s <= 1/2 and pi minus a circular-lens area for s > 1/2.
inline double exact_v2_hard_disk_quadrature(double r) {
  auto inner = [](double s) {
    if (s <= 0.5) return kPi * (1.0 - s * s);
    double lens = s * s * std::acos(1.0 - 1.0 / (2.0 * s * s)) +
                  std::acos(1.0 / (2.0 * s)) -
                  0.5 * std::sqrt((2.0 * s - 1.0) * (2.0 * s + 1.0));
    return kPi - lens;
  };
  auto f = [&](double s) { return 2.0 * kPi * s * inner(s); };
  double unit = adaptive_simpson(f, 0.0, 0.5, 1e-12) +
                adaptive_simpson(f, 0.5, 1.0, 1e-12);
  return unit * r * r * r * r;
}

// Exact hard-disk V_2 with a built-in quadrature cross-check.
inline VkEstimate exact_v2_hard_disk(double r) {
  if (!(r > 0.0)) throw DomainError("NegativeRadius", "disk radius must be > 0");
  double closed = exact_v2_hard_disk_value(r);
  double recon = exact_v2_hard_disk_quadrature(r);
  if (std::fabs(recon - closed) > 1e-9 * closed)
    throw DomainError("CrossCheckFailure",
                      "hard-disk V_2 quadrature disagrees with the closed form");
  VkEstimate est;
  est.k = 2;
  est.mean = closed;
  est.std_error = 0.0;
  est.n_samples = 0;
  est.method = "ExactLens";
  est.c_phi = kPi * r * r;
  est.survival_mean = hard_disk_v2_fraction();
  return est;
}

// Strauss V_2 in d=2: [(1-e^-a) v]^2 * [q + e^-a (1-q)] with
// q = hard_disk_v2_fraction(). The a -> infinity limit recovers the hard
// disk; a -> 0 sends V_2/C_phi^2 -> 1.
inline double exact_v2_strauss_value(double r, double a) {
  double beta = -std::expm1(-a);
  double v = kPi * r * r;
  double q = hard_disk_v2_fraction();
  return (beta * v) * (beta * v) * (q + std::exp(-a) * (1.0 - q));
}

inline VkEstimate exact_v2_strauss(double r, double a) {
  if (!(r > 0.0)) throw DomainError("NegativeRadius", "disk radius must be > 0");
  if (!(a > 0.0)) throw DomainError("BadValue", "Strauss strength must be > 0");
  VkEstimate est;
  est.k = 2;
  est.mean = exact_v2_strauss_value(r, a);
  est.std_error = 0.0;
  est.n_samples = 0;
  est.method = "ExactStrauss";
  est.c_phi = -std::expm1(-a) * kPi * r * r;
  est.survival_mean = est.mean / (est.c_phi * est.c_phi);
  return est;
}

// V_2 <= C_phi^2 (1 - 8^-d + 16^-d) for hard spheres under l2 and hard
// cubes under linf, d >= 2.
inline double v2_bound_dim_d(const Potential& p, const Space& space) {
  space.validate();
  if (space.d < 2)
    throw DomainError("UnsupportedDimension", "the dimension bound needs d >= 2");
  bool sphere_ok = p.kind == Potential::Kind::HardSphere && space.norm == Norm::L2;
  bool cube_ok = p.kind == Potential::Kind::HardCube && space.norm == Norm::Linf;
  if (!sphere_ok && !cube_ok)
    throw DomainError("KindNormMismatch",
                      "bound applies to hard spheres under l2 or hard cubes under linf");
  double c = temperedness_constant(p, space);
  double d = static_cast<double>(space.d);
  return c * c * (1.0 - std::pow(8.0, -d) + std::pow(16.0, -d));
}

// The same lemma's connective-constant form: Delta_phi <= (1 - 8^-(d+1)) C_phi.
inline double delta_bound_dim_d(const Potential& p, const Space& space) {
  (void)v2_bound_dim_d(p, space);  // same preconditions
  double c = temperedness_constant(p, space);
  return c * (1.0 - std::pow(8.0, -(static_cast<double>(space.d) + 1.0)));
}

}  // namespace pwcc
