#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "pwcc/errors.hpp"
#include "pwcc/rng.hpp"

namespace pwcc {

enum class Norm { L2, Linf };

inline std::string norm_name(Norm n) { return n == Norm::L2 ? "l2" : "linf"; }

// R^d with Lebesgue measure and an l2 or linf norm. Points are flat arrays
// of d doubles.
struct Space {
  int d = 2;
  Norm norm = Norm::L2;

  void validate() const {
    if (d < 1)
      throw DomainError("UnsupportedDimension", "space dimension must be >= 1");
  }
};

inline void check_dims(const Space& space, std::size_t nx, std::size_t ny) {
  if (nx != static_cast<std::size_t>(space.d) || ny != static_cast<std::size_t>(space.d))
    throw DomainError("DimensionMismatch",
                      "point length does not match the space dimension");
}

inline double distance_sq_l2(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double t = x[i] - y[i];
    s += t * t;
  }
  return s;
}

inline double distance_linf(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double t = std::fabs(x[i] - y[i]);
    if (t > s) s = t;
  }
  return s;
}

inline double distance(const Space& space, std::span<const double> x,
                       std::span<const double> y) {
  check_dims(space, x.size(), y.size());
  if (space.norm == Norm::L2) return std::sqrt(distance_sq_l2(x, y));
  return distance_linf(x, y);
}

inline double unit_ball_volume(const Space& space) {
  space.validate();
  if (space.norm == Norm::Linf) return std::pow(2.0, space.d);
  return std::pow(3.14159265358979323846, 0.5 * space.d) /
         std::tgamma(0.5 * space.d + 1.0);
}

// Always unit_volume * r^d so that ball_volume(r) == r^d * ball_volume(1)
// holds at full floating-point accuracy.
inline double ball_volume(const Space& space, double radius) {
  if (radius < 0.0) throw DomainError("NegativeRadius", "ball radius must be >= 0");
  return unit_ball_volume(space) * std::pow(radius, space.d);
}

// Uniform law on the norm ball. L2: normalized Gaussian direction times
// radius*U^{1/d}; Linf: d independent uniforms.
inline void sample_uniform_ball(const Space& space, std::span<const double> center,
                                double radius, RngStream& rng,
                                std::span<double> out) {
  check_dims(space, center.size(), out.size());
  if (!(radius > 0.0)) throw DomainError("NegativeRadius", "ball radius must be > 0");
  if (space.norm == Norm::Linf) {
    for (int i = 0; i < space.d; ++i)
      out[i] = center[i] + radius * (2.0 * rng.next_double() - 1.0);
    return;
  }
  double r = radius * std::pow(rng.next_double(), 1.0 / space.d);
  if (space.d == 1) {
    out[0] = center[0] + (rng.next_double() < 0.5 ? -r : r);
    return;
  }
  double nrm2 = 0.0;
  for (int i = 0; i < space.d; ++i) {
    double g = rng.next_gaussian();
    out[i] = g;
    nrm2 += g * g;
  }
  double scale = r / std::sqrt(nrm2);
  for (int i = 0; i < space.d; ++i) out[i] = center[i] + out[i] * scale;
}

}  // namespace pwcc
