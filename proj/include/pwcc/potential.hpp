#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pwcc/errors.hpp"
#include "pwcc/geometry.hpp"
#include "pwcc/quadrature.hpp"
#include "pwcc/rng.hpp"

namespace pwcc {

// phi value at one separation. A hard core is a flag, never a floating-point
// infinity inside arithmetic, so indicator * phi with a false indicator is
// structurally zero.
struct PhiValue {
  double value = 0.0;
  bool hard = false;
};

// Repulsive radial pair potential with compact support. RadialTable is
// piecewise constant and right-continuous: values[i] applies on
// [radii[i-1], radii[i]) with radii[-1] := 0, and phi = 0 from radii.back()
// on. A hard plateau is entered as the value "inf".
struct Potential {
  enum class Kind { HardSphere, HardCube, Strauss, RadialTable };

  Kind kind = Kind::HardSphere;
  double r = 1.0;                   // core radius for HardSphere/HardCube/Strauss
  double a = 1.0;                   // Strauss strength
  std::vector<double> radii;        // RadialTable breakpoints, strictly ascending, > 0
  std::vector<double> values;       // RadialTable plateau values, >= 0, may be +inf
  double table_cutoff = 0.0;        // RadialTable support bound

  static Potential hard_sphere(double radius) {
    Potential p;
    p.kind = Kind::HardSphere;
    p.r = radius;
    p.validate();
    return p;
  }

  static Potential hard_cube(double radius) {
    Potential p;
    p.kind = Kind::HardCube;
    p.r = radius;
    p.validate();
    return p;
  }

  static Potential strauss(double radius, double strength) {
    Potential p;
    p.kind = Kind::Strauss;
    p.r = radius;
    p.a = strength;
    p.validate();
    return p;
  }

  static Potential radial_table(std::vector<double> radii, std::vector<double> values,
                                double cutoff = 0.0) {
    Potential p;
    p.kind = Kind::RadialTable;
    p.radii = std::move(radii);
    p.values = std::move(values);
    p.table_cutoff = cutoff > 0.0 ? cutoff : (p.radii.empty() ? 0.0 : p.radii.back());
    p.validate();
    return p;
  }

  double cutoff() const {
    return kind == Kind::RadialTable ? table_cutoff : r;
  }

  void validate() const {
    switch (kind) {
      case Kind::HardSphere:
      case Kind::HardCube:
        if (!(r > 0.0))
          throw ConfigError("BadValue", "core radius must be > 0", "potential.r");
        break;
      case Kind::Strauss:
        if (!(r > 0.0))
          throw ConfigError("BadValue", "core radius must be > 0", "potential.r");
        if (!(a > 0.0))
          throw ConfigError("BadValue", "Strauss strength must be > 0", "potential.a");
        break;
      case Kind::RadialTable: {
        if (radii.empty() || radii.size() != values.size())
          throw ConfigError("BadValue", "radial table needs matching nonempty columns",
                            "potential.table");
        double prev = 0.0;
        for (double s : radii) {
          if (!(s > prev))
            throw ConfigError("BadValue",
                              "radial table separations must be strictly ascending and > 0",
                              "potential.table");
          prev = s;
        }
        for (double v : values) {
          if (std::isnan(v) || v < 0.0)
            throw ConfigError("BadValue", "radial table values must be >= 0",
                              "potential.table");
        }
        if (!(table_cutoff >= radii.back()))
          throw ConfigError("BadValue", "cutoff must be >= the last table separation",
                            "potential.cutoff");
        break;
      }
    }
  }

  std::string kind_name() const {
    switch (kind) {
      case Kind::HardSphere: return "hard_sphere";
      case Kind::HardCube: return "hard_cube";
      case Kind::Strauss: return "strauss";
      case Kind::RadialTable: return "radial_table";
    }
    return "?";
  }
};

inline PhiValue evaluate(const Potential& p, double s) {
  if (s < 0.0) throw DomainError("NegativeSeparation", "separation must be >= 0");
  switch (p.kind) {
    case Potential::Kind::HardSphere:
    case Potential::Kind::HardCube:
      return s < p.r ? PhiValue{0.0, true} : PhiValue{0.0, false};
    case Potential::Kind::Strauss:
      return s <= p.r ? PhiValue{p.a, false} : PhiValue{0.0, false};
    case Potential::Kind::RadialTable: {
      if (s >= p.radii.back()) return PhiValue{0.0, false};
      auto it = std::upper_bound(p.radii.begin(), p.radii.end(), s);
      double v = p.values[static_cast<std::size_t>(it - p.radii.begin())];
      if (std::isinf(v)) return PhiValue{0.0, true};
      return PhiValue{v, false};
    }
  }
  return PhiValue{};
}

inline double mayer(const Potential& p, double s) {
  if (s > p.cutoff()) return 0.0;
  PhiValue phi = evaluate(p, s);
  if (phi.hard) return 1.0;
  return -std::expm1(-phi.value);
}

// C_phi = integral of the Mayer weight over R^d. Closed forms where the
// weight is constant on the support; per-plateau radial quadrature for
// RadialTable (splitting at the breakpoints keeps each piece smooth).
inline double temperedness_constant(const Potential& p, const Space& space) {
  space.validate();
  switch (p.kind) {
    case Potential::Kind::HardSphere:
    case Potential::Kind::HardCube:
      return ball_volume(space, p.r);
    case Potential::Kind::Strauss:
      return -std::expm1(-p.a) * ball_volume(space, p.r);
    case Potential::Kind::RadialTable: {
      double shell = unit_ball_volume(space) * static_cast<double>(space.d);
      double total = 0.0;
      double lo = 0.0;
      for (std::size_t i = 0; i < p.radii.size(); ++i) {
        double hi = p.radii[i];
        double w = std::isinf(p.values[i]) ? 1.0 : -std::expm1(-p.values[i]);
        if (w > 0.0) {
          auto f = [&](double s) { return w * std::pow(s, space.d - 1); };
          total += shell * adaptive_simpson(f, lo, hi, 1e-10);
        }
        lo = hi;
      }
      return total;
    }
  }
  return 0.0;
}

// Draws displacements with density mayer(p, |w|) / C_phi: radius from the
// normalized radial CDF of mayer(s) * s^(d-1) through a 2^12-knot monotone
// table with linear interpolation, then an isotropic direction (uniform
// sphere direction for l2, uniform cube-shell point for linf).
class MayerDisplacementSampler {
public:
  static constexpr int kTableSize = 4096;

  MayerDisplacementSampler(const Potential& p, const Space& space)
      : potential_(p), space_(space), cutoff_(p.cutoff()) {
    space.validate();
    knots_.resize(kTableSize + 1);
    cdf_.resize(kTableSize + 1);
    cdf_[0] = 0.0;
    for (int i = 0; i <= kTableSize; ++i)
      knots_[i] = cutoff_ * static_cast<double>(i) / kTableSize;
    // mayer(p, s) is a step function of s for every supported kind, so the
    // mass of w * s^(d-1) on each knot interval is a sum of exact monomial
    // integrals; quadrature would chase the plateau jumps forever
    std::vector<double> edges;
    if (p.kind == Potential::Kind::RadialTable)
      edges.assign(p.radii.begin(), p.radii.end());
    else
      edges.push_back(p.r);
    auto ipow = [](double x, int n) {
      double y = 1.0;
      for (int i = 0; i < n; ++i) y *= x;
      return y;
    };
    double acc = 0.0;
    for (int i = 0; i < kTableSize; ++i) {
      double lo = knots_[i];
      double b = knots_[i + 1];
      while (lo < b) {
        double hi = b;
        for (double e : edges)
          if (e > lo && e < hi) hi = e;
        double w = mayer(p, 0.5 * (lo + hi));
        acc += w * (ipow(hi, space.d) - ipow(lo, space.d)) /
               static_cast<double>(space.d);
        lo = hi;
      }
      cdf_[i + 1] = acc;
    }
    total_mass_ = acc;
    if (!(total_mass_ > 0.0))
      throw DomainError("DegeneratePotential",
                        "displacement sampler needs C_phi > 0");
  }

  double cutoff() const { return cutoff_; }

  double sample_radius(RngStream& rng) const {
    double target = rng.next_double() * total_mass_;
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    std::size_t j = it == cdf_.end() ? cdf_.size() - 1
                                     : static_cast<std::size_t>(it - cdf_.begin());
    if (j == 0) j = 1;
    double c0 = cdf_[j - 1];
    double c1 = cdf_[j];
    double t = c1 > c0 ? (target - c0) / (c1 - c0) : 0.0;
    return knots_[j - 1] + t * (knots_[j] - knots_[j - 1]);
  }

  // Fills `out` with the displacement and returns its norm.
  double sample(RngStream& rng, std::span<double> out) const {
    if (out.size() != static_cast<std::size_t>(space_.d))
      throw DomainError("DimensionMismatch", "output span has wrong length");
    double radius = sample_radius(rng);
    if (space_.norm == Norm::Linf) {
      // uniform over the 2d faces of the cube shell of half-width `radius`
      std::uint64_t face = rng.next_u64() % static_cast<std::uint64_t>(2 * space_.d);
      int axis = static_cast<int>(face / 2);
      double sign = (face % 2 == 0) ? 1.0 : -1.0;
      for (int i = 0; i < space_.d; ++i)
        out[i] = radius * (2.0 * rng.next_double() - 1.0);
      out[axis] = sign * radius;
      return radius;
    }
    if (space_.d == 1) {
      out[0] = rng.next_double() < 0.5 ? -radius : radius;
      return radius;
    }
    if (space_.d == 2) {
      double angle = 6.283185307179586476925286766559 * rng.next_double();
      out[0] = radius * std::cos(angle);
      out[1] = radius * std::sin(angle);
      return radius;
    }
    double nrm2 = 0.0;
    for (int i = 0; i < space_.d; ++i) {
      double g = rng.next_gaussian();
      out[i] = g;
      nrm2 += g * g;
    }
    double scale = radius / std::sqrt(nrm2);
    for (int i = 0; i < space_.d; ++i) out[i] *= scale;
    return radius;
  }

private:
  Potential potential_;
  Space space_;
  double cutoff_;
  double total_mass_ = 0.0;
  std::vector<double> knots_;
  std::vector<double> cdf_;
};

}  // namespace pwcc
