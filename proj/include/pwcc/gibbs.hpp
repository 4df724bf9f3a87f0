#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pwcc/errors.hpp"
#include "pwcc/geometry.hpp"
#include "pwcc/parallel.hpp"
#include "pwcc/potential.hpp"
#include "pwcc/rng.hpp"
#include "pwcc/stats.hpp"

namespace pwcc {

enum class Boundary { Free, Periodic };

inline const char* boundary_name(Boundary b) {
  return b == Boundary::Free ? "free" : "periodic";
}

struct BoxRegion {
  std::vector<double> sides;
  Boundary boundary = Boundary::Free;

  int dim() const { return static_cast<int>(sides.size()); }

  double volume() const {
    double v = 1.0;
    for (double s : sides) v *= s;
    return v;
  }

  void validate(const Space& space, double cutoff) const {
    if (dim() != space.d)
      throw ConfigError("DimensionMismatch",
                        "box sides do not match the space dimension",
                        "box.sides");
    for (double s : sides)
      if (!(s > 0.0) || !std::isfinite(s))
        throw ConfigError("BadValue", "box sides must be positive and finite",
                          "box.sides");
    if (boundary == Boundary::Periodic) {
      // minimum image must be unambiguous: at most one periodic copy of a
      // point can fall within the interaction range
      for (double s : sides)
        if (s < 2.0 * cutoff)
          throw ConfigError(
              "BoxTooSmall",
              "periodic sides must be at least twice the potential cutoff",
              "box.sides");
    }
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != sides.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] >= 0.0 && x[i] <= sides[i])) return false;
    return true;
  }

  // wraps a coordinate into [0, side); only meaningful under Periodic
  double wrap(double value, int axis) const {
    double s = sides[static_cast<std::size_t>(axis)];
    double w = std::fmod(value, s);
    return w < 0.0 ? w + s : w;
  }

  // pair separation in the box metric: straight line for Free, minimum
  // image for Periodic
  double distance(const Space& space, std::span<const double> x,
                  std::span<const double> y) const {
    if (boundary == Boundary::Free) return pwcc::distance(space, x, y);
    check_dims(space, x.size(), y.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double s = sides[i];
      double d = std::fabs(x[i] - y[i]);
      d = std::fmod(d, s);
      d = std::min(d, s - d);
      if (space.norm == Norm::L2)
        acc += d * d;
      else
        acc = std::max(acc, d);
    }
    return space.norm == Norm::L2 ? std::sqrt(acc) : acc;
  }
};

struct PointConfiguration {
  int dim = 0;
  std::vector<double> points;  // flat, count() * dim
  double energy = 0.0;         // total pair energy, finite for accepted draws

  int count() const { return dim > 0 ? static_cast<int>(points.size()) / dim : 0; }

  std::span<const double> point(int i) const {
    return std::span<const double>(
        points.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim),
        static_cast<std::size_t>(dim));
  }
};

struct GibbsSampleBatch {
  Space space;
  BoxRegion box;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t n_proposals = 0;  // index of the last accepted proposal + 1
  std::uint64_t n_accepted = 0;
  std::vector<PointConfiguration> configs;

  double acceptance_rate() const {
    return n_proposals == 0
               ? 0.0
               : static_cast<double>(n_accepted) / static_cast<double>(n_proposals);
  }
};

// total pair energy of a flat point list; +inf when a hard-core pair is present
inline double config_energy(const Potential& p, const Space& space,
                            const BoxRegion& box, std::span<const double> flat) {
  std::size_t d = static_cast<std::size_t>(space.d);
  std::size_t n = flat.size() / d;
  double cutoff = p.cutoff();
  double h = 0.0;
  for (std::size_t j = 1; j < n; ++j) {
    std::span<const double> xj = flat.subspan(j * d, d);
    for (std::size_t i = 0; i < j; ++i) {
      double s = box.distance(space, flat.subspan(i * d, d), xj);
      if (s > cutoff) continue;
      PhiValue phi = evaluate(p, s);
      if (phi.hard) return std::numeric_limits<double>::infinity();
      h += phi.value;
    }
  }
  return h;
}

// interaction energy between an external location v and a configuration
inline double point_energy(const Potential& p, const Space& space,
                           const BoxRegion& box, const PointConfiguration& c,
                           std::span<const double> v) {
  double cutoff = p.cutoff();
  double h = 0.0;
  for (int i = 0; i < c.count(); ++i) {
    double s = box.distance(space, c.point(i), v);
    if (s > cutoff) continue;
    PhiValue phi = evaluate(p, s);
    if (phi.hard) return std::numeric_limits<double>::infinity();
    h += phi.value;
  }
  return h;
}

namespace detail {

// One rejection proposal, fully determined by (seed, index). The acceptance
// uniform is drawn before the point count so that proposals at different
// activities share it: with the same stream, a larger lambda yields a
// superset configuration and hence a larger energy under a repulsive
// potential, making per-proposal acceptance monotone in lambda.
inline bool run_proposal(const Potential& p, const Space& space,
                         const BoxRegion& box, double lambda,
                         std::uint64_t seed, std::uint64_t index,
                         PointConfiguration& out) {
  RngStream rng(seed, index);
  double u_accept = rng.next_double();
  long long n = rng.next_poisson(lambda * box.volume());

  std::size_t d = static_cast<std::size_t>(space.d);
  double cutoff = p.cutoff();
  out.dim = space.d;
  out.points.clear();
  out.points.reserve(static_cast<std::size_t>(n) * d);
  out.energy = 0.0;

  double h = 0.0;
  for (long long j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < d; ++a)
      out.points.push_back(box.sides[a] * rng.next_double());
    std::span<const double> xj(out.points.data() + static_cast<std::size_t>(j) * d, d);
    for (long long i = 0; i < j; ++i) {
      double s = box.distance(space, out.point(static_cast<int>(i)), xj);
      if (s > cutoff) continue;
      PhiValue phi = evaluate(p, s);
      if (phi.hard) return false;  // density e^{-inf} = 0
      h += phi.value;
    }
  }
  out.energy = h;
  return u_accept < std::exp(-h);
}

}  // namespace detail

// Exact sampler for the finite-volume Gibbs measure: propose Poisson(lambda*V)
// uniform scatters, accept with probability e^{-H}. Repulsiveness makes
// e^{-H} a genuine density against the Poisson process, so accepted
// configurations are exact draws. The batch consists of the accepted
// proposals of smallest index, which makes the result independent of the
// worker count.
inline GibbsSampleBatch sample_gibbs(const Potential& p, const Space& space,
                                     const BoxRegion& box, double lambda,
                                     std::uint64_t n_target, std::uint64_t seed,
                                     int workers = 0) {
  space.validate();
  p.validate();
  box.validate(space, p.cutoff());
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError("BadValue", "lambda must be a finite value >= 0",
                      "run.lambda");
  if (n_target == 0)
    throw ConfigError("TooFewSamples", "need at least one target configuration",
                      "run.n");
  if (lambda * box.volume() > 200.0)
    throw ConfigError("ActivityVolumeTooLarge",
                      "lambda * volume must be <= 200 for rejection sampling",
                      "run.lambda");

  constexpr std::uint64_t kBlock = 4096;
  int n_workers = resolve_workers(workers);

  struct BlockResult {
    std::vector<std::uint64_t> index;
    std::vector<PointConfiguration> accepted;
  };

  GibbsSampleBatch batch;
  batch.space = space;
  batch.box = box;
  batch.lambda = lambda;
  batch.seed = seed;
  batch.configs.reserve(n_target);

  bool done = false;
  for (std::uint64_t round = 0; !done; ++round) {
    std::vector<BlockResult> results(static_cast<std::size_t>(n_workers));
    auto work = [&](int t) {
      std::uint64_t lo = (round * static_cast<std::uint64_t>(n_workers) +
                          static_cast<std::uint64_t>(t)) *
                         kBlock;
      BlockResult& res = results[static_cast<std::size_t>(t)];
      PointConfiguration scratch;
      for (std::uint64_t i = lo; i < lo + kBlock; ++i) {
        if (detail::run_proposal(p, space, box, lambda, seed, i, scratch)) {
          res.index.push_back(i);
          res.accepted.push_back(scratch);
        }
      }
    };
    if (n_workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 1; t < n_workers; ++t) pool.emplace_back(work, t);
      work(0);
      for (auto& th : pool) th.join();
    }

    // fold accepted configurations in proposal order; stop at the n-th one
    for (int t = 0; t < n_workers && !done; ++t) {
      BlockResult& res = results[static_cast<std::size_t>(t)];
      for (std::size_t j = 0; j < res.index.size(); ++j) {
        batch.configs.push_back(std::move(res.accepted[j]));
        if (batch.configs.size() == n_target) {
          batch.n_proposals = res.index[j] + 1;
          done = true;
          break;
        }
      }
    }

    if (!done) {
      std::uint64_t scanned =
          (round + 1) * static_cast<std::uint64_t>(n_workers) * kBlock;
      if (scanned >= 10'000'000 &&
          static_cast<double>(batch.configs.size()) <
              1e-6 * static_cast<double>(scanned))
        throw DomainError("AcceptanceTooLow",
                          "acceptance rate below 1e-6 after 1e7 proposals; "
                          "reduce lambda * volume");
    }
  }
  batch.n_accepted = n_target;
  return batch;
}

struct PartitionEstimate {
  double z_hat = 0.0;
  double z_se = 0.0;
  double log_pressure = 0.0;
  double log_pressure_se = 0.0;
  double acceptance = 0.0;
  bool exact = false;
};

// Z = e^{lambda V} * E_Poisson[e^{-H}]; the acceptance rate estimates that
// expectation with Bernoulli error.
inline PartitionEstimate estimate_partition(const GibbsSampleBatch& batch) {
  if (batch.configs.empty() || batch.n_proposals == 0)
    throw DomainError("EmptyBatch", "batch has no recorded proposals");
  if (batch.n_accepted == 0)
    throw DomainError("ZeroAcceptance", "no accepted configurations");
  double rate = batch.acceptance_rate();
  double v = batch.box.volume();
  double scale = std::exp(batch.lambda * v);
  PartitionEstimate out;
  out.acceptance = rate;
  out.z_hat = scale * rate;
  out.z_se = scale * std::sqrt(rate * (1.0 - rate) /
                               static_cast<double>(batch.n_proposals));
  out.log_pressure = std::log(out.z_hat) / v;
  out.log_pressure_se = out.z_se / out.z_hat / v;
  out.exact = out.z_se == 0.0;
  return out;
}

struct DensityEstimate {
  double value = 0.0;
  double se = 0.0;
  std::uint64_t n = 0;
};

namespace detail {

inline void require_inside(const BoxRegion& box, std::span<const double> v,
                           const char* what) {
  if (v.size() != box.sides.size())
    throw DomainError("DimensionMismatch",
                      std::string(what) + " does not match the box dimension");
  if (!box.contains(v))
    throw DomainError("PointOutsideBox",
                      std::string(what) + " must lie inside the box");
}

inline void require_nonempty(const GibbsSampleBatch& batch) {
  if (batch.configs.empty())
    throw DomainError("EmptyBatch", "no configurations to average over");
}

}  // namespace detail

// rho(v) = lambda * E[e^{-H_v(X)}]
inline DensityEstimate estimate_density(const Potential& p,
                                        const GibbsSampleBatch& batch,
                                        std::span<const double> v) {
  detail::require_nonempty(batch);
  detail::require_inside(batch.box, v, "density point");
  RunningStat st;
  for (const PointConfiguration& c : batch.configs) {
    double h = point_energy(p, batch.space, batch.box, c, v);
    st.add(std::isinf(h) ? 0.0 : std::exp(-h));
  }
  DensityEstimate out;
  out.value = batch.lambda * st.mean();
  out.se = batch.lambda * st.std_error();
  out.n = st.n;
  return out;
}

namespace detail {

// reweighting factor of the measure tilted toward w, seen from v, applied to
// a point at distance dxv from v: exp(-phi(dxv) * 1{dxv < d(v,w)})
inline double tilt_factor_from_distance(const Potential& p, double dxv,
                                        double dvw, bool& hard) {
  hard = false;
  if (!(dxv < dvw) || dxv > p.cutoff()) return 1.0;
  PhiValue phi = evaluate(p, dxv);
  if (phi.hard) {
    hard = true;
    return 0.0;
  }
  return phi.value == 0.0 ? 1.0 : std::exp(-phi.value);
}

}  // namespace detail

struct TiltedDensityEstimate {
  double value = 0.0;
  double se = 0.0;
  double weight_mean = 0.0;  // E[prod of tilt factors], the change-of-measure mass
};

// Density of the tilted measure at `target`, by importance reweighting over a
// batch drawn from the untilted measure:
//   rho_tilt(target) = lambda * f(target) * E[prod_x f(x) * e^{-H_target}] / E[prod_x f(x)]
// with f(x) = exp(-phi(x,v) * 1{d(x,v) < d(v,w)}).
inline TiltedDensityEstimate estimate_tilted_density(
    const Potential& p, const GibbsSampleBatch& batch, std::span<const double> v,
    std::span<const double> w, std::span<const double> target) {
  detail::require_nonempty(batch);
  detail::require_inside(batch.box, v, "tilt anchor");
  detail::require_inside(batch.box, w, "tilt direction point");
  detail::require_inside(batch.box, target, "target point");

  const Space& space = batch.space;
  const BoxRegion& box = batch.box;
  double dvw = box.distance(space, v, w);
  std::size_t n = batch.configs.size();

  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PointConfiguration& c = batch.configs[i];
    double tilt_exponent = 0.0;
    bool dead = false;
    for (int j = 0; j < c.count() && !dead; ++j) {
      double dxv = box.distance(space, c.point(j), v);
      if (!(dxv < dvw) || dxv > p.cutoff()) continue;
      PhiValue phi = evaluate(p, dxv);
      if (phi.hard)
        dead = true;
      else
        tilt_exponent += phi.value;
    }
    if (dead) {
      a[i] = b[i] = 0.0;
      continue;
    }
    b[i] = tilt_exponent == 0.0 ? 1.0 : std::exp(-tilt_exponent);
    double h = point_energy(p, space, box, batch.configs[i], target);
    a[i] = std::isinf(h) ? 0.0 : b[i] * std::exp(-h);
  }

  double a_mean = 0.0, b_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a_mean += a[i];
    b_mean += b[i];
  }
  a_mean /= static_cast<double>(n);
  b_mean /= static_cast<double>(n);
  if (b_mean < 1e-12)
    throw DomainError("DegenerateWeights",
                      "tilt reweighting mass is numerically zero");

  double dtv = box.distance(space, target, v);
  bool target_hard = false;
  double f_target = detail::tilt_factor_from_distance(p, dtv, dvw, target_hard);

  double ratio = a_mean / b_mean;
  TiltedDensityEstimate out;
  out.value = batch.lambda * f_target * ratio;
  out.weight_mean = b_mean;

  // paired delta method on the ratio of means over the shared batch
  RunningStat t;
  double scale = batch.lambda * f_target / b_mean;
  for (std::size_t i = 0; i < n; ++i) t.add(scale * (a[i] - ratio * b[i]));
  out.se = t.std_error();
  return out;
}

namespace detail {

// phi(d(x,v)) for every point of a configuration, precomputed once so each
// quadrature node only pays for an indicator comparison
struct TiltTable {
  std::vector<double> dist;      // d(x, v)
  std::vector<double> phi_val;   // potential at that distance (finite part)
  std::vector<char> phi_hard;
};

inline void fill_tilt_table(const Potential& p, const Space& space,
                            const BoxRegion& box, const PointConfiguration& c,
                            std::span<const double> v, TiltTable& t) {
  int n = c.count();
  t.dist.resize(static_cast<std::size_t>(n));
  t.phi_val.resize(static_cast<std::size_t>(n));
  t.phi_hard.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    double s = box.distance(space, c.point(j), v);
    t.dist[static_cast<std::size_t>(j)] = s;
    if (s > p.cutoff()) {
      t.phi_val[static_cast<std::size_t>(j)] = 0.0;
      t.phi_hard[static_cast<std::size_t>(j)] = false;
    } else {
      PhiValue phi = evaluate(p, s);
      t.phi_val[static_cast<std::size_t>(j)] = phi.value;
      t.phi_hard[static_cast<std::size_t>(j)] = phi.hard;
    }
  }
}

// midpoint product grid over the Mayer support around v, with the quadrature
// weight and the Mayer factor folded together per node
struct MayerGrid {
  int d = 0;
  std::vector<double> coords;   // size() * d
  std::vector<double> qweight;  // quad weight * mayer(v, node), > 0
  std::vector<double> dvw;      // separation d(v, node) in the box metric

  std::size_t size() const { return qweight.size(); }
  std::span<const double> node(std::size_t g) const {
    return std::span<const double>(coords.data() + g * static_cast<std::size_t>(d),
                                   static_cast<std::size_t>(d));
  }
};

inline void push_node(MayerGrid& grid, std::span<const double> w, double weight,
                      double mayer_value, double sep) {
  if (mayer_value <= 0.0 || weight <= 0.0) return;
  grid.coords.insert(grid.coords.end(), w.begin(), w.end());
  grid.qweight.push_back(weight * mayer_value);
  grid.dvw.push_back(sep);
}

// d = 2 Euclidean support is a disc; a polar product grid resolves its rim
// exactly. Requires the disc to fit inside the box (always true under
// Periodic since sides >= 2 * cutoff).
inline bool polar_grid_usable(const Space& space, const BoxRegion& box,
                              std::span<const double> v, double radius) {
  if (space.d != 2 || space.norm != Norm::L2) return false;
  if (box.boundary == Boundary::Periodic) return true;
  for (int a = 0; a < 2; ++a)
    if (v[static_cast<std::size_t>(a)] < radius ||
        v[static_cast<std::size_t>(a)] + radius > box.sides[static_cast<std::size_t>(a)])
      return false;
  return true;
}

inline MayerGrid build_mayer_grid(const Potential& p, const Space& space,
                                  const BoxRegion& box, std::span<const double> v,
                                  int n) {
  MayerGrid grid;
  grid.d = space.d;
  double radius = p.cutoff();

  if (polar_grid_usable(space, box, v, radius)) {
    double dr = radius / n;
    double dth = 2.0 * std::numbers::pi / n;
    for (int i = 0; i < n; ++i) {
      double r = (i + 0.5) * dr;
      double m = mayer(p, r);
      if (m <= 0.0) continue;
      for (int j = 0; j < n; ++j) {
        double th = (j + 0.5) * dth;
        double w[2] = {v[0] + r * std::cos(th), v[1] + r * std::sin(th)};
        if (box.boundary == Boundary::Periodic) {
          w[0] = box.wrap(w[0], 0);
          w[1] = box.wrap(w[1], 1);
        } else if (!box.contains(std::span<const double>(w, 2))) {
          continue;
        }
        push_node(grid, std::span<const double>(w, 2), r * dr * dth, m, r);
      }
    }
    return grid;
  }

  // Cartesian product midpoint grid over [v - R, v + R]^d intersected with
  // the box; the Mayer factor masks nodes outside the support
  std::size_t d = static_cast<std::size_t>(space.d);
  std::vector<double> lo(d), h(d);
  for (std::size_t a = 0; a < d; ++a) {
    double left = v[a] - radius, right = v[a] + radius;
    if (box.boundary == Boundary::Free) {
      left = std::max(left, 0.0);
      right = std::min(right, box.sides[a]);
    }
    lo[a] = left;
    h[a] = (right - left) / n;
  }
  double cell = 1.0;
  for (std::size_t a = 0; a < d; ++a) cell *= h[a];
  if (cell <= 0.0) return grid;

  std::vector<int> idx(d, 0);
  std::vector<double> w(d);
  for (;;) {
    for (std::size_t a = 0; a < d; ++a) {
      w[a] = lo[a] + (idx[a] + 0.5) * h[a];
      if (box.boundary == Boundary::Periodic) w[a] = box.wrap(w[a], static_cast<int>(a));
    }
    double sep = box.distance(space, v, w);
    push_node(grid, w, cell, mayer(p, sep), sep);
    std::size_t a = 0;
    while (a < d && ++idx[a] == n) idx[a++] = 0;
    if (a == d) break;
  }
  return grid;
}

// per-configuration reweighted moments against one grid node:
//   b = prod_x exp(-phi(x,v) 1{d(x,v) < dvw}),  a = b * e^{-H_w(X)}
inline void node_moments(const Potential& p, const Space& space,
                         const BoxRegion& box, const PointConfiguration& c,
                         const TiltTable& tilt, std::span<const double> w,
                         double dvw, double& a, double& b) {
  double tilt_exponent = 0.0;
  int n = c.count();
  for (int j = 0; j < n; ++j) {
    std::size_t js = static_cast<std::size_t>(j);
    if (tilt.dist[js] < dvw) {
      if (tilt.phi_hard[js]) {
        a = b = 0.0;
        return;
      }
      tilt_exponent += tilt.phi_val[js];
    }
  }
  b = tilt_exponent == 0.0 ? 1.0 : std::exp(-tilt_exponent);
  double hw = point_energy(p, space, box, c, w);
  a = std::isinf(hw) ? 0.0 : b * std::exp(-hw);
}

}  // namespace detail

struct IdentityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double combined_se = 0.0;
  double residual = 0.0;  // |lhs - rhs|
  double sigmas = 0.0;    // residual / combined_se (0 when both vanish)
  double quad_error = 0.0;
  std::uint64_t n_configs = 0;
  std::size_t nodes_coarse = 0;
  std::size_t nodes_fine = 0;
};

// Checks rho(v) = lambda * exp(-integral of mayer(v,w) * rho_tilt_w(w) dw)
// over the sampled batch. Both sides are estimated from the same batch, and
// the combined standard error comes from the influence function of
// lhs - rhs, so shared sampling noise cancels in the comparison. The
// quadrature error is measured by doubling the per-axis node count; the
// reported rhs uses the fine grid.
inline IdentityReport verify_recursion_identity(const Potential& p,
                                                const GibbsSampleBatch& batch,
                                                std::span<const double> v,
                                                int nodes_per_axis = 0) {
  detail::require_nonempty(batch);
  detail::require_inside(batch.box, v, "density point");
  const Space& space = batch.space;
  const BoxRegion& box = batch.box;
  double lambda = batch.lambda;
  std::size_t n = batch.configs.size();

  int base = nodes_per_axis > 0 ? nodes_per_axis : (space.d == 1 ? 16 : 8);
  if (base < 8)
    throw ConfigError("BadValue", "need at least 8 quadrature nodes per axis",
                      "run.quad_nodes");
  detail::MayerGrid coarse = detail::build_mayer_grid(p, space, box, v, base);
  detail::MayerGrid fine = detail::build_mayer_grid(p, space, box, v, 2 * base);

  // first pass: lhs terms and per-node moment means on both grids
  std::vector<double> e(n);
  std::vector<double> a_sum_c(coarse.size(), 0.0), b_sum_c(coarse.size(), 0.0);
  std::vector<double> a_sum_f(fine.size(), 0.0), b_sum_f(fine.size(), 0.0);
  detail::TiltTable tilt;
  for (std::size_t i = 0; i < n; ++i) {
    const PointConfiguration& c = batch.configs[i];
    double hv = point_energy(p, space, box, c, v);
    e[i] = std::isinf(hv) ? 0.0 : std::exp(-hv);
    detail::fill_tilt_table(p, space, box, c, v, tilt);
    for (std::size_t g = 0; g < coarse.size(); ++g) {
      double a, b;
      detail::node_moments(p, space, box, c, tilt, coarse.node(g), coarse.dvw[g], a, b);
      a_sum_c[g] += a;
      b_sum_c[g] += b;
    }
    for (std::size_t g = 0; g < fine.size(); ++g) {
      double a, b;
      detail::node_moments(p, space, box, c, tilt, fine.node(g), fine.dvw[g], a, b);
      a_sum_f[g] += a;
      b_sum_f[g] += b;
    }
  }

  double e_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) e_mean += e[i];
  e_mean /= static_cast<double>(n);
  double lhs = lambda * e_mean;

  auto grid_rhs = [&](const detail::MayerGrid& grid, std::vector<double>& a_mean,
                      std::vector<double>& b_mean, std::vector<double>& rho) {
    double s = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      a_mean[g] /= static_cast<double>(n);
      b_mean[g] /= static_cast<double>(n);
      if (b_mean[g] < 1e-12)
        throw DomainError("DegenerateWeights",
                          "tilt reweighting mass is numerically zero at a "
                          "quadrature node");
      rho[g] = lambda * a_mean[g] / b_mean[g];
      s += grid.qweight[g] * rho[g];
    }
    return lambda * std::exp(-s);
  };

  std::vector<double> rho_c(coarse.size()), rho_f(fine.size());
  double rhs_coarse = grid_rhs(coarse, a_sum_c, b_sum_c, rho_c);
  double rhs = grid_rhs(fine, a_sum_f, b_sum_f, rho_f);

  // second pass: influence function of lhs - rhs on the fine grid
  RunningStat t;
  for (std::size_t i = 0; i < n; ++i) {
    const PointConfiguration& c = batch.configs[i];
    detail::fill_tilt_table(p, space, box, c, v, tilt);
    double node_term = 0.0;
    for (std::size_t g = 0; g < fine.size(); ++g) {
      double a, b;
      detail::node_moments(p, space, box, c, tilt, fine.node(g), fine.dvw[g], a, b);
      node_term += fine.qweight[g] * rho_f[g] *
                   (a / a_sum_f[g] - b / b_sum_f[g]);
    }
    t.add(lambda * e[i] + rhs * node_term);
  }

  IdentityReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.combined_se = t.std_error();
  rep.residual = std::fabs(lhs - rhs);
  rep.sigmas = rep.residual == 0.0
                   ? 0.0
                   : rep.residual / rep.combined_se;
  rep.quad_error = std::fabs(rhs - rhs_coarse);
  rep.n_configs = n;
  rep.nodes_coarse = coarse.size();
  rep.nodes_fine = fine.size();
  return rep;
}

// Checks the k-point density factorization: the direct estimator
//   e^{-H(v_1..v_k)} lambda^k E[e^{-sum_j H_{v_j}(X)}]
// against the telescoping product of tilted 1-point densities with
// f_j(x) = e^{-sum_{i<j} phi(v_i, x)}. Note prod_j f_j(v_j) = e^{-H(v_1..v_k)},
// so the product side carries that factor implicitly.
inline IdentityReport verify_kpoint_product(const Potential& p,
                                            const GibbsSampleBatch& batch,
                                            std::span<const double> pts) {
  detail::require_nonempty(batch);
  const Space& space = batch.space;
  const BoxRegion& box = batch.box;
  std::size_t d = static_cast<std::size_t>(space.d);
  if (pts.size() % d != 0)
    throw ConfigError("DimensionMismatch",
                      "point list length is not a multiple of the dimension");
  std::size_t k = pts.size() / d;
  if (k < 2 || k > 4)
    throw ConfigError("InvalidK", "k-point check supports 2 <= k <= 4",
                      "run.k");
  for (std::size_t j = 0; j < k; ++j)
    detail::require_inside(box, pts.subspan(j * d, d), "k-point location");

  double lambda = batch.lambda;
  std::size_t n = batch.configs.size();
  // On a shared sample the telescoping product of tilted means collapses
  // to the direct estimator identically, so the comparison carries no
  // information. Disjoint slices keep the two sides independent: slice 0
  // feeds the direct side, slice j+1 feeds tilt factor j.
  std::size_t slice = n / (k + 1);
  if (slice < 2)
    throw DomainError("TooFewSamples",
                      "k-point check needs at least 2(k+1) configurations");

  // f_j at the test points themselves; their product is e^{-H(v_1..v_k)}
  std::vector<double> f_at_vj(k, 1.0);
  bool hard_overlap = false;
  for (std::size_t j = 0; j < k; ++j) {
    double expo = 0.0;
    for (std::size_t i = 0; i < j; ++i) {
      double s = box.distance(space, pts.subspan(i * d, d), pts.subspan(j * d, d));
      if (s > p.cutoff()) continue;
      PhiValue phi = evaluate(p, s);
      if (phi.hard) {
        hard_overlap = true;
        expo = std::numeric_limits<double>::infinity();
        break;
      }
      expo += phi.value;
    }
    f_at_vj[j] = std::isinf(expo) ? 0.0 : std::exp(-expo);
  }
  double boltz_v = 1.0;
  for (std::size_t j = 0; j < k; ++j) boltz_v *= f_at_vj[j];

  // direct side from slice 0: e^{-sum_j H_{v_j}} per configuration
  RunningStat direct_stat;
  for (std::size_t i = 0; i < slice; ++i) {
    const PointConfiguration& c = batch.configs[i];
    double expo = 0.0;
    for (std::size_t j = 0; j < k && !std::isinf(expo); ++j)
      expo += point_energy(p, space, box, c, pts.subspan(j * d, d));
    direct_stat.add(std::isinf(expo) ? 0.0 : std::exp(-expo));
  }

  double lam_k = std::pow(lambda, static_cast<double>(k));
  double direct_scale = boltz_v * lam_k;
  double direct = direct_scale * direct_stat.mean();
  double var_direct = direct_scale * direct_scale *
                      direct_stat.std_error() * direct_stat.std_error();

  // factor j from slice j+1: tilted one-point density ratio a_mean / b_mean
  // with weight w_j(X) = prod_{x in X} f_j(x), f_j = e^{-sum_{i<j} phi(v_i, .)}
  double product = boltz_v * lam_k;
  double rel_var_product = 0.0;  // sum of per-factor relative variances
  bool degenerate_factor = false;
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t lo = (j + 1) * slice;
    std::vector<double> aj(slice), bj(slice);
    for (std::size_t i = 0; i < slice; ++i) {
      const PointConfiguration& c = batch.configs[lo + i];
      double tilt_expo = 0.0;
      for (int m = 0; m < c.count() && !std::isinf(tilt_expo); ++m) {
        for (std::size_t ii = 0; ii < j; ++ii) {
          double s = box.distance(space, c.point(m), pts.subspan(ii * d, d));
          if (s > p.cutoff()) continue;
          PhiValue phi = evaluate(p, s);
          if (phi.hard) {
            tilt_expo = std::numeric_limits<double>::infinity();
            break;
          }
          tilt_expo += phi.value;
        }
      }
      double w = std::isinf(tilt_expo) ? 0.0 : std::exp(-tilt_expo);
      bj[i] = w;
      if (w == 0.0) {
        aj[i] = 0.0;
      } else {
        double h = point_energy(p, space, box, c, pts.subspan(j * d, d));
        aj[i] = std::isinf(h) ? 0.0 : w * std::exp(-h);
      }
    }
    double a_mean = 0.0, b_mean = 0.0;
    for (std::size_t i = 0; i < slice; ++i) {
      a_mean += aj[i];
      b_mean += bj[i];
    }
    a_mean /= static_cast<double>(slice);
    b_mean /= static_cast<double>(slice);
    if (b_mean < 1e-12)
      throw DomainError("DegenerateWeights",
                        "tilt reweighting mass is numerically zero");
    double ratio = a_mean / b_mean;
    product *= ratio;
    if (ratio == 0.0) {
      degenerate_factor = true;
      continue;
    }
    // delta-method variance of the ratio via the influence (a - R b) / b_mean
    RunningStat u;
    for (std::size_t i = 0; i < slice; ++i)
      u.add((aj[i] - ratio * bj[i]) / b_mean);
    rel_var_product += u.std_error() * u.std_error() / (ratio * ratio);
  }
  double var_product = degenerate_factor
                           ? 0.0
                           : product * product * rel_var_product;

  IdentityReport rep;
  rep.lhs = direct;
  rep.rhs = product;
  rep.combined_se = hard_overlap ? 0.0 : std::sqrt(var_direct + var_product);
  rep.residual = std::fabs(direct - product);
  rep.sigmas = rep.residual == 0.0 ? 0.0 : rep.residual / rep.combined_se;
  rep.n_configs = n;
  return rep;
}

struct BoundCheck {
  double value = 0.0;
  double se = 0.0;
  double bound = 0.0;
  bool ok = false;
};

// repulsive processes are stochastically dominated by their Poisson proposal:
// mean point count <= lambda * volume
inline BoundCheck check_poisson_domination(const GibbsSampleBatch& batch) {
  detail::require_nonempty(batch);
  RunningStat st;
  for (const PointConfiguration& c : batch.configs)
    st.add(static_cast<double>(c.count()));
  BoundCheck out;
  out.value = st.mean();
  out.se = st.std_error();
  out.bound = batch.lambda * batch.box.volume();
  out.ok = out.value <= out.bound + 3.0 * out.se;
  return out;
}

// density never exceeds the activity
inline BoundCheck check_ruelle(const Potential& p, const GibbsSampleBatch& batch,
                               std::span<const double> v) {
  DensityEstimate d = estimate_density(p, batch, v);
  BoundCheck out;
  out.value = d.value;
  out.se = d.se;
  out.bound = batch.lambda;
  out.ok = out.value <= out.bound + 3.0 * out.se;
  return out;
}

}  // namespace pwcc
