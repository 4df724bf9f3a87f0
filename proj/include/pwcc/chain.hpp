#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pwcc/errors.hpp"
#include "pwcc/geometry.hpp"
#include "pwcc/parallel.hpp"
#include "pwcc/potential.hpp"
#include "pwcc/rng.hpp"
#include "pwcc/stats.hpp"

namespace pwcc {

// Monte Carlo estimate of the k-step damped chain integral V_k.
// `mean` = c_phi^k * survival_mean; the dimensionless survival factors are
// kept separately so scale families share them bit-for-bit.
struct VkEstimate {
  int k = 0;
  double mean = 0.0;
  double std_error = 0.0;
  long long n_samples = 0;
  std::uint64_t seed = 0;
  std::string method = "MonteCarlo";  // MonteCarlo | ExactLens | ExactStrauss | ClosedFormBound
  double c_phi = 0.0;
  double survival_mean = 0.0;
  double survival_se = 0.0;
  double wall_seconds = 0.0;

  bool exact() const { return method != "MonteCarlo"; }
  double delta_root() const { return k > 0 ? std::pow(mean, 1.0 / k) : 0.0; }
  // delta-method SE of mean^(1/k)
  double delta_root_se() const {
    if (k <= 0 || mean <= 0.0) return 0.0;
    return std::pow(mean, 1.0 / k - 1.0) * std_error / k;
  }
};

namespace detail {

inline std::size_t tuple_len(const Space& space, std::span<const double> flat) {
  if (flat.empty() || flat.size() % static_cast<std::size_t>(space.d) != 0)
    throw DomainError("DimensionMismatch",
                      "flat tuple length must be a positive multiple of d");
  return flat.size() / static_cast<std::size_t>(space.d);
}

inline std::span<const double> tuple_point(const Space& space,
                                           std::span<const double> flat,
                                           std::size_t i) {
  return flat.subspan(i * static_cast<std::size_t>(space.d),
                      static_cast<std::size_t>(space.d));
}

}  // namespace detail

// Weitz damping of the full tuple: the last point is damped by every earlier
// point that is closer to it than that point's own forward step.
// gamma_w(v) = gamma_w(u,v) = 1.
inline double damping_weitz(const Potential& p, const Space& space,
                            std::span<const double> flat) {
  std::size_t n = detail::tuple_len(space, flat);
  if (n <= 2) return 1.0;
  std::size_t k = n - 1;
  auto vk = detail::tuple_point(space, flat, k);
  double exponent = 0.0;
  for (std::size_t i = 0; i + 2 <= k; ++i) {
    auto vi = detail::tuple_point(space, flat, i);
    auto vnext = detail::tuple_point(space, flat, i + 1);
    double d_back = distance(space, vk, vi);
    double d_step = distance(space, vnext, vi);
    if (d_back < d_step) {
      PhiValue phi = evaluate(p, d_back);
      if (phi.hard) return 0.0;
      exponent += phi.value;
    }
  }
  return std::exp(-exponent);
}

// Integrand of V_k at one tuple: per-step Mayer weights times the damping
// of every prefix. Returns 0 as soon as a hard indicator fires.
inline double chain_weight(const Potential& p, const Space& space,
                           std::span<const double> flat) {
  std::size_t n = detail::tuple_len(space, flat);
  if (n < 2)
    throw DomainError("DimensionMismatch", "chain tuple needs at least two points");
  double mayer_prod = 1.0;
  double exponent = 0.0;
  for (std::size_t j = 1; j < n; ++j) {
    auto vj = detail::tuple_point(space, flat, j);
    auto vprev = detail::tuple_point(space, flat, j - 1);
    double m = mayer(p, distance(space, vj, vprev));
    if (m == 0.0) return 0.0;
    mayer_prod *= m;
    for (std::size_t i = 0; i + 2 <= j; ++i) {
      auto vi = detail::tuple_point(space, flat, i);
      auto vnext = detail::tuple_point(space, flat, i + 1);
      double d_back = distance(space, vj, vi);
      double d_step = distance(space, vi, vnext);
      if (d_back < d_step) {
        PhiValue phi = evaluate(p, d_back);
        if (phi.hard) return 0.0;
        exponent += phi.value;
      }
    }
  }
  return mayer_prod * std::exp(-exponent);
}

namespace detail {

// Potential rescaled to cutoff 1. Hard/Strauss cores are scale free, so the
// rescaled object is identical across a radius family and survival decisions
// in unit coordinates are shared bit-for-bit.
inline Potential unit_cutoff_potential(const Potential& p) {
  switch (p.kind) {
    case Potential::Kind::HardSphere:
      return Potential::hard_sphere(1.0);
    case Potential::Kind::HardCube:
      return Potential::hard_cube(1.0);
    case Potential::Kind::Strauss:
      return Potential::strauss(1.0, p.a);
    case Potential::Kind::RadialTable: {
      std::vector<double> radii = p.radii;
      for (double& s : radii) s /= p.table_cutoff;
      if (!radii.empty()) radii.back() = std::min(radii.back(), 1.0);
      return Potential::radial_table(std::move(radii), p.values, 1.0);
    }
  }
  return p;
}

struct ChainWorkspace {
  std::vector<double> pos;        // (k+1) x d, unit coordinates
  std::vector<double> step_size;  // squared step length for l2, plain for linf
  std::vector<double> disp;
};

// One importance-sampling chain in unit coordinates; returns the survival
// factor in [0,1].
inline double run_chain(const Potential& unit_p, const Space& space,
                        const MayerDisplacementSampler& sampler, int k,
                        RngStream& rng, ChainWorkspace& ws) {
  const int d = space.d;
  const bool l2 = space.norm == Norm::L2;
  double* pos = ws.pos.data();
  for (int c = 0; c < d; ++c) pos[c] = 0.0;
  double exponent = 0.0;
  for (int j = 1; j <= k; ++j) {
    double radius = sampler.sample(rng, std::span<double>(ws.disp.data(), d));
    double* pj = pos + static_cast<std::size_t>(j) * d;
    const double* pprev = pj - d;
    for (int c = 0; c < d; ++c) pj[c] = pprev[c] + ws.disp[c];
    ws.step_size[j - 1] = l2 ? radius * radius : radius;
    for (int i = 0; i + 2 <= j; ++i) {
      const double* pi = pos + static_cast<std::size_t>(i) * d;
      double metric;
      if (l2) {
        metric = 0.0;
        for (int c = 0; c < d; ++c) {
          double t = pj[c] - pi[c];
          metric += t * t;
        }
      } else {
        metric = 0.0;
        for (int c = 0; c < d; ++c) {
          double t = std::fabs(pj[c] - pi[c]);
          if (t > metric) metric = t;
        }
      }
      if (metric < ws.step_size[i]) {
        double sep = l2 ? std::sqrt(metric) : metric;
        PhiValue phi = evaluate(unit_p, sep);
        if (phi.hard) return 0.0;
        exponent += phi.value;
      }
    }
  }
  return exponent == 0.0 ? 1.0 : std::exp(-exponent);
}

}  // namespace detail

// Importance-sampling V_k estimator. v_0 is pinned at the origin; each step
// is a Mayer-density displacement, so the per-chain estimator is c_phi^k
// times the prefix-damping survival factor. Work is sharded into fixed
// blocks of 2^16 chains with one RNG substream per block, and block results
// are reduced in index order, so the estimate depends only on (seed,
// n_samples), never on scheduling.
inline VkEstimate estimate_vk(const Potential& p, const Space& space, int k,
                              long long n_samples, std::uint64_t seed,
                              int workers = 0) {
  space.validate();
  p.validate();
  if (k < 1) throw DomainError("InvalidK", "chain length k must be >= 1");
  if (n_samples < 100)
    throw DomainError("TooFewSamples", "estimate_vk needs n_samples >= 100");

  auto t0 = std::chrono::steady_clock::now();
  VkEstimate est;
  est.k = k;
  est.n_samples = n_samples;
  est.seed = seed;
  est.method = "MonteCarlo";
  est.c_phi = temperedness_constant(p, space);

  if (est.c_phi == 0.0) {
    est.mean = est.std_error = est.survival_mean = est.survival_se = 0.0;
    est.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return est;
  }

  const Potential unit_p = detail::unit_cutoff_potential(p);
  const MayerDisplacementSampler sampler(unit_p, space);

  constexpr long long kBlock = 1 << 16;
  const long long n_blocks = (n_samples + kBlock - 1) / kBlock;
  std::vector<RunningStat> block_stats(static_cast<std::size_t>(n_blocks));

  std::atomic<long long> next_block{0};
  auto worker_fn = [&]() {
    detail::ChainWorkspace ws;
    ws.pos.resize(static_cast<std::size_t>(k + 1) * space.d);
    ws.step_size.resize(static_cast<std::size_t>(k));
    ws.disp.resize(static_cast<std::size_t>(space.d));
    for (;;) {
      long long b = next_block.fetch_add(1);
      if (b >= n_blocks) break;
      RngStream rng(seed, static_cast<std::uint64_t>(b));
      long long lo = b * kBlock;
      long long hi = std::min(n_samples, lo + kBlock);
      RunningStat stat;
      for (long long c = lo; c < hi; ++c)
        stat.add(detail::run_chain(unit_p, space, sampler, k, rng, ws));
      block_stats[static_cast<std::size_t>(b)] = stat;
    }
  };

  int n_workers = std::min<long long>(resolve_workers(workers), n_blocks);
  std::vector<std::thread> pool;
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker_fn);
  worker_fn();
  for (auto& t : pool) t.join();

  RunningStat total;
  for (const auto& s : block_stats) total.merge(s);

  est.survival_mean = total.mean();
  est.survival_se = total.std_error();
  double scale = std::pow(est.c_phi, k);
  est.mean = est.survival_mean * scale;
  est.std_error = est.survival_se * scale;
  est.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return est;
}

}  // namespace pwcc
