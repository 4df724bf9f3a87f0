#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "pwcc/gibbs.hpp"
#include "pwcc/stats.hpp"
#include "support/oracles.hpp"

using namespace pwcc;

namespace {

const Space kD1{1, Norm::L2};
const Space kD2{2, Norm::L2};

BoxRegion make_box(std::vector<double> sides,
                   Boundary boundary = Boundary::Free) {
  BoxRegion b;
  b.sides = std::move(sides);
  b.boundary = boundary;
  return b;
}

Potential free_field() {
  // zero plateau: phi vanishes identically, so every proposal is accepted
  return Potential::radial_table({1.0}, {0.0});
}

}  // namespace

TEST_CASE("free field accepts every proposal and reproduces Poisson exactly") {
  Potential p = free_field();
  BoxRegion box = make_box({2.0, 2.0});
  double lambda = 0.5;  // mean count 2
  GibbsSampleBatch batch = sample_gibbs(p, kD2, box, lambda, 10000, 321, 1);

  CHECK(batch.acceptance_rate() == 1.0);
  CHECK(batch.n_proposals == batch.n_accepted);

  PartitionEstimate part = estimate_partition(batch);
  CHECK(part.exact);
  CHECK(part.z_se == 0.0);
  CHECK(part.z_hat == std::exp(lambda * box.volume()));

  // count law: chi-square against the exact Poisson pmf, bins 0..9 + tail
  double mean = lambda * box.volume();
  const int cap = 10;
  std::vector<long long> counts(cap + 1, 0);
  for (const PointConfiguration& c : batch.configs) {
    std::size_t n = c.count();
    ++counts[std::min<std::size_t>(n, cap)];
  }
  double stat = 0.0;
  double tail_p = 1.0;
  for (int j = 0; j < cap; ++j) {
    double pj = poisson_pmf(j, mean);
    tail_p -= pj;
    double expect = pj * static_cast<double>(batch.configs.size());
    double d = static_cast<double>(counts[j]) - expect;
    stat += d * d / expect;
  }
  double tail_expect = tail_p * static_cast<double>(batch.configs.size());
  double dt = static_cast<double>(counts[cap]) - tail_expect;
  stat += dt * dt / tail_expect;
  double p_value = chi_square_sf(stat, cap);
  INFO("chi-square " << stat << " p " << p_value);
  CHECK(p_value > 0.001);

  // density and tilted density collapse to the activity
  std::vector<double> v = {1.0, 1.0};
  DensityEstimate rho = estimate_density(p, batch, v);
  CHECK(rho.value == lambda);
  CHECK(rho.se == 0.0);
}

TEST_CASE("zero activity yields only empty configurations") {
  GibbsSampleBatch batch =
      sample_gibbs(Potential::hard_sphere(1.0), kD2, make_box({3.0, 3.0}), 0.0,
                   200, 17, 1);
  CHECK(batch.acceptance_rate() == 1.0);
  for (const PointConfiguration& c : batch.configs) CHECK(c.count() == 0);
  CHECK(estimate_partition(batch).z_hat == 1.0);
}

TEST_CASE("hard-rod partition function matches the terminating series") {
  BoxRegion box = make_box({8.0});
  GibbsSampleBatch batch =
      sample_gibbs(Potential::hard_sphere(1.0), kD1, box, 0.2, 30000, 2026, 1);
  PartitionEstimate part = estimate_partition(batch);
  INFO("Z " << part.z_hat << " +- " << part.z_se);
  CHECK(std::abs(part.z_hat - oracles::kTonksZ8) <= 3.0 * part.z_se);

  // acceptance itself has a closed form: e^{-lambda L} Z
  double rate = batch.acceptance_rate();
  double rate_se = std::sqrt(rate * (1.0 - rate) /
                             static_cast<double>(batch.n_proposals));
  CHECK(std::abs(rate - oracles::kTonksAccept8) <= 3.0 * rate_se);
}

TEST_CASE("hard-rod densities match the punctured-interval formula") {
  BoxRegion box = make_box({10.0});
  GibbsSampleBatch batch =
      sample_gibbs(Potential::hard_sphere(1.0), kD1, box, 0.2, 60000, 808, 1);

  std::vector<double> center = {5.0};
  DensityEstimate rho = estimate_density(Potential::hard_sphere(1.0), batch, center);
  INFO("rho(center) " << rho.value << " +- " << rho.se);
  CHECK(std::abs(rho.value - oracles::kTonksRhoCenter10) <= 3.0 * rho.se);
  CHECK(oracles::tonks_density(10.0, 0.2, 1.0, 5.0) ==
        Catch::Approx(oracles::kTonksRhoCenter10).epsilon(1e-12));

  // near the wall the exclusion zone is halved and the density is higher
  std::vector<double> edge = {0.0};
  DensityEstimate rho_edge =
      estimate_density(Potential::hard_sphere(1.0), batch, edge);
  double expect_edge = oracles::tonks_density(10.0, 0.2, 1.0, 0.0);
  CHECK(std::abs(rho_edge.value - expect_edge) <= 3.0 * rho_edge.se);
  CHECK(expect_edge > oracles::kTonksRhoCenter10);
}

TEST_CASE("mean counts are dominated by the free Poisson law") {
  struct Case {
    Potential p;
    Space space;
    BoxRegion box;
    double lambda;
  };
  double inf = std::numeric_limits<double>::infinity();
  std::vector<Case> cases = {
      {Potential::hard_sphere(1.0), kD2, make_box({3.0, 3.0}), 0.5},
      {Potential::hard_cube(0.5), Space{2, Norm::Linf}, make_box({3.0, 3.0}), 0.5},
      {Potential::strauss(1.0, 1.0), kD2, make_box({3.0, 3.0}), 0.6},
      {Potential::radial_table({0.5, 1.0}, {inf, 0.7}), kD2,
       make_box({3.0, 3.0}), 0.6},
      {Potential::hard_sphere(1.0), kD1, make_box({8.0}), 0.9},
  };
  int idx = 0;
  for (const Case& c : cases) {
    GibbsSampleBatch batch =
        sample_gibbs(c.p, c.space, c.box, c.lambda, 4000, 7000 + idx, 1);
    BoundCheck check = check_poisson_domination(batch);
    INFO("case " << idx << " mean " << check.value << " bound " << check.bound);
    CHECK(check.ok);
    ++idx;
  }
}

TEST_CASE("one-point densities satisfy the activity bound") {
  GibbsSampleBatch batch = sample_gibbs(Potential::hard_sphere(1.0), kD2,
                                        make_box({4.0, 4.0}), 0.3, 5000, 99, 1);
  RngStream rng(515151);
  std::vector<double> v(2);
  for (int i = 0; i < 20; ++i) {
    v[0] = 4.0 * rng.next_double();
    v[1] = 4.0 * rng.next_double();
    BoundCheck check = check_ruelle(Potential::hard_sphere(1.0), batch, v);
    INFO("v = (" << v[0] << ", " << v[1] << ") rho " << check.value);
    CHECK(check.ok);
  }
}

TEST_CASE("stored energies match a recomputation") {
  Potential p = Potential::strauss(1.0, 1.5);
  GibbsSampleBatch batch =
      sample_gibbs(p, kD2, make_box({3.0, 3.0}), 0.8, 500, 5, 1);
  int checked = 0;
  for (const PointConfiguration& c : batch.configs) {
    double h = config_energy(p, kD2, batch.box, c.points);
    CHECK(std::abs(h - c.energy) <= 1e-9 * std::max(1.0, std::abs(h)));
    if (++checked == 200) break;
  }
  REQUIRE(checked > 0);
}

TEST_CASE("acceptance rate is non-increasing in the activity") {
  // shared seed: the proposal streams couple pathwise across activities
  double prev_rate = 1.1;
  for (double lambda : {0.1, 0.2, 0.4, 0.8}) {
    GibbsSampleBatch batch = sample_gibbs(Potential::hard_sphere(1.0), kD2,
                                          make_box({4.0, 4.0}), lambda, 3000,
                                          42, 1);
    INFO("lambda " << lambda << " rate " << batch.acceptance_rate());
    CHECK(batch.acceptance_rate() <= prev_rate);
    prev_rate = batch.acceptance_rate();
  }
}

TEST_CASE("sampling is independent of the worker count") {
  Potential p = Potential::strauss(1.0, 1.0);
  GibbsSampleBatch a = sample_gibbs(p, kD2, make_box({3.0, 3.0}), 0.5, 2000, 31, 1);
  GibbsSampleBatch b = sample_gibbs(p, kD2, make_box({3.0, 3.0}), 0.5, 2000, 31, 4);
  REQUIRE(a.configs.size() == b.configs.size());
  CHECK(a.n_proposals == b.n_proposals);
  for (std::size_t i = 0; i < a.configs.size(); ++i) {
    REQUIRE(a.configs[i].points == b.configs[i].points);
    CHECK(a.configs[i].energy == b.configs[i].energy);
  }
}

TEST_CASE("tilted density with a coincident direction reduces to the density") {
  Potential p = Potential::strauss(1.0, 1.0);
  GibbsSampleBatch batch =
      sample_gibbs(p, kD2, make_box({4.0, 4.0}), 0.4, 4000, 63, 1);
  std::vector<double> v = {2.0, 2.0};
  std::vector<double> target = {1.0, 2.5};
  // w = v: the distance gate d(x, v) < d(v, w) = 0 never opens
  TiltedDensityEstimate tilted = estimate_tilted_density(p, batch, v, v, target);
  DensityEstimate plain = estimate_density(p, batch, target);
  CHECK(tilted.value == plain.value);
  CHECK(tilted.weight_mean == 1.0);
}

TEST_CASE("tilted density vanishes on a hard-excluded target") {
  Potential p = Potential::hard_sphere(1.0);
  GibbsSampleBatch batch =
      sample_gibbs(p, kD2, make_box({4.0, 4.0}), 0.3, 3000, 64, 1);
  std::vector<double> v = {2.0, 2.0};
  std::vector<double> w = {2.0, 0.0};  // gate radius 2
  std::vector<double> target = {2.5, 2.0};  // 0.5 from v, inside the gate
  TiltedDensityEstimate tilted = estimate_tilted_density(p, batch, v, w, target);
  CHECK(tilted.value == 0.0);
}

TEST_CASE("recursion identity holds on hard rods") {
  BoxRegion box = make_box({8.0});
  GibbsSampleBatch batch =
      sample_gibbs(Potential::hard_sphere(1.0), kD1, box, 0.2, 30000, 11, 1);
  std::vector<double> v = {4.0};
  IdentityReport rep =
      verify_recursion_identity(Potential::hard_sphere(1.0), batch, v, 0);
  INFO("lhs " << rep.lhs << " rhs " << rep.rhs << " sigmas " << rep.sigmas);
  CHECK(rep.sigmas <= 3.0);
  CHECK(rep.quad_error <= rep.combined_se);
  CHECK(rep.lhs > 0.0);
}

TEST_CASE("recursion identity holds for soft disks in the plane") {
  BoxRegion box = make_box({4.0, 4.0});
  Potential p = Potential::strauss(1.0, 1.0);
  GibbsSampleBatch batch = sample_gibbs(p, kD2, box, 0.1, 20000, 12, 1);
  std::vector<double> v = {2.0, 2.0};
  IdentityReport rep = verify_recursion_identity(p, batch, v, 0);
  INFO("lhs " << rep.lhs << " rhs " << rep.rhs << " sigmas " << rep.sigmas);
  CHECK(rep.sigmas <= 3.0);
  CHECK(rep.quad_error <= rep.combined_se);
}

TEST_CASE("quadrature refinement is reported against the doubled grid") {
  BoxRegion box = make_box({8.0});
  GibbsSampleBatch batch =
      sample_gibbs(Potential::hard_sphere(1.0), kD1, box, 0.2, 5000, 13, 1);
  std::vector<double> v = {4.0};
  IdentityReport coarse =
      verify_recursion_identity(Potential::hard_sphere(1.0), batch, v, 8);
  IdentityReport fine =
      verify_recursion_identity(Potential::hard_sphere(1.0), batch, v, 32);
  // midpoint-rule refinement: both differences are tiny next to the value
  CHECK(coarse.quad_error <= 0.02 * std::abs(coarse.rhs));
  CHECK(fine.quad_error <= 0.02 * std::abs(fine.rhs));
  CHECK(coarse.nodes_coarse < coarse.nodes_fine);
  CHECK_THROWS_AS(
      verify_recursion_identity(Potential::hard_sphere(1.0), batch, v, 4),
      ConfigError);
}

TEST_CASE("k-point product identity is exact for the free field") {
  Potential p = free_field();
  BoxRegion box = make_box({2.0, 2.0});
  double lambda = 0.7;
  GibbsSampleBatch batch = sample_gibbs(p, kD2, box, lambda, 2000, 14, 1);
  std::vector<double> pts = {0.5, 0.5, 1.5, 1.5};
  IdentityReport rep = verify_kpoint_product(p, batch, pts);
  CHECK(rep.lhs == Catch::Approx(lambda * lambda).epsilon(1e-14));
  CHECK(rep.residual == 0.0);
  CHECK(rep.sigmas == 0.0);
}

TEST_CASE("k-point product identity vanishes on overlapping hard points") {
  Potential p = Potential::hard_sphere(1.0);
  GibbsSampleBatch batch =
      sample_gibbs(p, kD2, make_box({4.0, 4.0}), 0.3, 2000, 15, 1);
  std::vector<double> pts = {2.0, 2.0, 2.5, 2.0};  // separation 0.5 < core
  IdentityReport rep = verify_kpoint_product(p, batch, pts);
  CHECK(rep.lhs == 0.0);
  CHECK(rep.rhs == 0.0);
  CHECK(rep.residual == 0.0);
}

TEST_CASE("k-point product identity holds for separated soft points") {
  Potential p = Potential::strauss(1.0, 1.0);
  GibbsSampleBatch batch =
      sample_gibbs(p, kD2, make_box({4.0, 4.0}), 0.15, 30000, 16, 1);
  std::vector<double> pts = {1.75, 2.0, 2.25, 2.0};  // separation 0.5, soft
  IdentityReport rep = verify_kpoint_product(p, batch, pts);
  INFO("direct " << rep.lhs << " product " << rep.rhs << " sigmas "
                 << rep.sigmas);
  CHECK(rep.lhs > 0.0);
  CHECK(rep.sigmas <= 3.0);

  // three points as well
  std::vector<double> pts3 = {1.5, 2.0, 2.2, 2.0, 2.9, 2.0};
  IdentityReport rep3 = verify_kpoint_product(p, batch, pts3);
  INFO("direct " << rep3.lhs << " product " << rep3.rhs << " sigmas "
                 << rep3.sigmas);
  CHECK(rep3.sigmas <= 3.0);
}

TEST_CASE("periodic boundaries use minimum-image distances") {
  BoxRegion box = make_box({4.0, 4.0}, Boundary::Periodic);
  std::vector<double> a = {0.1, 0.1};
  std::vector<double> b = {3.9, 3.9};
  double d = box.distance(kD2, a, b);
  CHECK(d == Catch::Approx(std::hypot(0.2, 0.2)).epsilon(1e-14));

  // wrapped pair overlaps across the seam: hard energy is infinite
  Potential p = Potential::hard_sphere(1.0);
  std::vector<double> flat = {0.1, 0.1, 3.9, 3.9};
  CHECK(std::isinf(config_energy(p, kD2, box, flat)));

  BoxRegion free_box = make_box({4.0, 4.0}, Boundary::Free);
  CHECK(std::isfinite(config_energy(p, kD2, free_box, flat)));
}

TEST_CASE("periodic sampling needs room for two cutoffs per axis") {
  Potential p = Potential::hard_sphere(1.0);
  CHECK_THROWS_AS(
      sample_gibbs(p, kD2, make_box({1.5, 4.0}, Boundary::Periodic), 0.1, 10, 1, 1),
      ConfigError);
  // the same box is fine with free boundaries
  GibbsSampleBatch ok =
      sample_gibbs(p, kD2, make_box({1.5, 4.0}, Boundary::Free), 0.1, 10, 1, 1);
  CHECK(ok.configs.size() == 10);
}

TEST_CASE("excessive activity-volume products are rejected") {
  CHECK_THROWS_AS(sample_gibbs(Potential::hard_sphere(1.0), kD2,
                               make_box({10.0, 10.0}), 10.0, 10, 1, 1),
                  ConfigError);
}

TEST_CASE("density points must lie inside the box") {
  GibbsSampleBatch batch = sample_gibbs(Potential::hard_sphere(1.0), kD2,
                                        make_box({3.0, 3.0}), 0.2, 100, 2, 1);
  std::vector<double> outside = {5.0, 1.0};
  CHECK_THROWS_AS(estimate_density(Potential::hard_sphere(1.0), batch, outside),
                  DomainError);
  std::vector<double> wrong_dim = {1.0};
  CHECK_THROWS_AS(
      estimate_density(Potential::hard_sphere(1.0), batch, wrong_dim),
      DomainError);
}
