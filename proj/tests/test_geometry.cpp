#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "pwcc/geometry.hpp"
#include "pwcc/rng.hpp"
#include "pwcc/stats.hpp"

using namespace pwcc;

TEST_CASE("unit ball volumes match closed forms") {
  CHECK(unit_ball_volume(Space{1, Norm::L2}) == Catch::Approx(2.0).epsilon(1e-14));
  CHECK(unit_ball_volume(Space{2, Norm::L2}) ==
        Catch::Approx(std::numbers::pi).epsilon(1e-14));
  CHECK(unit_ball_volume(Space{3, Norm::L2}) ==
        Catch::Approx(4.0 * std::numbers::pi / 3.0).epsilon(1e-14));
  CHECK(unit_ball_volume(Space{1, Norm::Linf}) == Catch::Approx(2.0));
  CHECK(unit_ball_volume(Space{2, Norm::Linf}) == Catch::Approx(4.0));
  CHECK(unit_ball_volume(Space{4, Norm::Linf}) == Catch::Approx(16.0));
}

TEST_CASE("ball volume scales like r^d") {
  for (int d = 1; d <= 4; ++d) {
    Space s{d, Norm::L2};
    double r = 1.7;
    CHECK(ball_volume(s, r) ==
          Catch::Approx(unit_ball_volume(s) * std::pow(r, d)).epsilon(1e-13));
  }
}

TEST_CASE("distances honor the configured norm") {
  double a[2] = {0.0, 0.0};
  double b[2] = {3.0, 4.0};
  CHECK(distance(Space{2, Norm::L2}, a, b) == Catch::Approx(5.0));
  CHECK(distance(Space{2, Norm::Linf}, a, b) == Catch::Approx(4.0));

  double c[3] = {1.0, 1.0, 1.0};
  double e[3] = {2.0, -1.0, 1.5};
  CHECK(distance(Space{3, Norm::Linf}, c, e) == Catch::Approx(2.0));
}

TEST_CASE("space validation rejects bad dimensions") {
  Space s{0, Norm::L2};
  CHECK_THROWS_AS(s.validate(), DomainError);
  Space neg{-2, Norm::L2};
  CHECK_THROWS_AS(neg.validate(), DomainError);
}

TEST_CASE("uniform ball samples stay inside and have the right radial law") {
  Space s{2, Norm::L2};
  RngStream rng(31337);
  RunningStat radial;
  double out[2];
  const double origin[2] = {0.0, 0.0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sample_uniform_ball(s, origin, 2.0, rng, out);
    double r = distance(s, out, origin);
    REQUIRE(r <= 2.0);
    radial.add(r);
  }
  // E[r] = 2R/3 for a uniform disk of radius R
  double expect = 4.0 / 3.0;
  CHECK(std::abs(radial.mean() - expect) <= 3.0 * radial.std_error());
}
