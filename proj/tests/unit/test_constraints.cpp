#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "pcfed/constraints.hpp"
#include "pcfed/errors.hpp"
#include "pcfed/numerics.hpp"
#include "pcfed/rng.hpp"

using namespace pcfed;

TEST_CASE("l1 projection matches the frozen hand example") {
  const auto set = ConstraintSet::l1_ball(1.0);
  const ParamVector p = set.project({1.0, 1.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("l1 projection is identity inside the ball") {
  const auto set = ConstraintSet::l1_ball(2.0);
  const ParamVector x{0.5, -0.5, 0.25};
  CHECK(set.project(x) == x);
  CHECK(set.contains(x, 0.0));
}

TEST_CASE("l1 projection agrees with bisection across dimensions") {
  for (const std::size_t n : {std::size_t{2}, std::size_t{10}, std::size_t{1000}}) {
    RngStream stream(77 + n, 0);
    const auto set = ConstraintSet::l1_ball(1.0);
    for (int trial = 0; trial < 30; ++trial) {
      ParamVector x(n);
      for (auto& v : x) v = 2.0 * stream.next_gaussian();
      const ParamVector got = set.project(x);
      const auto want = testsupport::l1_project_bisection(x, 1.0);
      CHECK(testsupport::max_abs_diff(got, want) < 1e-9);
      CHECK(l1_norm(got) <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("box projection clamps per coordinate") {
  const auto set = ConstraintSet::box({-1.0, 0.0}, {1.0, 0.5});
  const ParamVector p = set.project({-3.0, 0.25});
  CHECK(p[0] == doctest::Approx(-1.0));
  CHECK(p[1] == doctest::Approx(0.25));
  CHECK(set.contains(p, 0.0));
}

TEST_CASE("halfspace projection lands on the boundary") {
  const auto set = ConstraintSet::halfspace({1.0, 1.0}, 1.0);
  const ParamVector p = set.project({1.0, 1.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
  CHECK(dot({1.0, 1.0}, p) == doctest::Approx(1.0));
  // already feasible: untouched
  const ParamVector q{0.0, 0.0};
  CHECK(set.project(q) == q);
}

TEST_CASE("unconstrained set is an identity map") {
  const auto set = ConstraintSet::unconstrained();
  CHECK(set.is_unconstrained());
  const ParamVector x{5.0, -7.0};
  CHECK(set.project(x) == x);
  CHECK(set.penalty_value(x) == 0.0);
  CHECK(linf_norm(set.penalty_grad(x)) == 0.0);
}

TEST_CASE("penalty value and gradient are consistent with the projection") {
  const auto set = ConstraintSet::l1_ball(1.0);
  RngStream stream(3, 0);
  for (int trial = 0; trial < 50; ++trial) {
    ParamVector x(6);
    for (auto& v : x) v = 2.0 * stream.next_gaussian();
    const ParamVector p = set.project(x);
    const double want = 0.5 * norm_sq(sub(x, p));
    CHECK(set.penalty_value(x) == doctest::Approx(want).epsilon(1e-12));
    CHECK(testsupport::max_abs_diff(set.penalty_grad(x), sub(x, p)) == 0.0);
    CHECK(set.distance(x) == doctest::Approx(norm(sub(x, p))).epsilon(1e-12));
  }
}

TEST_CASE("penalty gradient matches finite differences") {
  const auto set = ConstraintSet::l1_ball(0.8);
  const ParamVector x{1.2, -0.4, 0.9};
  const auto fd = testsupport::finite_diff_grad(
      [&set](const std::vector<double>& y) { return set.penalty_value(y); }, x);
  CHECK(testsupport::rel_err(set.penalty_grad(x), fd) < 1e-5);
}

TEST_CASE("invalid construction and inputs are rejected") {
  CHECK_THROWS_AS(ConstraintSet::l1_ball(0.0), ValidationError);
  CHECK_THROWS_AS(ConstraintSet::l1_ball(-1.0), ValidationError);
  CHECK_THROWS_AS(ConstraintSet::box({0.0}, {-1.0}), ValidationError);
  CHECK_THROWS_AS(ConstraintSet::box({0.0, 0.0}, {1.0}), ValidationError);
  CHECK_THROWS_AS(ConstraintSet::halfspace({0.0, 0.0}, 1.0), ValidationError);
  const auto set = ConstraintSet::l1_ball(1.0);
  CHECK_THROWS_AS(set.project({std::nan(""), 0.0}), RuntimeFailure);
}

TEST_CASE("projection onto a mismatched box dimension fails loudly") {
  const auto set = ConstraintSet::box({-1.0}, {1.0});
  CHECK_THROWS_AS(set.project({1.0, 2.0}), ValidationError);
}
