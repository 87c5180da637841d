#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "../support/oracles.hpp"
#include "pcfed/data.hpp"
#include "pcfed/errors.hpp"
#include "pcfed/metrics.hpp"

using namespace pcfed;

namespace {

std::vector<std::shared_ptr<const ObjectiveOracle>> two_quadratics() {
  Matrix q1 = Matrix::identity(2);
  Matrix q2 = Matrix::identity(2);
  q2.at(0, 0) = 2.0;
  return {std::make_shared<QuadraticObjective>(q1, ParamVector{1.0, 0.0}),
          std::make_shared<QuadraticObjective>(q2, ParamVector{0.0, 1.0})};
}

}  // namespace

TEST_CASE("global objective evaluates every loss at the block mean") {
  const auto oracles = two_quadratics();
  const PersonalizationWeights sigma({0.5, 1.5});
  const std::vector<ParamVector> blocks{{1.0, 0.0}, {0.0, 1.0}};
  const ParamVector mean{0.5, 0.5};
  const double want =
      0.5 * (oracles[0]->value(mean) + 0.5 * 0.5 * norm_sq(sub(blocks[0], mean)) +
             oracles[1]->value(mean) + 0.5 * 1.5 * norm_sq(sub(blocks[1], mean)));
  CHECK(metrics::global_objective(blocks, oracles, sigma) ==
        doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("global objective gradient matches finite differences") {
  const auto oracles = two_quadratics();
  const PersonalizationWeights sigma({0.3, 0.8});
  const auto value = [&](const std::vector<double>& flat) {
    const std::vector<ParamVector> blocks{{flat[0], flat[1]}, {flat[2], flat[3]}};
    return metrics::global_objective(blocks, oracles, sigma);
  };
  const std::vector<double> flat{0.7, -0.4, 0.1, 0.9};
  const auto fd = testsupport::finite_diff_grad(value, flat);
  const auto grads = metrics::global_objective_grad({{0.7, -0.4}, {0.1, 0.9}}, oracles, sigma);
  CHECK(testsupport::rel_err({grads[0][0], grads[0][1], grads[1][0], grads[1][1]}, fd) < 1e-6);
}

TEST_CASE("analytic reference matches the normal equations") {
  const auto oracles = two_quadratics();
  const std::vector<ConstraintSet> sets{ConstraintSet::unconstrained(),
                                        ConstraintSet::unconstrained()};
  const PersonalizationWeights sigma({0.7, 0.2});
  const auto ref = metrics::solve_reference(oracles, sets, sigma);
  CHECK(ref.method == metrics::ReferenceMethod::Analytic);
  // minimizer of mean of f_i over a shared point: (Q1 + Q2) v = b1 + b2
  Matrix qsum = Matrix::identity(2);
  qsum.at(0, 0) = 3.0;
  qsum.at(1, 1) = 2.0;
  const ParamVector v = solve_linear(qsum, {1.0, 1.0});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(testsupport::max_abs_diff(ref.x_star[i], v) < 1e-12);
  }
  // at the common point the sigma terms vanish
  const double want = 0.5 * (oracles[0]->value(v) + oracles[1]->value(v));
  CHECK(ref.f_star == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("projected gradient reference satisfies constrained optimality") {
  // single agent, Q = I, b = (2, 0), l1 radius 1: the solution is (1, 0)
  // with f* = -1.5
  Matrix q = Matrix::identity(2);
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles{
      std::make_shared<QuadraticObjective>(q, ParamVector{2.0, 0.0})};
  std::vector<ConstraintSet> sets{ConstraintSet::l1_ball(1.0)};
  const auto ref = metrics::solve_reference(oracles, sets, PersonalizationWeights({0.0}));
  CHECK(ref.method == metrics::ReferenceMethod::ProjectedGradient);
  CHECK(std::abs(ref.x_star[0][0] - 1.0) < 1e-8);
  CHECK(std::abs(ref.x_star[0][1] - 0.0) < 1e-8);
  CHECK(ref.f_star == doctest::Approx(-1.5).epsilon(1e-10));
  CHECK(ref.residual <= 1e-10);
}

TEST_CASE("pg reference is self-consistent when iterations double") {
  const auto oracles = two_quadratics();
  const std::vector<ConstraintSet> sets{ConstraintSet::l1_ball(0.4),
                                        ConstraintSet::l1_ball(0.3)};
  const PersonalizationWeights sigma({1.0, 2.0});
  metrics::ReferenceOptions loose;
  loose.tol = 1e-8;
  const auto a = metrics::solve_reference(oracles, sets, sigma, loose);
  metrics::ReferenceOptions tight;
  tight.tol = 1e-12;
  const auto b = metrics::solve_reference(oracles, sets, sigma, tight);
  CHECK(std::abs(a.f_star - b.f_star) < 1e-9);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(testsupport::max_abs_diff(a.x_star[i], b.x_star[i]) < 1e-5);
  }
}

TEST_CASE("forcing projected gradient on an analytic case agrees") {
  const auto oracles = two_quadratics();
  const std::vector<ConstraintSet> sets{ConstraintSet::unconstrained(),
                                        ConstraintSet::unconstrained()};
  const PersonalizationWeights sigma({0.7, 0.2});
  const auto analytic = metrics::solve_reference(oracles, sets, sigma);
  metrics::ReferenceOptions opts;
  opts.force_projected_gradient = true;
  const auto pg = metrics::solve_reference(oracles, sets, sigma, opts);
  CHECK(pg.method == metrics::ReferenceMethod::ProjectedGradient);
  CHECK(std::abs(pg.f_star - analytic.f_star) < 1e-10);
}

TEST_CASE("reference json round trips") {
  metrics::ReferenceSolution ref;
  ref.x_star = {{0.25, -1.5}, {3.0, 0.0}};
  ref.f_star = -0.75;
  ref.method = metrics::ReferenceMethod::Analytic;
  ref.residual = 1e-12;
  ref.iterations = 42;
  const auto path = std::filesystem::temp_directory_path() /
                    ("pcfed_ref_" + std::to_string(::getpid()) + ".json");
  metrics::save_reference(ref, path.string());
  const auto back = metrics::load_reference(path.string());
  std::filesystem::remove(path);
  CHECK(back.f_star == ref.f_star);
  CHECK(back.method == ref.method);
  CHECK(back.iterations == 42);
  REQUIRE(back.x_star.size() == 2);
  CHECK(back.x_star[0] == ref.x_star[0]);
  CHECK(back.x_star[1] == ref.x_star[1]);
}

TEST_CASE("evaluate_blocks reports feasibility distances and suboptimality") {
  const auto oracles = two_quadratics();
  const std::vector<ConstraintSet> sets{ConstraintSet::l1_ball(1.0),
                                        ConstraintSet::l1_ball(1.0)};
  const PersonalizationWeights sigma({0.0, 0.0});
  const auto ref = metrics::solve_reference(oracles, sets, sigma);
  const std::vector<ParamVector> blocks{{2.0, 0.0}, {0.5, 0.0}};
  const auto rec = metrics::evaluate_blocks(blocks, oracles, sets, sigma, &ref, 0.125);
  CHECK(rec.infeasibility.size() == 2);
  CHECK(rec.infeasibility[0] == doctest::Approx(1.0).epsilon(1e-12));  // (2,0) -> (1,0)
  CHECK(rec.infeasibility[1] == doctest::Approx(0.0));
  CHECK(rec.infeas_max == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rec.consensus_residual == 0.125);
  CHECK(std::isfinite(rec.subopt));
  const double f_here = metrics::global_objective(blocks, oracles, sigma);
  CHECK(rec.subopt == doctest::Approx(f_here - ref.f_star).epsilon(1e-12));
}

TEST_CASE("evaluate_model replicates the shared model across blocks") {
  const auto oracles = two_quadratics();
  const std::vector<ConstraintSet> sets{ConstraintSet::l1_ball(5.0),
                                        ConstraintSet::l1_ball(5.0)};
  const PersonalizationWeights sigma({0.4, 0.6});
  const ParamVector w{0.3, -0.2};
  const auto rec = metrics::evaluate_model(w, oracles, sets, sigma, nullptr);
  // identical blocks: sigma terms vanish, loss is the plain average
  const double want = 0.5 * (oracles[0]->value(w) + oracles[1]->value(w));
  CHECK(rec.global_loss == doctest::Approx(want).epsilon(1e-14));
  CHECK(std::isnan(rec.subopt));
  CHECK(rec.consensus_residual == 0.0);
}

TEST_CASE("kstar sampling is uniform over the step range") {
  RngStream stream(1234, 0);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) ++counts[metrics::sample_kstar(10, stream)];
  for (const int c : counts) {
    CHECK(c > 9200);
    CHECK(c < 10800);
  }
}

TEST_CASE("rate fit recovers exact power laws") {
  const std::vector<double> rs{64.0, 256.0, 1024.0};
  std::vector<double> half, one;
  for (const double r : rs) {
    half.push_back(3.0 / std::sqrt(r));
    one.push_back(5.0 / r);
  }
  const auto fit_half = metrics::rate_fit(rs, half);
  CHECK(fit_half.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(fit_half.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-10));
  CHECK(fit_half.ci_halfwidth == doctest::Approx(0.0).epsilon(1e-9));
  const auto fit_one = metrics::rate_fit(rs, one);
  CHECK(fit_one.slope == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("rate fit drops non-positive values with a warning") {
  const auto fit = metrics::rate_fit({10.0, 100.0, 1000.0}, {1.0, -0.5, 0.1});
  CHECK(fit.points_used == 2);
  CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("rate fit degenerates gracefully") {
  const auto fit = metrics::rate_fit({10.0, 100.0}, {-1.0, -1.0});
  CHECK(fit.points_used == 0);
  CHECK(std::isnan(fit.slope));
  CHECK_THROWS_AS(metrics::rate_fit({10.0, 10.0, 10.0}, {1.0, 2.0, 3.0}), ValidationError);
}

TEST_CASE("penalized minimizer sits between feasible set and unconstrained optimum") {
  Matrix q = Matrix::identity(2);
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles{
      std::make_shared<QuadraticObjective>(q, ParamVector{2.0, 0.0})};
  std::vector<ConstraintSet> sets{ConstraintSet::l1_ball(1.0)};
  const PersonalizationWeights sigma({0.0});
  const auto blocks = metrics::solve_penalized_minimizer(oracles, sets, sigma, 4.0, 1e-11);
  REQUIRE(blocks.size() == 1);
  // with rho = 4: x = argmin 0.5||x||^2 - 2 x_1 + 4 * 0.5 dist^2; along e_1 the
  // first-order condition x - 2 + 4 (x - 1) = 0 gives x = 6/5 = 1.2
  CHECK(blocks[0][0] == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(std::abs(blocks[0][1]) < 1e-8);
}

TEST_CASE("diagnostics report sane bound constants") {
  data::SyntheticQuadraticSpec spec;
  spec.agents = 2;
  spec.dim = 3;
  spec.noise_level = 0.8;
  spec.tau_fraction = {0.9};
  const auto built = data::make_synthetic_quadratic(spec, 42);
  const PersonalizationWeights sigma = PersonalizationWeights::constant(0.5, 2);
  const auto ref = metrics::solve_reference(built.oracles, built.sets, sigma);
  const std::vector<ParamVector> init(2, ParamVector(3, 0.0));
  const auto report =
      metrics::diagnostics(built.oracles, built.sets, sigma, 2.0, init, ref, 9, 4000);
  CHECK(report.q0 >= 0.0);
  CHECK(report.l_f > 0.0);
  CHECK(report.l_penalized > 2.0);  // rho term enters additively
  CHECK(report.mc_draws == 4000);
  // noise ~ nu^2 = 0.64 per draw plus exact-gradient spread across agents
  CHECK(report.m_second_moment > 0.0);
  CHECK(report.m_stderr < report.m_second_moment);
}
