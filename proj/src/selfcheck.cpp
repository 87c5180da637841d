#include "pcfed/selfcheck.hpp"

#include <cmath>
#include <sstream>

#include "pcfed/baselines.hpp"
#include "pcfed/constraints.hpp"
#include "pcfed/data.hpp"
#include "pcfed/federation.hpp"
#include "pcfed/metrics.hpp"
#include "pcfed/numerics.hpp"
#include "pcfed/objectives.hpp"
#include "pcfed/rng.hpp"

namespace pcfed::selfcheck {

namespace {

CheckResult check(const std::string& name, bool ok, const std::string& detail = "") {
  return CheckResult{name, ok, detail};
}

std::string num(double x) { return format_double(x); }

CheckResult projection_idempotent() {
  RngStream stream(99, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    ParamVector x(8);
    for (auto& v : x) v = 3.0 * stream.next_gaussian();
    for (const auto& set :
         {ConstraintSet::l1_ball(1.5),
          ConstraintSet::box(ParamVector(8, -0.4), ParamVector(8, 0.7)),
          ConstraintSet::halfspace(ParamVector(8, 1.0), 2.0)}) {
      const ParamVector p = set.project(x);
      const ParamVector pp = set.project(p);
      worst = std::max(worst, linf_norm(sub(pp, p)));
      if (!set.contains(p, 1e-9)) {
        return check("projection_idempotent", false, "projected point left the set");
      }
    }
  }
  return check("projection_idempotent", worst < 1e-9, "max drift " + num(worst));
}

CheckResult l1_projection_value() {
  const ParamVector p = ConstraintSet::l1_ball(1.0).project({1.0, 1.0});
  const double err = std::max(std::abs(p[0] - 0.5), std::abs(p[1] - 0.5));
  return check("l1_projection_value", err < 1e-12, "err " + num(err));
}

CheckResult quadratic_gradient_fd() {
  RngStream stream(7, 0);
  Matrix q = Matrix::identity(5);
  for (std::size_t i = 0; i < 5; ++i) q.at(i, i) = 1.0 + 0.3 * static_cast<double>(i);
  ParamVector b(5);
  for (auto& v : b) v = stream.next_gaussian();
  QuadraticObjective f(q, b);
  ParamVector x(5);
  for (auto& v : x) v = stream.next_gaussian();
  const ParamVector g = f.grad(x);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    ParamVector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (f.value(xp) - f.value(xm)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g[i]));
  }
  return check("quadratic_gradient_fd", worst < 1e-5, "max abs err " + num(worst));
}

CheckResult stream_replay() {
  RngStream a(42, 3);
  RngStream b(42, 3);
  for (int i = 0; i < 100; ++i) {
    if (a.next_u64() != b.next_u64()) {
      return check("stream_replay", false, "diverged before draw 100");
    }
  }
  RngStream c(42, 4);
  bool distinct = false;
  RngStream a2(42, 3);
  for (int i = 0; i < 10; ++i) distinct = distinct || (a2.next_u64() != c.next_u64());
  return check("stream_replay", distinct, distinct ? "" : "streams 3 and 4 collide");
}

CheckResult schedule_values() {
  federation::RhoSchedule quartic;
  quartic.kind = federation::RhoSchedule::Kind::QuarticRootShifted;
  const double at0 = quartic.at(0, 100);
  federation::GammaSchedule gamma;
  gamma.kind = federation::GammaSchedule::Kind::InvSqrtRounds;
  gamma.value = 0.3;
  const double g = gamma.at(64);
  const bool ok = std::abs(at0 - 10.0) < 1e-12 && std::abs(g - 0.3 / 8.0) < 1e-15;
  return check("schedule_values", ok, "rho(0) " + num(at0) + ", gamma(64) " + num(g));
}

CheckResult local_step_reference_point() {
  federation::MultiBlockState state;
  state.owner = 0;
  state.blocks = {ParamVector{2.0}, ParamVector{-0.5}};
  Matrix q(1, 1);
  q.at(0, 0) = 1.0;
  QuadraticObjective f(q, ParamVector{0.0});
  RngStream stream(1, 0);
  const auto next =
      federation::local_step(state, f, ConstraintSet::l1_ball(0.25), 0.8, 0.1, 2.0, stream, 1.0);
  const double own_err = std::abs(next.blocks[0][0] - 1.5625);
  const double cross_err = std::abs(next.blocks[1][0] - (-0.5875));
  return check("local_step_reference_point", own_err < 1e-12 && cross_err < 1e-12,
               "own err " + num(own_err) + ", cross err " + num(cross_err));
}

CheckResult reference_single_agent() {
  Matrix q = Matrix::identity(2);
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles = {
      std::make_shared<QuadraticObjective>(q, ParamVector{2.0, 0.0})};
  std::vector<ConstraintSet> sets = {ConstraintSet::l1_ball(1.0)};
  const auto ref = metrics::solve_reference(oracles, sets, PersonalizationWeights::constant(0.0, 1));
  const double xerr =
      std::max(std::abs(ref.x_star[0][0] - 1.0), std::abs(ref.x_star[0][1] - 0.0));
  const double ferr = std::abs(ref.f_star - (-1.5));
  return check("reference_single_agent", xerr < 1e-8 && ferr < 1e-10,
               "x err " + num(xerr) + ", f err " + num(ferr));
}

CheckResult engine_round_finite() {
  data::SyntheticQuadraticSpec spec;
  spec.agents = 3;
  spec.dim = 6;
  spec.noise_level = 0.5;
  spec.tau_fraction = {0.9};
  auto built = data::make_synthetic_quadratic(spec, 2024);
  federation::FederationConfig fc;
  fc.agents = 3;
  fc.dim = 6;
  fc.local_steps = 3;
  fc.rounds = 4;
  fc.gamma.value = 0.05;
  fc.rho.value = 1.0;
  fc.sigma = PersonalizationWeights::constant(0.5, 3);
  fc.seed = 11;
  federation::Engine engine(fc, built.oracles, built.sets, ParamVector(6, 0.0));
  double last = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    const auto rec = engine.run_round(nullptr);
    if (!std::isfinite(rec.global_loss) || !std::isfinite(rec.consensus_residual)) {
      return check("engine_round_finite", false, "non-finite metric at round " +
                                                     std::to_string(rec.round));
    }
    last = rec.global_loss;
  }
  return check("engine_round_finite", engine.kstar_captured(), "final loss " + num(last));
}

CheckResult baseline_round_finite() {
  data::SyntheticQuadraticSpec spec;
  spec.agents = 3;
  spec.dim = 6;
  spec.noise_level = 0.5;
  spec.tau_fraction = {0.9};
  auto built = data::make_synthetic_quadratic(spec, 2024);
  baselines::BaselineConfig bc;
  bc.method = baselines::Method::Scaffold;
  bc.agents = 3;
  bc.dim = 6;
  bc.local_steps = 3;
  bc.rounds = 4;
  bc.gamma = 0.05;
  bc.rho.value = 1.0;
  bc.sampled_agents = 2;
  bc.sigma = PersonalizationWeights::constant(0.5, 3);
  bc.seed = 11;
  baselines::Engine engine(bc, built.oracles, built.sets, ParamVector(6, 0.0));
  for (std::size_t r = 0; r < 4; ++r) {
    const auto rec = engine.run_round(nullptr);
    if (!std::isfinite(rec.global_loss)) {
      return check("baseline_round_finite", false,
                   "non-finite loss at round " + std::to_string(rec.round));
    }
  }
  return check("baseline_round_finite", engine.kstar_captured());
}

CheckResult fixed_order_reduction() {
  ParamVector xs(1000);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + 1e-12 * static_cast<double>(i));
  }
  double manual = 0.0;
  for (const double v : xs) manual += v * v;
  const double lib = norm_sq(xs);
  return check("fixed_order_reduction", lib == manual, "difference must be exactly zero");
}

}  // namespace

std::vector<CheckResult> run_all() {
  std::vector<CheckResult> results;
  results.push_back(projection_idempotent());
  results.push_back(l1_projection_value());
  results.push_back(quadratic_gradient_fd());
  results.push_back(stream_replay());
  results.push_back(schedule_values());
  results.push_back(local_step_reference_point());
  results.push_back(reference_single_agent());
  results.push_back(engine_round_finite());
  results.push_back(baseline_round_finite());
  results.push_back(fixed_order_reduction());
  return results;
}

}  // namespace pcfed::selfcheck
