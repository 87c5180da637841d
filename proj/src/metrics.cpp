#include "pcfed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pcfed/errors.hpp"
#include "pcfed/federation.hpp"

namespace pcfed::metrics {

namespace {

void check_problem_shape(const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                         const std::vector<ConstraintSet>& sets,
                         const PersonalizationWeights& sigma) {
  if (oracles.empty()) throw ValidationError("problem: no oracles");
  if (sets.size() != oracles.size()) {
    throw ValidationError("problem: one constraint set per oracle required");
  }
  sigma.validate(oracles.size());
  const std::size_t dim = oracles[0]->dim();
  for (const auto& o : oracles) {
    if (!o) throw ValidationError("problem: null oracle");
    if (o->dim() != dim) throw ValidationError("problem: oracle dimensions differ");
  }
}

double max_smoothness(const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles) {
  double l = 0.0;
  for (const auto& o : oracles) l = std::max(l, o->smoothness_bound());
  return l;
}

const QuadraticObjective* as_quadratic(const ObjectiveOracle* o) {
  if (const auto* q = dynamic_cast<const QuadraticObjective*>(o)) return q;
  if (const auto* nq = dynamic_cast<const NoisyQuadraticObjective*>(o)) return &nq->base();
  return nullptr;
}

}  // namespace

double global_objective(const std::vector<ParamVector>& blocks,
                        const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                        const PersonalizationWeights& sigma) {
  const std::vector<ConstraintSet> probe_sets(oracles.size());
  check_problem_shape(oracles, probe_sets, sigma);
  const std::size_t m = oracles.size();
  if (blocks.size() != m) throw ValidationError("global_objective: need one block per agent");
  const ParamVector xbar = mean_of(blocks);
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    acc += oracles[i]->value(xbar);
    if (sigma[i] != 0.0) {
      acc += 0.5 * sigma[i] * norm_sq(sub(blocks[i], xbar));
    }
  }
  return acc / static_cast<double>(m);
}

std::vector<ParamVector> global_objective_grad(
    const std::vector<ParamVector>& blocks,
    const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
    const PersonalizationWeights& sigma) {
  const std::size_t m = oracles.size();
  if (blocks.size() != m) throw ValidationError("global_objective_grad: block count mismatch");
  const std::size_t n = blocks[0].size();
  const ParamVector xbar = mean_of(blocks);
  const double inv_m = 1.0 / static_cast<double>(m);

  ParamVector grad_sum(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    add_scaled_inplace(grad_sum, 1.0, oracles[i]->grad(xbar));
  }
  // sum_i sigma_i (x_i - xbar), shared by every block's gradient
  ParamVector coupling_sum(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (sigma[i] == 0.0) continue;
    for (std::size_t c = 0; c < n; ++c) coupling_sum[c] += sigma[i] * (blocks[i][c] - xbar[c]);
  }

  std::vector<ParamVector> out(m, ParamVector(n, 0.0));
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t c = 0; c < n; ++c) {
      const double coupling = sigma[j] * (blocks[j][c] - xbar[c]) - inv_m * coupling_sum[c];
      out[j][c] = inv_m * (inv_m * grad_sum[c] + coupling);
    }
  }
  return out;
}

ReferenceSolution solve_reference(
    const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
    const std::vector<ConstraintSet>& sets, const PersonalizationWeights& sigma,
    const ReferenceOptions& opts) {
  check_problem_shape(oracles, sets, sigma);
  const std::size_t m = oracles.size();
  const std::size_t n = oracles[0]->dim();

  bool all_unconstrained = true;
  for (const auto& s : sets) all_unconstrained = all_unconstrained && s.is_unconstrained();
  bool all_quadratic = true;
  for (const auto& o : oracles) all_quadratic = all_quadratic && (as_quadratic(o.get()) != nullptr);

  if (all_unconstrained && all_quadratic && !opts.force_projected_gradient) {
    // Stationarity puts every block at the minimizer of the summed quadratic.
    Matrix q_sum(n, n);
    ParamVector b_sum(n, 0.0);
    for (const auto& o : oracles) {
      const QuadraticObjective* q = as_quadratic(o.get());
      for (std::size_t c = 0; c < q_sum.data.size(); ++c) q_sum.data[c] += q->q().data[c];
      add_scaled_inplace(b_sum, 1.0, q->b());
    }
    ParamVector v = solve_linear(std::move(q_sum), std::move(b_sum));
    ReferenceSolution ref;
    ref.x_star.assign(m, v);
    ref.f_star = global_objective(ref.x_star, oracles, sigma);
    ref.method = ReferenceMethod::Analytic;
    return ref;
  }

  const double l = max_smoothness(oracles) + sigma.max_value() * static_cast<double>(m);
  const double step = l > 0.0 ? 1.0 / l : 1.0;

  std::vector<ParamVector> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = sets[i].project(ParamVector(n, 0.0));

  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    const auto grads = global_objective_grad(x, oracles, sigma);
    double gm_sq = 0.0;
    std::vector<ParamVector> next(m);
    for (std::size_t i = 0; i < m; ++i) {
      ParamVector cand = x[i];
      add_scaled_inplace(cand, -step, grads[i]);
      next[i] = sets[i].project(cand);
      for (std::size_t c = 0; c < n; ++c) {
        const double map = (x[i][c] - next[i][c]) / step;
        gm_sq += map * map;
      }
      require_finite(next[i], "solve_reference iterate");
    }
    x = std::move(next);
    residual = std::sqrt(gm_sq);
    if (residual <= opts.tol) {
      ReferenceSolution ref;
      ref.x_star = std::move(x);
      ref.f_star = global_objective(ref.x_star, oracles, sigma);
      ref.method = ReferenceMethod::ProjectedGradient;
      ref.residual = residual;
      ref.iterations = it;
      return ref;
    }
  }
  std::ostringstream msg;
  msg << "solve_reference: projected gradient did not reach tol " << opts.tol << " within "
      << opts.max_iters << " iterations (final gradient-mapping norm " << residual << ")";
  throw RuntimeFailure(msg.str());
}

std::vector<ParamVector> solve_penalized_minimizer(
    const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
    const std::vector<ConstraintSet>& sets, const PersonalizationWeights& sigma,
    double rho, double tol, std::size_t max_iters) {
  check_problem_shape(oracles, sets, sigma);
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw ValidationError("solve_penalized_minimizer: rho must be finite and >= 0");
  }
  const std::size_t m = oracles.size();
  const std::size_t n = oracles[0]->dim();
  const double l_pen = federation::penalized_smoothness(max_smoothness(oracles),
                                                        sigma.max_value(), m, rho);
  const double step = l_pen > 0.0 ? 1.0 / l_pen : 1.0;
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<ParamVector> x(m, ParamVector(n, 0.0));
  double gnorm = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= max_iters; ++it) {
    std::vector<ParamVector> grad(m, ParamVector(n, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      federation::MultiBlockState state{x, i};
      const auto gi = federation::penalized_block_grad(state, *oracles[i], sets[i],
                                                       sigma[i], rho);
      for (std::size_t j = 0; j < m; ++j) add_scaled_inplace(grad[j], inv_m, gi[j]);
    }
    double g_sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      g_sq += norm_sq(grad[j]);
      add_scaled_inplace(x[j], -step, grad[j]);
      require_finite(x[j], "solve_penalized_minimizer iterate");
    }
    gnorm = std::sqrt(g_sq);
    if (gnorm <= tol) return x;
  }
  std::ostringstream msg;
  msg << "solve_penalized_minimizer: gradient norm " << gnorm << " above tol " << tol
      << " after " << max_iters << " iterations";
  throw RuntimeFailure(msg.str());
}

RoundRecord evaluate_blocks(const std::vector<ParamVector>& blocks,
                            const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                            const std::vector<ConstraintSet>& sets,
                            const PersonalizationWeights& sigma,
                            const ReferenceSolution* reference,
                            double consensus_residual) {
  check_problem_shape(oracles, sets, sigma);
  RoundRecord rec;
  rec.global_loss = global_objective(blocks, oracles, sigma);
  if (reference) rec.subopt = rec.global_loss - reference->f_star;
  rec.infeasibility.resize(blocks.size());
  rec.infeas_max = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    rec.infeasibility[i] = sets[i].distance(blocks[i]);
    rec.infeas_max = std::max(rec.infeas_max, rec.infeasibility[i]);
  }
  rec.consensus_residual = consensus_residual;
  return rec;
}

RoundRecord evaluate_model(const ParamVector& w,
                           const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                           const std::vector<ConstraintSet>& sets,
                           const PersonalizationWeights& sigma,
                           const ReferenceSolution* reference) {
  const std::vector<ParamVector> blocks(oracles.size(), w);
  return evaluate_blocks(blocks, oracles, sets, sigma, reference, 0.0);
}

std::size_t sample_kstar(std::size_t total_steps, RngStream& stream) {
  if (total_steps == 0) throw ValidationError("sample_kstar: need at least one step");
  return static_cast<std::size_t>(stream.next_below(total_steps));
}

RateFit rate_fit(const std::vector<double>& r_values, const std::vector<double>& metric_values) {
  if (r_values.size() != metric_values.size()) {
    throw ValidationError("rate_fit: R and metric lengths differ");
  }
  RateFit fit;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < r_values.size(); ++i) {
    if (!(r_values[i] > 0.0)) throw ValidationError("rate_fit: R values must be positive");
    if (!(metric_values[i] > 0.0) || !std::isfinite(metric_values[i])) {
      std::ostringstream w;
      w << "dropped R=" << r_values[i] << ": metric " << metric_values[i]
        << " has no logarithm";
      fit.warnings.push_back(w.str());
      continue;
    }
    xs.push_back(std::log(r_values[i]));
    ys.push_back(std::log(metric_values[i]));
  }
  fit.points_used = xs.size();
  if (fit.points_used < 2) {
    fit.slope = std::numeric_limits<double>::quiet_NaN();
    fit.intercept = std::numeric_limits<double>::quiet_NaN();
    fit.ci_halfwidth = std::numeric_limits<double>::quiet_NaN();
    fit.warnings.push_back("fewer than 2 usable points, no fit");
    return fit;
  }
  const double nn = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / nn, my = sy / nn;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("rate_fit: all R values identical");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (xs.size() > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double resid = ys[i] - (fit.intercept + fit.slope * xs[i]);
      ssr += resid * resid;
    }
    const double se = std::sqrt(ssr / (nn - 2.0) / sxx);
    fit.ci_halfwidth = 1.96 * se;  // normal-theory interval
  } else {
    fit.ci_halfwidth = 0.0;
    fit.warnings.push_back("two points: slope exact, no residual degrees of freedom");
  }
  return fit;
}

DiagnosticsReport diagnostics(const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                              const std::vector<ConstraintSet>& sets,
                              const PersonalizationWeights& sigma, double rho,
                              const std::vector<ParamVector>& init_blocks,
                              const ReferenceSolution& reference, std::uint64_t seed,
                              std::size_t mc_draws, double batch_fraction) {
  check_problem_shape(oracles, sets, sigma);
  const std::size_t m = oracles.size();
  DiagnosticsReport rep;
  rep.l_f = max_smoothness(oracles);
  rep.l_penalized = federation::penalized_smoothness(rep.l_f, sigma.max_value(), m, rho);
  rep.mc_draws = mc_draws;

  const auto x_rho = solve_penalized_minimizer(oracles, sets, sigma, rho, 1e-9, 1000000);
  if (init_blocks.size() != m) throw ValidationError("diagnostics: init block count mismatch");
  double q0 = 0.0;
  for (std::size_t j = 0; j < m; ++j) q0 += norm_sq(sub(init_blocks[j], x_rho[j]));
  rep.q0 = q0;

  {
    const auto g = global_objective_grad(reference.x_star, oracles, sigma);
    double acc = 0.0;
    for (const auto& blk : g) acc += norm_sq(blk);
    rep.grad_norm_at_star = std::sqrt(acc);
  }

  // Stacked stochastic-gradient second moment of each agent's personalized
  // loss at the reference point.
  const ParamVector xbar = mean_of(reference.x_star);
  const double inv_m = 1.0 / static_cast<double>(m);
  RngStream stream(seed, kDiagnosticsStreamId);
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t d = 0; d < mc_draws; ++d) {
    for (std::size_t i = 0; i < m; ++i) {
      const ParamVector g = oracles[i]->grad_stochastic(xbar, stream, batch_fraction);
      const ParamVector diff = sub(reference.x_star[i], xbar);
      double stacked_sq = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double w = sigma[i] * ((j == i ? 1.0 : 0.0) - inv_m);
        for (std::size_t c = 0; c < g.size(); ++c) {
          const double v = inv_m * g[c] + w * diff[c];
          stacked_sq += v * v;
        }
      }
      sum += stacked_sq;
      sum_sq += stacked_sq * stacked_sq;
      ++count;
    }
  }
  rep.m_second_moment = sum / static_cast<double>(count);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(count) - rep.m_second_moment * rep.m_second_moment);
  rep.m_stderr = std::sqrt(var / static_cast<double>(count));
  return rep;
}

void save_reference(const ReferenceSolution& ref, const std::string& path) {
  nlohmann::json j;
  j["method"] = ref.method == ReferenceMethod::Analytic ? "analytic" : "projected_gradient";
  j["f_star"] = ref.f_star;
  j["residual"] = ref.residual;
  j["iterations"] = ref.iterations;
  j["x_star"] = ref.x_star;
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("save_reference: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out.good()) throw RuntimeFailure("save_reference: write failed for " + path);
}

ReferenceSolution load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_reference: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("load_reference: bad JSON in " + path + ": " + e.what());
  }
  ReferenceSolution ref;
  try {
    const std::string method = j.at("method").get<std::string>();
    ref.method = method == "analytic" ? ReferenceMethod::Analytic
                                      : ReferenceMethod::ProjectedGradient;
    ref.f_star = j.at("f_star").get<double>();
    ref.residual = j.value("residual", 0.0);
    ref.iterations = j.value("iterations", std::size_t{0});
    ref.x_star = j.at("x_star").get<std::vector<ParamVector>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("load_reference: missing field in " + path + ": " + e.what());
  }
  if (ref.x_star.empty()) throw ValidationError("load_reference: empty x_star in " + path);
  return ref;
}

}  // namespace pcfed::metrics
