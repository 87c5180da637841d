#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcfed/constraints.hpp"
#include "pcfed/numerics.hpp"
#include "pcfed/objectives.hpp"
#include "pcfed/rng.hpp"

namespace pcfed::metrics {

// One evaluation of the server state. infeasibility[i] is the distance of
// agent i's aggregated block to its constraint set; subopt is NaN when no
// reference solution is available.
struct RoundRecord {
  std::size_t round = 0;
  std::size_t k = 0;  // local-step count consumed so far
  double gamma = 0.0;
  double rho = 0.0;
  double global_loss = 0.0;
  double subopt = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> infeasibility;
  double infeas_max = 0.0;
  double consensus_residual = 0.0;
  bool kstar_flag = false;
};

enum class ReferenceMethod { Analytic, ProjectedGradient };

// Minimizer of F(x) = (1/m) sum_i f_i(x^{(i)}) subject to x^{(i)} in X_i,
// one block per agent.
struct ReferenceSolution {
  std::vector<ParamVector> x_star;
  double f_star = 0.0;
  ReferenceMethod method = ReferenceMethod::ProjectedGradient;
  double residual = 0.0;       // final gradient-mapping norm (PG) or 0 (analytic)
  std::size_t iterations = 0;
};

struct ReferenceOptions {
  double tol = 1e-10;
  std::size_t max_iters = 1000000;
  bool force_projected_gradient = false;
};

// Objective of the personalized problem on stacked per-agent blocks:
//   F(x) = (1/m) sum_i [ f_i(mean) + (sigma_i/2) ||x_i - mean||^2 ].
// Every local loss is evaluated at the block mean; with all blocks equal the
// sigma terms vanish and F reduces to the average local loss.
double global_objective(const std::vector<ParamVector>& blocks,
                        const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                        const PersonalizationWeights& sigma);

// Block gradient of F on stacked per-agent blocks.
std::vector<ParamVector> global_objective_grad(
    const std::vector<ParamVector>& blocks,
    const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
    const PersonalizationWeights& sigma);

// Exact minimizer when every oracle is a quadratic and every set is
// unconstrained (all blocks collapse onto the solution of the summed normal
// equations); otherwise projected gradient with step 1/(L_f + sigma_max * m)
// run to gradient-mapping norm <= tol. Throws RuntimeFailure carrying the
// final residual if the tolerance is not reached.
ReferenceSolution solve_reference(
    const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
    const std::vector<ConstraintSet>& sets, const PersonalizationWeights& sigma,
    const ReferenceOptions& opts = {});

void save_reference(const ReferenceSolution& ref, const std::string& path);
ReferenceSolution load_reference(const std::string& path);

// Minimizer of the penalized surrogate sum_i [ f_i(xbar)/m ... ] at fixed rho,
// i.e. gradient descent on G_rho over the stacked blocks. Used for
// penalty-bias diagnostics.
std::vector<ParamVector> solve_penalized_minimizer(
    const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
    const std::vector<ConstraintSet>& sets, const PersonalizationWeights& sigma,
    double rho, double tol = 1e-10, std::size_t max_iters = 1000000);

// Fills loss / suboptimality / infeasibility / consensus fields for stacked
// per-agent blocks. Schedule fields (round, k, gamma, rho, kstar_flag) are the
// caller's.
RoundRecord evaluate_blocks(const std::vector<ParamVector>& blocks,
                            const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                            const std::vector<ConstraintSet>& sets,
                            const PersonalizationWeights& sigma,
                            const ReferenceSolution* reference,
                            double consensus_residual);

// Same for a single shared model (the baselines): every block is w.
RoundRecord evaluate_model(const ParamVector& w,
                           const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                           const std::vector<ConstraintSet>& sets,
                           const PersonalizationWeights& sigma,
                           const ReferenceSolution* reference);

// Uniform draw from {0, ..., total_steps-1}; the iterate reported by a run.
std::size_t sample_kstar(std::size_t total_steps, RngStream& stream);

// Least-squares slope of log(metric) against log(R) with a normal-theory 95%
// confidence half-width. Non-positive metric values are dropped with a
// warning since they have no log.
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_halfwidth = 0.0;
  std::size_t points_used = 0;
  std::vector<std::string> warnings;
};
RateFit rate_fit(const std::vector<double>& r_values, const std::vector<double>& metric_values);

// Constants of the convergence bound for a concrete problem instance:
// distance-to-penalized-minimizer Q0, Monte Carlo second moment M of the
// stochastic gradients at the reference point, and the smoothness constants.
struct DiagnosticsReport {
  double q0 = 0.0;          // ||x0 - x_rho*||^2
  double m_second_moment = 0.0;
  double m_stderr = 0.0;
  double l_f = 0.0;         // max_i L_i
  double l_penalized = 0.0; // (L_f + sigma_max (m-1)) / m + rho
  double grad_norm_at_star = 0.0;  // ||grad F(x*)|| block-stacked
  std::size_t mc_draws = 0;
};
DiagnosticsReport diagnostics(const std::vector<std::shared_ptr<const ObjectiveOracle>>& oracles,
                              const std::vector<ConstraintSet>& sets,
                              const PersonalizationWeights& sigma, double rho,
                              const std::vector<ParamVector>& init_blocks,
                              const ReferenceSolution& reference, std::uint64_t seed,
                              std::size_t mc_draws = 10000, double batch_fraction = 1.0);

}  // namespace pcfed::metrics
