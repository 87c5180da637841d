#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "pcfed/constraints.hpp"
#include "pcfed/metrics.hpp"
#include "pcfed/numerics.hpp"
#include "pcfed/objectives.hpp"
#include "pcfed/rng.hpp"

namespace pcfed::federation {

struct GammaSchedule {
  enum class Kind { Constant, InvSqrtRounds };
  Kind kind = Kind::Constant;
  double value = 0.1;  // constant value, or the numerator c of c / sqrt(R)

  double at(std::size_t total_rounds) const;
};

struct RhoSchedule {
  enum class Kind { Constant, SqrtRounds, QuarticRootShifted };
  Kind kind = Kind::Constant;
  double value = 1.0;      // Constant level, or multiplier for SqrtRounds
  double offset = 10000.0; // QuarticRootShifted: rho_r = (r + offset)^(1/4)

  // Penalty weight used during round r of total_rounds.
  double at(std::size_t r, std::size_t total_rounds) const;
};

struct FederationConfig {
  std::size_t agents = 2;
  std::size_t dim = 1;
  std::size_t local_steps = 1;   // H
  std::size_t rounds = 1;        // R
  GammaSchedule gamma;
  RhoSchedule rho;
  PersonalizationWeights sigma;
  std::uint64_t seed = 0;
  double batch_fraction = 1.0;
  std::size_t threads = 1;
  // Keep the full iterate history only while total doubles stay below this.
  std::size_t history_budget_doubles = 10000000;

  void validate() const;
};

// One agent's copy of every block. blocks[j] has length dim; owner is the
// agent's own block index.
struct MultiBlockState {
  std::vector<ParamVector> blocks;
  std::size_t owner = 0;

  ParamVector block_mean() const;
  void require_finite(const char* where) const;
};

struct ServerState {
  std::vector<ParamVector> block_means;
  std::size_t round = 0;
};

// One local update. Draws a single stochastic gradient of the local loss at
// the agent's block mean, then steps the owned block against gradient,
// constraint penalty and coupling, and every other block against gradient and
// coupling only. Pure: the caller's state is not modified.
MultiBlockState local_step(const MultiBlockState& state, const ObjectiveOracle& oracle,
                           const ConstraintSet& set, double sigma_i, double gamma,
                           double rho, RngStream& stream, double batch_fraction);

// Exact block gradients of the penalized local objective
//   G(x) = f_i(mean) + (sigma_i/2)||x_own - mean||^2 + rho * penalty_i(x_own)
// as a function of the full stacked variable. Block j gets
//   grad f_i(mean)/m + sigma_i (1[j=own] - 1/m)(x_own - mean)
//   + 1[j=own] * rho * (x_own - proj(x_own)).
std::vector<ParamVector> penalized_block_grad(const MultiBlockState& state,
                                              const ObjectiveOracle& oracle,
                                              const ConstraintSet& set, double sigma_i,
                                              double rho);

double penalized_objective(const MultiBlockState& state, const ObjectiveOracle& oracle,
                           const ConstraintSet& set, double sigma_i, double rho);

// Smoothness bound of the penalized local objective at penalty weight rho.
double penalized_smoothness(double l_f, double sigma_max, std::size_t agents, double rho);

// Step-size guard gamma <= min(1/(6L), 1/(5L(H-1))). Returns false (warn,
// never abort) when violated; with H == 1 only the first term applies.
bool gamma_within_bound(double gamma, double l_penalized, std::size_t local_steps);

// Federated training loop: broadcast the block means, run H local steps per
// agent, average each block across agents. Agent updates within a round may
// run on several threads; every cross-agent reduction happens on the caller
// thread in agent order, so results are identical for any thread count.
class Engine {
 public:
  Engine(FederationConfig cfg,
         std::vector<std::shared_ptr<const ObjectiveOracle>> oracles,
         std::vector<ConstraintSet> sets, ParamVector init);

  // Advances one round. With evaluate false the metric fields are left NaN
  // (schedule bookkeeping is still filled), which skips the full objective
  // pass on rounds nobody reports.
  metrics::RoundRecord run_round(const metrics::ReferenceSolution* reference,
                                 bool evaluate = true);

  const FederationConfig& config() const { return cfg_; }
  const ServerState& server() const { return server_; }
  const std::vector<MultiBlockState>& agents() const { return agents_; }

  std::size_t total_steps() const { return cfg_.rounds * cfg_.local_steps; }
  std::size_t kstar() const { return kstar_; }
  // Stacked block means of the pre-step iterate at global step kstar; filled
  // once the owning round has run.
  const std::vector<ParamVector>& kstar_blocks() const { return kstar_blocks_; }
  bool kstar_captured() const { return kstar_captured_; }

  // Mean iterate at global step k (only when the full history fits the
  // budget; throws otherwise).
  const std::vector<ParamVector>& history_at(std::size_t k) const;
  bool keeps_full_history() const { return keep_history_; }

  bool gamma_warning() const { return gamma_warning_; }
  double smoothness_bound() const { return l_f_; }

 private:
  void run_agent_round(std::size_t i, double gamma, double rho,
                       std::vector<std::vector<ParamVector>>* trace);

  FederationConfig cfg_;
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles_;
  std::vector<ConstraintSet> sets_;
  ServerState server_;
  std::vector<MultiBlockState> agents_;
  std::vector<RngStream> grad_streams_;
  std::size_t kstar_ = 0;
  std::vector<ParamVector> kstar_blocks_;
  bool kstar_captured_ = false;
  bool keep_history_ = false;
  std::vector<std::vector<ParamVector>> history_;
  bool gamma_warning_ = false;
  double l_f_ = 0.0;
};

}  // namespace pcfed::federation
