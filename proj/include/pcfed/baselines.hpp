#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "pcfed/constraints.hpp"
#include "pcfed/federation.hpp"
#include "pcfed/metrics.hpp"
#include "pcfed/numerics.hpp"
#include "pcfed/objectives.hpp"
#include "pcfed/rng.hpp"

namespace pcfed::baselines {

enum class Method { FedAvg, FedProx, Scaffold };

struct BaselineConfig {
  Method method = Method::FedAvg;
  std::size_t agents = 2;
  std::size_t dim = 1;
  std::size_t local_steps = 1;
  std::size_t rounds = 1;
  double gamma = 0.01;
  federation::RhoSchedule rho;
  double prox_mu = 0.0;          // FedProx
  double global_step = 1.0;      // Scaffold server step
  std::size_t sampled_agents = 0;  // Scaffold participation; 0 means all
  PersonalizationWeights sigma;    // evaluation only; single-model methods
  std::uint64_t seed = 0;
  double batch_fraction = 1.0;
  std::size_t threads = 1;

  void validate() const;
};

// Stochastic gradient of the penalized local loss
//   f_i(w) + rho * penalty_i(w)
// shared by all three methods' inner loops.
ParamVector penalized_local_grad(const ObjectiveOracle& oracle, const ConstraintSet& set,
                                 double rho, const ParamVector& w, RngStream& stream,
                                 double batch_fraction);

struct ScaffoldControl {
  ParamVector server;
  std::vector<ParamVector> agents;
};

// Single-shared-model federated loop over the penalized losses. FedAvg
// averages local iterates; FedProx adds mu/2 ||w - w_round||^2 to each local
// objective; Scaffold applies control variates (option II updates) with
// uniform client sampling and a server step size.
class Engine {
 public:
  Engine(BaselineConfig cfg, std::vector<std::shared_ptr<const ObjectiveOracle>> oracles,
         std::vector<ConstraintSet> sets, ParamVector init);

  metrics::RoundRecord run_round(const metrics::ReferenceSolution* reference,
                                 bool evaluate = true);

  const BaselineConfig& config() const { return cfg_; }
  const ParamVector& model() const { return model_; }
  const ScaffoldControl& control() const { return control_; }

  std::size_t total_steps() const { return cfg_.rounds * cfg_.local_steps; }
  std::size_t kstar() const { return kstar_; }
  // Round-start model of the round containing global step kstar (the
  // closest thing a single-model method has to a per-step reported iterate).
  const ParamVector& kstar_model() const { return kstar_model_; }
  bool kstar_captured() const { return kstar_captured_; }
  // Agent subsets that participated, one entry per round run so far.
  const std::vector<std::vector<std::size_t>>& sampled_history() const {
    return sampled_history_;
  }

 private:
  ParamVector run_agent_round(std::size_t i, double rho, const ParamVector& start);

  BaselineConfig cfg_;
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles_;
  std::vector<ConstraintSet> sets_;
  ParamVector model_;
  ScaffoldControl control_;
  std::vector<RngStream> grad_streams_;
  RngStream participation_stream_;
  std::size_t round_ = 0;
  std::size_t kstar_ = 0;
  ParamVector kstar_model_;
  bool kstar_captured_ = false;
  std::vector<std::vector<std::size_t>> sampled_history_;
};

}  // namespace pcfed::baselines
