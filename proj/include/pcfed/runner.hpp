#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcfed/baselines.hpp"
#include "pcfed/constraints.hpp"
#include "pcfed/data.hpp"
#include "pcfed/federation.hpp"
#include "pcfed/metrics.hpp"
#include "pcfed/objectives.hpp"

namespace pcfed::runner {

// Everything a run needs, parsed from a flat key=value file or a JSON object
// with the same keys. Unknown keys are rejected.
struct ExperimentConfig {
  std::string name = "experiment";

  // Problem family: synthetic_quadratic | synthetic_softmax | mnist | cifar10
  std::string problem = "synthetic_quadratic";
  // pcfedavg | fedavg | fedprox | scaffold
  std::string method = "pcfedavg";

  std::size_t agents = 4;
  std::size_t dim = 20;              // synthetic_quadratic block size
  std::size_t local_steps = 4;       // H
  std::size_t rounds = 64;           // R

  federation::GammaSchedule gamma;
  federation::RhoSchedule rho;
  std::vector<double> sigma;         // scalar broadcast or one per agent
  std::vector<double> tau;           // l1 radii, one per agent (or scalar)
  std::vector<double> tau_fraction;  // alternative: fraction of |v*|_1

  double batch_fraction = 1.0;
  double prox_mu = 0.0;
  double global_step = 1.0;
  std::size_t sampled_agents = 0;

  std::vector<std::uint64_t> seeds{1};
  std::uint64_t problem_seed = 1234567;
  std::string out_dir = "out";
  std::size_t eval_every = 1;
  std::size_t threads = 1;

  // synthetic_quadratic
  double condition_number = 10.0;
  double noise_level = 1.0;
  double b_scale = 1.0;

  // synthetic_softmax
  std::size_t feature_dim = 50;
  std::size_t classes = 3;
  std::size_t samples_per_agent = 200;

  // dataset problems
  std::string mnist_images;
  std::string mnist_labels;
  std::vector<std::string> cifar_batches;
  std::string partition_scheme = "by_label_shards";  // iid_shuffle | by_label_shards
  std::size_t shards_per_agent = 2;
  std::size_t data_subset = 0;  // stratified row cap, 0 = all
  bool add_bias = false;

  // reference handling: analytic_or_pg | pg | none
  std::string reference = "analytic_or_pg";
  double reference_tol = 1e-10;
  std::size_t reference_max_iters = 1000000;
  std::string reference_cache;  // optional path to read/write the solution

  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
// key=value override applied after parsing (CLI --set).
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Oracles, sets and reference for a config, independent of the run seed.
struct BuiltProblem {
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles;
  std::vector<ConstraintSet> sets;
  PersonalizationWeights sigma;
  std::size_t dim = 0;
  double l_f = 0.0;
  std::optional<metrics::ReferenceSolution> reference;
  std::vector<double> tau;
};
BuiltProblem build_problem(const ExperimentConfig& cfg);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<metrics::RoundRecord> records;
  std::size_t kstar = 0;
  std::size_t kstar_round = 0;
  double loss_at_kstar = 0.0;
  double subopt_at_kstar = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> infeas_at_kstar;
  double infeas_max_at_kstar = 0.0;
  double infeas_sq_max_at_kstar = 0.0;
  bool gamma_warning = false;
};
// evaluate_rounds=false skips per-round metric evaluation (records carry NaN
// losses); the reported-iterate metrics at the end are always computed.
SeedResult run_single_seed(const ExperimentConfig& cfg, const BuiltProblem& problem,
                           std::uint64_t seed, bool evaluate_rounds = true);

struct RunManifest {
  std::string config_hash;
  std::string code_version;
  std::string status;  // running | completed | failed
  std::vector<std::string> seed_output_dirs;
  double wall_clock_seconds = 0.0;
  std::string error;
};

// Runs every seed, writes <out>/<name>/seed_<s>/{rounds.csv,summary.csv} and
// <out>/<name>/manifest.json (written as running first, finalized after).
RunManifest run_experiment(const ExperimentConfig& cfg);

struct RateStudyOptions {
  std::vector<std::size_t> r_grid;
  std::size_t n_seeds = 10;
  double subopt_slope_threshold = -0.35;
  double infeas_slope_threshold = -0.70;
  bool stub_power_law = false;  // bypass the engine: exact C/sqrt(R) and C/R series
  std::string out_dir;
};

struct RateStudyReport {
  metrics::RateFit subopt_fit;
  metrics::RateFit infeas_fit;
  std::vector<std::size_t> r_grid;
  std::vector<double> subopt_means;
  std::vector<double> infeas_sq_means;
  bool within_thresholds = false;
};

// Theorem-style schedule per grid point: rho = sqrt(R), gamma = c / sqrt(R),
// K* resampled per seed. Writes rates.csv and rate_points.csv.
RateStudyReport run_rate_study(const ExperimentConfig& cfg, const RateStudyOptions& opts);

// Tidy per-figure CSVs (round, method, seed, value) aggregated from completed
// run directories. Returns the figure file paths written.
std::vector<std::string> emit_plot_data(const std::vector<std::string>& run_dirs,
                                        const std::string& out_dir);

// Solves the reference problem for a config and caches it as JSON.
metrics::ReferenceSolution solve_and_cache_reference(const ExperimentConfig& cfg,
                                                     const std::string& cache_path);

std::string hash_bytes_hex(const std::string& bytes);  // FNV-1a 64

}  // namespace pcfed::runner
