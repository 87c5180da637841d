#include "pcfed/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pcfed/errors.hpp"
#include "pcfed/version.hpp"

namespace fs = std::filesystem;

namespace pcfed::runner {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': cannot parse '" + v + "' as number");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': cannot parse '" + v +
                          "' as unsigned integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "': cannot parse '" + v + "' as bool");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

federation::GammaSchedule::Kind parse_gamma_kind(const std::string& v) {
  if (v == "constant") return federation::GammaSchedule::Kind::Constant;
  if (v == "inv_sqrt_rounds") return federation::GammaSchedule::Kind::InvSqrtRounds;
  throw ValidationError("gamma_schedule must be constant or inv_sqrt_rounds, got '" + v + "'");
}

federation::RhoSchedule::Kind parse_rho_kind(const std::string& v) {
  if (v == "constant") return federation::RhoSchedule::Kind::Constant;
  if (v == "sqrt_rounds") return federation::RhoSchedule::Kind::SqrtRounds;
  if (v == "quartic_root_shifted") return federation::RhoSchedule::Kind::QuarticRootShifted;
  throw ValidationError(
      "rho_schedule must be constant, sqrt_rounds or quartic_root_shifted, got '" + v + "'");
}

std::string csv_cell(double x) { return format_double(x); }

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

std::size_t column_index(const CsvTable& table, const std::string& name,
                         const std::string& path) {
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == name) return i;
  }
  throw ValidationError(path + ": missing column " + name);
}

}  // namespace

void ExperimentConfig::validate() const {
  static const std::vector<std::string> kProblems = {"synthetic_quadratic", "synthetic_softmax",
                                                     "mnist", "cifar10"};
  static const std::vector<std::string> kMethods = {"pcfedavg", "fedavg", "fedprox", "scaffold"};
  if (std::find(kProblems.begin(), kProblems.end(), problem) == kProblems.end()) {
    throw ValidationError("config: unknown problem '" + problem + "'");
  }
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
    throw ValidationError("config: unknown method '" + method + "'");
  }
  if (agents == 0) throw ValidationError("config: agents must be positive");
  if (rounds == 0) throw ValidationError("config: rounds must be positive");
  if (local_steps == 0) throw ValidationError("config: local_steps must be positive");
  if (eval_every == 0) throw ValidationError("config: eval_every must be positive");
  if (threads == 0) throw ValidationError("config: threads must be positive");
  if (seeds.empty()) throw ValidationError("config: need at least one seed");
  if (!(batch_fraction > 0.0) || batch_fraction > 1.0) {
    throw ValidationError("config: batch_fraction must lie in (0, 1]");
  }
  if (!sigma.empty() && sigma.size() != 1 && sigma.size() != agents) {
    throw ValidationError("config: sigma needs a scalar or one value per agent (" +
                          std::to_string(agents) + ")");
  }
  if (!tau.empty() && tau.size() != 1 && tau.size() != agents) {
    throw ValidationError("config: tau needs a scalar or one value per agent");
  }
  if (!tau_fraction.empty() && tau_fraction.size() != 1 && tau_fraction.size() != agents) {
    throw ValidationError("config: tau_fraction needs a scalar or one value per agent");
  }
  if (sampled_agents > agents) {
    throw ValidationError("config: sampled_agents exceeds agents");
  }
  if (reference != "analytic_or_pg" && reference != "pg" && reference != "none") {
    throw ValidationError("config: reference must be analytic_or_pg, pg or none");
  }
  if (problem == "mnist" && (mnist_images.empty() || mnist_labels.empty())) {
    throw ValidationError("config: mnist problem needs mnist_images and mnist_labels");
  }
  if (problem == "cifar10" && cifar_batches.empty()) {
    throw ValidationError("config: cifar10 problem needs cifar_batches");
  }
  if (partition_scheme != "iid_shuffle" && partition_scheme != "by_label_shards") {
    throw ValidationError("config: partition must be iid_shuffle or by_label_shards");
  }
  if (problem != "synthetic_quadratic" && tau.empty() && tau_fraction.empty()) {
    throw ValidationError("config: constrained problems need tau");
  }
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "name") cfg.name = v;
  else if (key == "problem") cfg.problem = v;
  else if (key == "method") cfg.method = v;
  else if (key == "agents") cfg.agents = parse_u64(key, v);
  else if (key == "dim") cfg.dim = parse_u64(key, v);
  else if (key == "local_steps") cfg.local_steps = parse_u64(key, v);
  else if (key == "rounds") cfg.rounds = parse_u64(key, v);
  else if (key == "gamma") cfg.gamma.value = parse_double(key, v);
  else if (key == "gamma_schedule") cfg.gamma.kind = parse_gamma_kind(v);
  else if (key == "rho") cfg.rho.value = parse_double(key, v);
  else if (key == "rho_schedule") cfg.rho.kind = parse_rho_kind(v);
  else if (key == "rho_offset") cfg.rho.offset = parse_double(key, v);
  else if (key == "sigma") cfg.sigma = parse_double_list(key, v);
  else if (key == "tau") cfg.tau = parse_double_list(key, v);
  else if (key == "tau_fraction") cfg.tau_fraction = parse_double_list(key, v);
  else if (key == "batch_fraction") cfg.batch_fraction = parse_double(key, v);
  else if (key == "prox_mu") cfg.prox_mu = parse_double(key, v);
  else if (key == "global_step") cfg.global_step = parse_double(key, v);
  else if (key == "sampled_agents") cfg.sampled_agents = parse_u64(key, v);
  else if (key == "seeds") {
    cfg.seeds.clear();
    for (const auto& s : split_list(v)) cfg.seeds.push_back(parse_u64(key, s));
  } else if (key == "problem_seed") cfg.problem_seed = parse_u64(key, v);
  else if (key == "out_dir") cfg.out_dir = v;
  else if (key == "eval_every") cfg.eval_every = parse_u64(key, v);
  else if (key == "threads") cfg.threads = parse_u64(key, v);
  else if (key == "condition_number") cfg.condition_number = parse_double(key, v);
  else if (key == "noise_level") cfg.noise_level = parse_double(key, v);
  else if (key == "b_scale") cfg.b_scale = parse_double(key, v);
  else if (key == "feature_dim") cfg.feature_dim = parse_u64(key, v);
  else if (key == "classes") cfg.classes = parse_u64(key, v);
  else if (key == "samples_per_agent") cfg.samples_per_agent = parse_u64(key, v);
  else if (key == "mnist_images") cfg.mnist_images = v;
  else if (key == "mnist_labels") cfg.mnist_labels = v;
  else if (key == "cifar_batches") cfg.cifar_batches = split_list(v);
  else if (key == "partition") cfg.partition_scheme = v;
  else if (key == "shards_per_agent") cfg.shards_per_agent = parse_u64(key, v);
  else if (key == "data_subset") cfg.data_subset = parse_u64(key, v);
  else if (key == "add_bias") cfg.add_bias = parse_bool(key, v);
  else if (key == "reference") cfg.reference = v;
  else if (key == "reference_tol") cfg.reference_tol = parse_double(key, v);
  else if (key == "reference_max_iters") cfg.reference_max_iters = parse_u64(key, v);
  else if (key == "reference_cache") cfg.reference_cache = v;
  else throw ValidationError("config: unknown key '" + key + "'");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  ExperimentConfig cfg;
  cfg.name = fs::path(path).stem().string();

  const std::string body = trim(text);
  if (!body.empty() && body[0] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("config " + path + ": bad JSON: " + e.what());
    }
    for (const auto& [key, val] : j.items()) {
      std::string as_text;
      if (val.is_string()) {
        as_text = val.get<std::string>();
      } else if (val.is_boolean()) {
        as_text = val.get<bool>() ? "true" : "false";
      } else if (val.is_number()) {
        as_text = format_double(val.get<double>());
      } else if (val.is_array()) {
        std::string joined;
        for (const auto& item : val) {
          if (!joined.empty()) joined += ",";
          if (item.is_string()) joined += item.get<std::string>();
          else joined += format_double(item.get<double>());
        }
        as_text = joined;
      } else {
        throw ValidationError("config " + path + ": unsupported JSON value for key " + key);
      }
      apply_override(cfg, key, as_text);
    }
    return cfg;
  }

  std::stringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config " + path + ": line " + std::to_string(lineno) +
                            " is not key=value");
    }
    apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

namespace {

Dataset with_bias(const Dataset& src) {
  Dataset out;
  out.n_samples = src.n_samples;
  out.n_features = src.n_features + 1;
  out.n_classes = src.n_classes;
  out.labels = src.labels;
  out.features.resize(out.n_samples * out.n_features);
  for (std::size_t r = 0; r < src.n_samples; ++r) {
    double* dst = out.features.data() + r * out.n_features;
    const double* s = src.row(r);
    std::copy(s, s + src.n_features, dst);
    dst[src.n_features] = 1.0;
  }
  return out;
}

std::vector<double> broadcast_list(const std::vector<double>& v, std::size_t m,
                                   const char* what) {
  if (v.size() == 1) return std::vector<double>(m, v[0]);
  if (v.size() == m) return v;
  throw ValidationError(std::string("config: ") + what + " needs 1 or " + std::to_string(m) +
                        " entries");
}

BuiltProblem build_dataset_problem(const ExperimentConfig& cfg, Dataset full) {
  if (cfg.add_bias) full = with_bias(full);
  if (cfg.data_subset > 0 && cfg.data_subset < full.n_samples) {
    full = data::stratified_subset(full, cfg.data_subset);
  }
  data::PartitionPlan plan;
  plan.scheme = cfg.partition_scheme == "iid_shuffle" ? data::PartitionScheme::IidShuffle
                                                      : data::PartitionScheme::ByLabelShards;
  plan.agents = cfg.agents;
  plan.shards_per_agent = cfg.shards_per_agent;
  plan.seed = cfg.problem_seed;
  auto parts = data::partition(full, plan);

  BuiltProblem out;
  for (auto& part : parts) {
    auto ds = std::make_shared<Dataset>(std::move(part));
    out.oracles.push_back(std::make_shared<SoftmaxRegressionObjective>(std::move(ds)));
  }
  const auto tau = broadcast_list(cfg.tau, cfg.agents, "tau");
  for (double t : tau) out.sets.push_back(ConstraintSet::l1_ball(t));
  out.tau = tau;
  return out;
}

}  // namespace

BuiltProblem build_problem(const ExperimentConfig& cfg) {
  cfg.validate();
  BuiltProblem out;

  if (cfg.problem == "synthetic_quadratic") {
    data::SyntheticQuadraticSpec spec;
    spec.agents = cfg.agents;
    spec.dim = cfg.dim;
    spec.condition_number = cfg.condition_number;
    spec.noise_level = cfg.noise_level;
    spec.b_scale = cfg.b_scale;
    spec.tau = cfg.tau;
    spec.tau_fraction = cfg.tau_fraction;
    auto built = data::make_synthetic_quadratic(spec, cfg.problem_seed);
    out.oracles = std::move(built.oracles);
    out.sets = std::move(built.sets);
    out.tau = std::move(built.tau);
  } else if (cfg.problem == "synthetic_softmax") {
    auto full = data::make_classification(cfg.agents * cfg.samples_per_agent, cfg.feature_dim,
                                          cfg.classes, cfg.problem_seed);
    out = build_dataset_problem(cfg, std::move(full));
  } else if (cfg.problem == "mnist") {
    out = build_dataset_problem(cfg, data::load_idx_images(cfg.mnist_images, cfg.mnist_labels));
  } else {
    out = build_dataset_problem(cfg, data::load_cifar10(cfg.cifar_batches));
  }

  out.dim = out.oracles[0]->dim();
  out.sigma = PersonalizationWeights(
      broadcast_list(cfg.sigma.empty() ? std::vector<double>{0.0} : cfg.sigma, cfg.agents,
                     "sigma"));
  out.sigma.validate(cfg.agents);
  for (const auto& o : out.oracles) out.l_f = std::max(out.l_f, o->smoothness_bound());

  if (cfg.reference != "none") {
    if (!cfg.reference_cache.empty() && fs::exists(cfg.reference_cache)) {
      auto ref = metrics::load_reference(cfg.reference_cache);
      if (ref.x_star.size() != cfg.agents || ref.x_star[0].size() != out.dim) {
        throw ValidationError("reference cache " + cfg.reference_cache +
                              " does not match this problem's shape");
      }
      out.reference = std::move(ref);
    } else {
      metrics::ReferenceOptions opts;
      opts.tol = cfg.reference_tol;
      opts.max_iters = cfg.reference_max_iters;
      opts.force_projected_gradient = (cfg.reference == "pg");
      out.reference = metrics::solve_reference(out.oracles, out.sets, out.sigma, opts);
      if (!cfg.reference_cache.empty()) {
        metrics::save_reference(*out.reference, cfg.reference_cache);
      }
    }
  }
  return out;
}

SeedResult run_single_seed(const ExperimentConfig& cfg, const BuiltProblem& problem,
                           std::uint64_t seed, bool evaluate_rounds) {
  SeedResult result;
  result.seed = seed;
  const metrics::ReferenceSolution* ref =
      problem.reference.has_value() ? &*problem.reference : nullptr;
  const ParamVector init(problem.dim, 0.0);

  const auto keep = [&cfg, evaluate_rounds](std::size_t round_1based) {
    return evaluate_rounds &&
           (round_1based % cfg.eval_every == 0 || round_1based == cfg.rounds);
  };

  if (cfg.method == "pcfedavg") {
    federation::FederationConfig fc;
    fc.agents = cfg.agents;
    fc.dim = problem.dim;
    fc.local_steps = cfg.local_steps;
    fc.rounds = cfg.rounds;
    fc.gamma = cfg.gamma;
    fc.rho = cfg.rho;
    fc.sigma = problem.sigma;
    fc.seed = seed;
    fc.batch_fraction = cfg.batch_fraction;
    fc.threads = cfg.threads;
    federation::Engine engine(fc, problem.oracles, problem.sets, init);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
      const bool eval = keep(r + 1);
      auto rec = engine.run_round(ref, eval);
      if (eval) result.records.push_back(std::move(rec));
    }
    result.kstar = engine.kstar();
    result.kstar_round = engine.kstar() / cfg.local_steps;
    if (!engine.kstar_captured()) {
      throw RuntimeFailure("run_single_seed: reported iterate was never captured");
    }
    auto at_kstar = metrics::evaluate_blocks(engine.kstar_blocks(), problem.oracles,
                                             problem.sets, problem.sigma, ref, 0.0);
    result.loss_at_kstar = at_kstar.global_loss;
    result.subopt_at_kstar = at_kstar.subopt;
    result.infeas_at_kstar = at_kstar.infeasibility;
    result.infeas_max_at_kstar = at_kstar.infeas_max;
    result.infeas_sq_max_at_kstar = at_kstar.infeas_max * at_kstar.infeas_max;
    result.gamma_warning = engine.gamma_warning();
    return result;
  }

  baselines::BaselineConfig bc;
  bc.method = cfg.method == "fedavg"    ? baselines::Method::FedAvg
              : cfg.method == "fedprox" ? baselines::Method::FedProx
                                        : baselines::Method::Scaffold;
  bc.agents = cfg.agents;
  bc.dim = problem.dim;
  bc.local_steps = cfg.local_steps;
  bc.rounds = cfg.rounds;
  bc.gamma = cfg.gamma.at(cfg.rounds);
  bc.rho = cfg.rho;
  bc.prox_mu = cfg.prox_mu;
  bc.global_step = cfg.global_step;
  bc.sampled_agents = cfg.method == "scaffold" ? cfg.sampled_agents : 0;
  bc.sigma = problem.sigma;
  bc.seed = seed;
  bc.batch_fraction = cfg.batch_fraction;
  bc.threads = cfg.threads;
  baselines::Engine engine(bc, problem.oracles, problem.sets, init);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    const bool eval = keep(r + 1);
    auto rec = engine.run_round(ref, eval);
    if (eval) result.records.push_back(std::move(rec));
  }
  result.kstar = engine.kstar();
  result.kstar_round = engine.kstar() / cfg.local_steps;
  if (!engine.kstar_captured()) {
    throw RuntimeFailure("run_single_seed: reported iterate was never captured");
  }
  auto at_kstar = metrics::evaluate_model(engine.kstar_model(), problem.oracles, problem.sets,
                                          problem.sigma, ref);
  result.loss_at_kstar = at_kstar.global_loss;
  result.subopt_at_kstar = at_kstar.subopt;
  result.infeas_at_kstar = at_kstar.infeasibility;
  result.infeas_max_at_kstar = at_kstar.infeas_max;
  result.infeas_sq_max_at_kstar = at_kstar.infeas_max * at_kstar.infeas_max;
  return result;
}

namespace {

void write_rounds_csv(const std::string& path, const std::vector<metrics::RoundRecord>& records,
                      std::size_t agents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path);
  out << "round,k,gamma,rho,global_loss,subopt";
  for (std::size_t i = 1; i <= agents; ++i) out << ",infeas_" << i;
  out << ",infeas_max,consensus_residual,kstar_flag\n";
  for (const auto& rec : records) {
    out << rec.round << "," << rec.k << "," << csv_cell(rec.gamma) << "," << csv_cell(rec.rho)
        << "," << csv_cell(rec.global_loss) << "," << csv_cell(rec.subopt);
    for (std::size_t i = 0; i < agents; ++i) {
      out << ","
          << (i < rec.infeasibility.size()
                  ? csv_cell(rec.infeasibility[i])
                  : csv_cell(std::numeric_limits<double>::quiet_NaN()));
    }
    out << "," << csv_cell(rec.infeas_max) << "," << csv_cell(rec.consensus_residual) << ","
        << (rec.kstar_flag ? 1 : 0) << "\n";
  }
  if (!out.good()) throw RuntimeFailure("write failed for " + path);
}

void write_summary_csv(const std::string& path, const SeedResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path);
  out << "seed,kstar,kstar_round,loss_at_kstar,subopt_at_kstar,infeas_max_at_kstar,"
         "infeas_sq_max_at_kstar,final_loss,final_subopt,final_infeas_max,gamma_warning\n";
  const metrics::RoundRecord* last = r.records.empty() ? nullptr : &r.records.back();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out << r.seed << "," << r.kstar << "," << r.kstar_round << "," << csv_cell(r.loss_at_kstar)
      << "," << csv_cell(r.subopt_at_kstar) << "," << csv_cell(r.infeas_max_at_kstar) << ","
      << csv_cell(r.infeas_sq_max_at_kstar) << "," << csv_cell(last ? last->global_loss : nan)
      << "," << csv_cell(last ? last->subopt : nan) << ","
      << csv_cell(last ? last->infeas_max : nan) << "," << (r.gamma_warning ? 1 : 0) << "\n";
  if (!out.good()) throw RuntimeFailure("write failed for " + path);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "name=" << c.name << "\nproblem=" << c.problem << "\nmethod=" << c.method
    << "\nagents=" << c.agents << "\ndim=" << c.dim << "\nlocal_steps=" << c.local_steps
    << "\nrounds=" << c.rounds << "\ngamma=" << format_double(c.gamma.value)
    << "\ngamma_schedule="
    << (c.gamma.kind == federation::GammaSchedule::Kind::Constant ? "constant"
                                                                  : "inv_sqrt_rounds")
    << "\nrho=" << format_double(c.rho.value) << "\nrho_schedule="
    << (c.rho.kind == federation::RhoSchedule::Kind::Constant      ? "constant"
        : c.rho.kind == federation::RhoSchedule::Kind::SqrtRounds ? "sqrt_rounds"
                                                                   : "quartic_root_shifted")
    << "\nrho_offset=" << format_double(c.rho.offset);
  const auto list = [&o](const char* key, const std::vector<double>& v) {
    o << "\n" << key << "=";
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << format_double(v[i]);
  };
  list("sigma", c.sigma);
  list("tau", c.tau);
  list("tau_fraction", c.tau_fraction);
  o << "\nbatch_fraction=" << format_double(c.batch_fraction)
    << "\nprox_mu=" << format_double(c.prox_mu)
    << "\nglobal_step=" << format_double(c.global_step)
    << "\nsampled_agents=" << c.sampled_agents << "\nseeds=";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? "," : "") << c.seeds[i];
  o << "\nproblem_seed=" << c.problem_seed << "\neval_every=" << c.eval_every
    << "\nthreads=" << c.threads << "\ncondition_number=" << format_double(c.condition_number)
    << "\nnoise_level=" << format_double(c.noise_level)
    << "\nb_scale=" << format_double(c.b_scale) << "\nfeature_dim=" << c.feature_dim
    << "\nclasses=" << c.classes << "\nsamples_per_agent=" << c.samples_per_agent
    << "\nmnist_images=" << c.mnist_images << "\nmnist_labels=" << c.mnist_labels
    << "\ncifar_batches=";
  for (std::size_t i = 0; i < c.cifar_batches.size(); ++i) {
    o << (i ? "," : "") << c.cifar_batches[i];
  }
  o << "\npartition=" << c.partition_scheme << "\nshards_per_agent=" << c.shards_per_agent
    << "\ndata_subset=" << c.data_subset << "\nadd_bias=" << (c.add_bias ? "true" : "false")
    << "\nreference=" << c.reference << "\nreference_tol=" << format_double(c.reference_tol)
    << "\nreference_max_iters=" << c.reference_max_iters
    << "\nreference_cache=" << c.reference_cache << "\n";
  return o.str();
}

void write_manifest(const std::string& path, const ExperimentConfig& cfg,
                    const RunManifest& manifest) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["method"] = cfg.method;
  j["problem"] = cfg.problem;
  j["config_hash"] = manifest.config_hash;
  j["code_version"] = manifest.code_version;
  j["status"] = manifest.status;
  j["seed_output_dirs"] = manifest.seed_output_dirs;
  j["wall_clock_seconds"] = manifest.wall_clock_seconds;
  if (!manifest.error.empty()) j["error"] = manifest.error;
  j["seeds"] = cfg.seeds;
  j["config"] = serialize_config(cfg);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out.good()) throw RuntimeFailure("write failed for " + path);
}

}  // namespace

std::string hash_bytes_hex(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const fs::path root = fs::path(cfg.out_dir) / cfg.name;
  fs::create_directories(root);

  RunManifest manifest;
  manifest.config_hash = hash_bytes_hex(serialize_config(cfg));
  manifest.code_version = kVersionString;
  manifest.status = "running";
  write_manifest((root / "manifest.json").string(), cfg, manifest);

  try {
    const BuiltProblem problem = build_problem(cfg);
    for (const std::uint64_t seed : cfg.seeds) {
      const fs::path seed_dir = root / ("seed_" + std::to_string(seed));
      fs::create_directories(seed_dir);
      const SeedResult result = run_single_seed(cfg, problem, seed);
      write_rounds_csv((seed_dir / "rounds.csv").string(), result.records, cfg.agents);
      write_summary_csv((seed_dir / "summary.csv").string(), result);
      manifest.seed_output_dirs.push_back(seed_dir.string());
    }
    manifest.status = "completed";
  } catch (const std::exception& e) {
    manifest.status = "failed";
    manifest.error = e.what();
    manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest((root / "manifest.json").string(), cfg, manifest);
    throw;
  }
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest((root / "manifest.json").string(), cfg, manifest);
  return manifest;
}

RateStudyReport run_rate_study(const ExperimentConfig& cfg, const RateStudyOptions& opts) {
  if (opts.r_grid.size() < 3) {
    throw ValidationError("rate study: need at least 3 grid points");
  }
  for (std::size_t i = 1; i < opts.r_grid.size(); ++i) {
    if (opts.r_grid[i] <= opts.r_grid[i - 1]) {
      throw ValidationError("rate study: r_grid must be strictly ascending");
    }
  }
  if (!opts.stub_power_law && opts.n_seeds < 5) {
    throw ValidationError("rate study: need at least 5 seeds per grid point");
  }

  const fs::path out_root =
      opts.out_dir.empty() ? fs::path(cfg.out_dir) / (cfg.name + "_rate") : fs::path(opts.out_dir);
  fs::create_directories(out_root);

  RateStudyReport report;
  report.r_grid = opts.r_grid;

  std::ofstream points((out_root / "rate_points.csv").string(), std::ios::binary);
  if (!points) throw RuntimeFailure("cannot open rate_points.csv");
  points << "R,seed,subopt_at_kstar,infeas_sq_max_at_kstar\n";

  if (opts.stub_power_law) {
    for (const std::size_t r : opts.r_grid) {
      const double subopt = 1.0 / std::sqrt(static_cast<double>(r));
      const double infeas = 1.0 / static_cast<double>(r);
      report.subopt_means.push_back(subopt);
      report.infeas_sq_means.push_back(infeas);
      points << r << ",0," << csv_cell(subopt) << "," << csv_cell(infeas) << "\n";
    }
  } else {
    ExperimentConfig base = cfg;
    base.method = "pcfedavg";
    base.gamma.kind = federation::GammaSchedule::Kind::InvSqrtRounds;
    base.rho.kind = federation::RhoSchedule::Kind::SqrtRounds;
    base.rho.value = 1.0;
    if (base.reference == "none") base.reference = "analytic_or_pg";
    base.validate();

    const BuiltProblem problem = build_problem(base);
    if (!problem.reference.has_value()) {
      throw ValidationError("rate study: a reference solution is required");
    }
    for (const std::size_t r_rounds : opts.r_grid) {
      ExperimentConfig point = base;
      point.rounds = r_rounds;
      double subopt_sum = 0.0;
      double infeas_sum = 0.0;
      for (std::size_t s = 1; s <= opts.n_seeds; ++s) {
        const SeedResult res = run_single_seed(point, problem, s, false);
        subopt_sum += res.subopt_at_kstar;
        infeas_sum += res.infeas_sq_max_at_kstar;
        points << r_rounds << "," << s << "," << csv_cell(res.subopt_at_kstar) << ","
               << csv_cell(res.infeas_sq_max_at_kstar) << "\n";
      }
      report.subopt_means.push_back(subopt_sum / static_cast<double>(opts.n_seeds));
      report.infeas_sq_means.push_back(infeas_sum / static_cast<double>(opts.n_seeds));
    }
  }
  if (!points.good()) throw RuntimeFailure("write failed for rate_points.csv");

  std::vector<double> rs;
  for (const std::size_t r : opts.r_grid) rs.push_back(static_cast<double>(r));
  report.subopt_fit = metrics::rate_fit(rs, report.subopt_means);
  report.infeas_fit = metrics::rate_fit(rs, report.infeas_sq_means);
  const bool subopt_ok = std::isfinite(report.subopt_fit.slope) &&
                         report.subopt_fit.slope <= opts.subopt_slope_threshold;
  const bool infeas_ok = std::isfinite(report.infeas_fit.slope) &&
                         report.infeas_fit.slope <= opts.infeas_slope_threshold;
  report.within_thresholds = subopt_ok && infeas_ok;

  std::ofstream rates((out_root / "rates.csv").string(), std::ios::binary);
  if (!rates) throw RuntimeFailure("cannot open rates.csv");
  rates << "metric,slope,intercept,ci_halfwidth,points_used,threshold,pass\n";
  rates << "subopt," << csv_cell(report.subopt_fit.slope) << ","
        << csv_cell(report.subopt_fit.intercept) << ","
        << csv_cell(report.subopt_fit.ci_halfwidth) << "," << report.subopt_fit.points_used
        << "," << csv_cell(opts.subopt_slope_threshold) << "," << (subopt_ok ? 1 : 0) << "\n";
  rates << "infeas_sq," << csv_cell(report.infeas_fit.slope) << ","
        << csv_cell(report.infeas_fit.intercept) << ","
        << csv_cell(report.infeas_fit.ci_halfwidth) << "," << report.infeas_fit.points_used
        << "," << csv_cell(opts.infeas_slope_threshold) << "," << (infeas_ok ? 1 : 0) << "\n";
  if (!rates.good()) throw RuntimeFailure("write failed for rates.csv");

  for (const auto& w : report.subopt_fit.warnings) std::cerr << "rate fit (subopt): " << w << "\n";
  for (const auto& w : report.infeas_fit.warnings) {
    std::cerr << "rate fit (infeas): " << w << "\n";
  }
  return report;
}

std::vector<std::string> emit_plot_data(const std::vector<std::string>& run_dirs,
                                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  struct FigureRow {
    std::size_t round;
    std::string method;
    std::string seed;
    double value;
  };
  std::vector<FigureRow> loss_rows, infeas_rows;

  for (const auto& dir : run_dirs) {
    const fs::path manifest_path = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest_path)) {
      std::cerr << "figures: skipping " << dir << " (no manifest.json)\n";
      continue;
    }
    nlohmann::json manifest;
    try {
      std::ifstream in(manifest_path);
      in >> manifest;
    } catch (const std::exception& e) {
      std::cerr << "figures: skipping " << dir << " (" << e.what() << ")\n";
      continue;
    }
    const std::string method = manifest.value("method", std::string("unknown"));
    if (manifest.value("status", std::string()) != "completed") {
      std::cerr << "figures: skipping " << dir << " (status not completed)\n";
      continue;
    }
    for (const auto& seed_dir : manifest.value("seed_output_dirs", std::vector<std::string>{})) {
      const fs::path rounds_path = fs::path(seed_dir) / "rounds.csv";
      if (!fs::exists(rounds_path)) {
        std::cerr << "figures: skipping " << seed_dir << " (no rounds.csv)\n";
        continue;
      }
      const std::string seed_name = fs::path(seed_dir).filename().string();
      const std::string seed =
          seed_name.rfind("seed_", 0) == 0 ? seed_name.substr(5) : seed_name;
      const CsvTable table = read_csv(rounds_path.string());
      const std::size_t round_col = column_index(table, "round", rounds_path.string());
      const std::size_t loss_col = column_index(table, "global_loss", rounds_path.string());
      const std::size_t infeas_col = column_index(table, "infeas_max", rounds_path.string());
      for (const auto& row : table.rows) {
        const auto round = static_cast<std::size_t>(parse_u64("round", row.at(round_col)));
        loss_rows.push_back({round, method, seed, parse_double("loss", row.at(loss_col))});
        infeas_rows.push_back(
            {round, method, seed, parse_double("infeas", row.at(infeas_col))});
      }
    }
  }

  const auto write_figure = [&out_dir](const std::string& file,
                                       const std::vector<FigureRow>& rows) {
    const std::string path = (fs::path(out_dir) / file).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot open " + path);
    out << "round,method,seed,value\n";
    for (const auto& r : rows) {
      out << r.round << "," << r.method << "," << r.seed << "," << csv_cell(r.value) << "\n";
    }
    if (!out.good()) throw RuntimeFailure("write failed for " + path);
    return path;
  };
  return {write_figure("figure_global_loss.csv", loss_rows),
          write_figure("figure_infeasibility.csv", infeas_rows)};
}

metrics::ReferenceSolution solve_and_cache_reference(const ExperimentConfig& cfg,
                                                     const std::string& cache_path) {
  ExperimentConfig solved = cfg;
  if (solved.reference == "none") solved.reference = "analytic_or_pg";
  solved.reference_cache.clear();
  const BuiltProblem problem = build_problem(solved);
  metrics::save_reference(*problem.reference, cache_path);
  return *problem.reference;
}

}  // namespace pcfed::runner
