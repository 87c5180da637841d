#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcfed/errors.hpp"
#include "pcfed/runner.hpp"
#include "pcfed/selfcheck.hpp"
#include "pcfed/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitRateThreshold = 3;

std::vector<std::pair<std::string, std::string>> parse_sets(
    const std::vector<std::string>& raw) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : raw) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw pcfed::ValidationError("--set expects key=value, got '" + item + "'");
    }
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

pcfed::runner::ExperimentConfig load_with_overrides(const std::string& config_path,
                                                    const std::vector<std::string>& sets) {
  auto cfg = pcfed::runner::load_config(config_path);
  for (const auto& [k, v] : parse_sets(sets)) pcfed::runner::apply_override(cfg, k, v);
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw pcfed::ValidationError("--seeds: cannot parse '" + item + "'");
    }
  }
  if (seeds.empty()) throw pcfed::ValidationError("--seeds: empty list");
  return seeds;
}

int cmd_run(const std::string& config_path, const std::string& seeds,
            const std::string& out_dir, const std::vector<std::string>& sets) {
  auto cfg = load_with_overrides(config_path, sets);
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  const auto manifest = pcfed::runner::run_experiment(cfg);
  std::cout << "run " << cfg.name << ": " << manifest.status << " in "
            << manifest.wall_clock_seconds << "s, " << manifest.seed_output_dirs.size()
            << " seed dir(s) under " << cfg.out_dir << "/" << cfg.name << "\n";
  return kExitOk;
}

int cmd_rate_study(const std::string& config_path, const std::string& r_grid_text,
                   std::size_t n_seeds, const std::string& out_dir, bool stub,
                   const std::vector<std::string>& sets) {
  auto cfg = load_with_overrides(config_path, sets);
  pcfed::runner::RateStudyOptions opts;
  opts.n_seeds = n_seeds;
  opts.stub_power_law = stub;
  opts.out_dir = out_dir;
  std::string item;
  std::stringstream ss(r_grid_text);
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      opts.r_grid.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw pcfed::ValidationError("--r-grid: cannot parse '" + item + "'");
    }
  }
  const auto report = pcfed::runner::run_rate_study(cfg, opts);
  std::cout << "subopt slope " << pcfed::format_double(report.subopt_fit.slope) << " (+/- "
            << pcfed::format_double(report.subopt_fit.ci_halfwidth) << "), threshold "
            << pcfed::format_double(opts.subopt_slope_threshold) << "\n";
  std::cout << "infeas_sq slope " << pcfed::format_double(report.infeas_fit.slope) << " (+/- "
            << pcfed::format_double(report.infeas_fit.ci_halfwidth) << "), threshold "
            << pcfed::format_double(opts.infeas_slope_threshold) << "\n";
  if (!report.within_thresholds) {
    std::cerr << "rate study: observed slopes miss the thresholds\n";
    return kExitRateThreshold;
  }
  return kExitOk;
}

int cmd_reference(const std::string& config_path, const std::string& cache,
                  const std::vector<std::string>& sets) {
  auto cfg = load_with_overrides(config_path, sets);
  const std::string path = cache.empty() ? (cfg.name + "_reference.json") : cache;
  const auto ref = pcfed::runner::solve_and_cache_reference(cfg, path);
  std::cout << "reference ("
            << (ref.method == pcfed::metrics::ReferenceMethod::Analytic ? "analytic"
                                                                        : "projected gradient")
            << "): f* = " << pcfed::format_double(ref.f_star) << ", residual "
            << pcfed::format_double(ref.residual) << ", " << ref.iterations
            << " iteration(s), cached at " << path << "\n";
  return kExitOk;
}

int cmd_check() {
  const auto results = pcfed::selfcheck::run_all();
  bool all_ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << "\n";
    all_ok = all_ok && r.passed;
  }
  if (!all_ok) {
    std::cerr << "check: at least one property failed\n";
    return kExitRuntime;
  }
  std::cout << results.size() << " checks passed\n";
  return kExitOk;
}

int cmd_figures(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  const auto paths = pcfed::runner::emit_plot_data(run_dirs, out_dir);
  for (const auto& p : paths) std::cout << "wrote " << p << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized constrained federated optimization runner"};
  app.set_version_flag("--version", pcfed::kVersionString);
  app.require_subcommand(1);

  std::string config_path, seeds_text, out_dir, r_grid_text, cache_path;
  std::size_t n_seeds = 10;
  bool stub = false;
  std::vector<std::string> sets, run_dirs;

  auto* run = app.add_subcommand("run", "Run an experiment config over its seeds");
  run->add_option("--config", config_path, "Config file (key=value or JSON)")->required();
  run->add_option("--seeds", seeds_text, "Comma-separated seed override");
  run->add_option("--out", out_dir, "Output directory override");
  run->add_option("--set", sets, "key=value config override (repeatable)");

  auto* rate = app.add_subcommand("rate-study", "Sweep round budgets and fit decay slopes");
  rate->add_option("--config", config_path, "Config file")->required();
  rate->add_option("--r-grid", r_grid_text, "Comma-separated round budgets")->required();
  rate->add_option("--seeds", n_seeds, "Seeds per grid point");
  rate->add_option("--out", out_dir, "Output directory");
  rate->add_flag("--stub-power-law", stub, "Exact power-law series instead of live runs");
  rate->add_option("--set", sets, "key=value config override (repeatable)");

  auto* reference = app.add_subcommand("reference", "Solve and cache the reference solution");
  reference->add_option("--config", config_path, "Config file")->required();
  reference->add_option("--cache", cache_path, "Where to write the solution JSON");
  reference->add_option("--set", sets, "key=value config override (repeatable)");

  auto* check = app.add_subcommand("check", "Run the built-in property battery");

  auto* figures = app.add_subcommand("figures", "Aggregate run directories into figure CSVs");
  figures->add_option("--runs", run_dirs, "Completed run directories")->required();
  figures->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, seeds_text, out_dir, sets);
    if (rate->parsed()) return cmd_rate_study(config_path, r_grid_text, n_seeds, out_dir, stub, sets);
    if (reference->parsed()) return cmd_reference(config_path, cache_path, sets);
    if (check->parsed()) return cmd_check();
    if (figures->parsed()) return cmd_figures(run_dirs, out_dir);
  } catch (const pcfed::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const pcfed::RuntimeFailure& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
