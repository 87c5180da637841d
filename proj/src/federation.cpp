#include "pcfed/federation.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "pcfed/errors.hpp"

namespace pcfed::federation {

double GammaSchedule::at(std::size_t total_rounds) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::InvSqrtRounds:
      return value / std::sqrt(static_cast<double>(total_rounds));
  }
  throw ValidationError("gamma schedule: unknown kind");
}

double RhoSchedule::at(std::size_t r, std::size_t total_rounds) const {
  switch (kind) {
    case Kind::Constant:
      return value;
    case Kind::SqrtRounds:
      return value * std::sqrt(static_cast<double>(total_rounds));
    case Kind::QuarticRootShifted:
      return std::pow(static_cast<double>(r) + offset, 0.25);
  }
  throw ValidationError("rho schedule: unknown kind");
}

void FederationConfig::validate() const {
  if (agents == 0) throw ValidationError("federation: need at least one agent");
  if (dim == 0) throw ValidationError("federation: dim must be positive");
  if (local_steps == 0) throw ValidationError("federation: local_steps must be positive");
  if (rounds == 0) throw ValidationError("federation: rounds must be positive");
  if (threads == 0) throw ValidationError("federation: threads must be positive");
  sigma.validate(agents);
  if (!(batch_fraction > 0.0) || batch_fraction > 1.0) {
    throw ValidationError("federation: batch_fraction must lie in (0, 1]");
  }
  if (!(gamma.value >= 0.0) || !std::isfinite(gamma.value)) {
    throw ValidationError("federation: gamma must be finite and >= 0");
  }
  if (!(rho.value >= 0.0) || !std::isfinite(rho.value) || !(rho.offset >= 0.0)) {
    throw ValidationError("federation: rho parameters must be finite and >= 0");
  }
}

ParamVector MultiBlockState::block_mean() const { return mean_of(blocks); }

void MultiBlockState::require_finite(const char* where) const {
  for (const auto& b : blocks) pcfed::require_finite(b, where);
}

MultiBlockState local_step(const MultiBlockState& state, const ObjectiveOracle& oracle,
                           const ConstraintSet& set, double sigma_i, double gamma,
                           double rho, RngStream& stream, double batch_fraction) {
  const std::size_t m = state.blocks.size();
  if (m == 0 || state.owner >= m) throw ValidationError("local_step: bad block layout");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("local_step: gamma must be finite and >= 0");
  }
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw ValidationError("local_step: rho must be finite and >= 0");
  }
  if (!(sigma_i >= 0.0) || !std::isfinite(sigma_i)) {
    throw ValidationError("local_step: sigma must be finite and >= 0");
  }
  state.require_finite("local_step input");

  const std::size_t n = state.blocks[0].size();
  const ParamVector xbar = state.block_mean();
  const ParamVector g = oracle.grad_stochastic(xbar, stream, batch_fraction);
  if (g.size() != n) throw ValidationError("local_step: gradient dimension mismatch");
  const ParamVector pen = set.penalty_grad(state.blocks[state.owner]);

  const double inv_m = 1.0 / static_cast<double>(m);
  const double own_coupling = sigma_i * (static_cast<double>(m) - 1.0) * inv_m;
  const double cross_coupling = sigma_i * inv_m;

  MultiBlockState next;
  next.owner = state.owner;
  next.blocks.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const ParamVector& x = state.blocks[j];
    ParamVector& y = next.blocks[j];
    y.resize(n);
    if (j == state.owner) {
      for (std::size_t c = 0; c < n; ++c) {
        y[c] = x[c] - gamma * (inv_m * g[c] + rho * pen[c] + own_coupling * (x[c] - xbar[c]));
      }
    } else {
      for (std::size_t c = 0; c < n; ++c) {
        y[c] = x[c] - gamma * (inv_m * g[c] - cross_coupling * (x[c] - xbar[c]));
      }
    }
  }
  next.require_finite("local_step output");
  return next;
}

std::vector<ParamVector> penalized_block_grad(const MultiBlockState& state,
                                              const ObjectiveOracle& oracle,
                                              const ConstraintSet& set, double sigma_i,
                                              double rho) {
  const std::size_t m = state.blocks.size();
  if (m == 0 || state.owner >= m) throw ValidationError("penalized_block_grad: bad layout");
  const std::size_t n = state.blocks[0].size();
  const ParamVector xbar = state.block_mean();
  const ParamVector gf = oracle.grad(xbar);
  const ParamVector diff = sub(state.blocks[state.owner], xbar);
  const ParamVector pen = set.penalty_grad(state.blocks[state.owner]);
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<ParamVector> out(m, ParamVector(n, 0.0));
  for (std::size_t j = 0; j < m; ++j) {
    const double w = sigma_i * ((j == state.owner ? 1.0 : 0.0) - inv_m);
    for (std::size_t c = 0; c < n; ++c) {
      double v = inv_m * gf[c] + w * diff[c];
      if (j == state.owner) v += rho * pen[c];
      out[j][c] = v;
    }
  }
  return out;
}

double penalized_objective(const MultiBlockState& state, const ObjectiveOracle& oracle,
                           const ConstraintSet& set, double sigma_i, double rho) {
  const ParamVector xbar = state.block_mean();
  double v = oracle.value(xbar);
  v += 0.5 * sigma_i * norm_sq(sub(state.blocks[state.owner], xbar));
  v += rho * set.penalty_value(state.blocks[state.owner]);
  return v;
}

double penalized_smoothness(double l_f, double sigma_max, std::size_t agents, double rho) {
  const double m = static_cast<double>(agents);
  return (l_f + sigma_max * (m - 1.0)) / m + rho;
}

bool gamma_within_bound(double gamma, double l_penalized, std::size_t local_steps) {
  if (l_penalized <= 0.0) return true;
  double bound = 1.0 / (6.0 * l_penalized);
  if (local_steps > 1) {
    bound = std::min(bound, 1.0 / (5.0 * l_penalized * static_cast<double>(local_steps - 1)));
  }
  return gamma <= bound;
}

Engine::Engine(FederationConfig cfg,
               std::vector<std::shared_ptr<const ObjectiveOracle>> oracles,
               std::vector<ConstraintSet> sets, ParamVector init)
    : cfg_(std::move(cfg)), oracles_(std::move(oracles)), sets_(std::move(sets)) {
  cfg_.validate();
  if (oracles_.size() != cfg_.agents || sets_.size() != cfg_.agents) {
    throw ValidationError("engine: need one oracle and one constraint set per agent");
  }
  for (const auto& o : oracles_) {
    if (!o || o->dim() != cfg_.dim) throw ValidationError("engine: oracle dim mismatch");
  }
  if (init.size() != cfg_.dim) throw ValidationError("engine: init dim mismatch");
  pcfed::require_finite(init, "engine init");

  server_.block_means.assign(cfg_.agents, init);
  server_.round = 0;
  agents_.resize(cfg_.agents);
  for (std::size_t i = 0; i < cfg_.agents; ++i) {
    agents_[i].blocks.assign(cfg_.agents, init);
    agents_[i].owner = i;
    grad_streams_.emplace_back(cfg_.seed, static_cast<std::uint64_t>(i));
  }
  RngStream kstar_stream(cfg_.seed, kKstarStreamId);
  kstar_ = metrics::sample_kstar(total_steps(), kstar_stream);

  const std::size_t history_doubles = total_steps() * cfg_.agents * cfg_.dim;
  keep_history_ = history_doubles <= cfg_.history_budget_doubles;
  if (keep_history_) history_.reserve(total_steps());

  l_f_ = 0.0;
  for (const auto& o : oracles_) l_f_ = std::max(l_f_, o->smoothness_bound());
}

void Engine::run_agent_round(std::size_t i, double gamma, double rho,
                             std::vector<std::vector<ParamVector>>* trace) {
  MultiBlockState state = agents_[i];
  for (std::size_t t = 0; t < cfg_.local_steps; ++t) {
    if (trace) (*trace)[t] = state.blocks;
    state = local_step(state, *oracles_[i], sets_[i], cfg_.sigma[i], gamma, rho,
                       grad_streams_[i], cfg_.batch_fraction);
  }
  agents_[i] = std::move(state);
}

metrics::RoundRecord Engine::run_round(const metrics::ReferenceSolution* reference,
                                       bool evaluate) {
  const std::size_t r = server_.round;
  const double gamma = cfg_.gamma.at(cfg_.rounds);
  const double rho = cfg_.rho.at(r, cfg_.rounds);
  const double l_pen = penalized_smoothness(l_f_, cfg_.sigma.max_value(), cfg_.agents, rho);
  if (!gamma_within_bound(gamma, l_pen, cfg_.local_steps)) gamma_warning_ = true;

  for (std::size_t i = 0; i < cfg_.agents; ++i) {
    agents_[i].blocks = server_.block_means;
    agents_[i].owner = i;
  }

  const std::size_t k_base = r * cfg_.local_steps;
  const bool record_history = keep_history_ && history_.size() < total_steps();
  const bool record_kstar =
      !kstar_captured_ && kstar_ / cfg_.local_steps == r && k_base < total_steps();
  const bool recording = record_history || record_kstar;

  // traces[i][t]: agent i's stacked blocks before local step t
  std::vector<std::vector<std::vector<ParamVector>>> traces;
  if (recording) {
    traces.assign(cfg_.agents, std::vector<std::vector<ParamVector>>(cfg_.local_steps));
  }

  const std::size_t workers = std::min<std::size_t>(cfg_.threads, cfg_.agents);
  if (workers <= 1) {
    for (std::size_t i = 0; i < cfg_.agents; ++i) {
      run_agent_round(i, gamma, rho, recording ? &traces[i] : nullptr);
    }
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= cfg_.agents) return;
          run_agent_round(i, gamma, rho, recording ? &traces[i] : nullptr);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  if (recording) {
    for (std::size_t t = 0; t < cfg_.local_steps; ++t) {
      const std::size_t k = k_base + t;
      if (k >= total_steps()) break;
      std::vector<ParamVector> stacked(cfg_.agents, ParamVector(cfg_.dim, 0.0));
      const double inv_m = 1.0 / static_cast<double>(cfg_.agents);
      for (std::size_t j = 0; j < cfg_.agents; ++j) {
        for (std::size_t i = 0; i < cfg_.agents; ++i) {
          add_scaled_inplace(stacked[j], 1.0, traces[i][t][j]);
        }
        scale_inplace(stacked[j], inv_m);
      }
      if (record_kstar && k == kstar_) {
        kstar_blocks_ = stacked;
        kstar_captured_ = true;
      }
      if (record_history && history_.size() == k) history_.push_back(std::move(stacked));
    }
  }

  const double inv_m = 1.0 / static_cast<double>(cfg_.agents);
  for (std::size_t j = 0; j < cfg_.agents; ++j) {
    ParamVector mean(cfg_.dim, 0.0);
    for (std::size_t i = 0; i < cfg_.agents; ++i) {
      add_scaled_inplace(mean, 1.0, agents_[i].blocks[j]);
    }
    scale_inplace(mean, inv_m);
    server_.block_means[j] = std::move(mean);
  }
  server_.round = r + 1;

  metrics::RoundRecord rec;
  if (evaluate) {
    double residual = 0.0;
    for (std::size_t i = 0; i < cfg_.agents; ++i) {
      for (std::size_t j = 0; j < cfg_.agents; ++j) {
        residual += norm_sq(sub(agents_[i].blocks[j], server_.block_means[j]));
      }
    }
    residual *= inv_m;
    rec = metrics::evaluate_blocks(server_.block_means, oracles_, sets_, cfg_.sigma,
                                   reference, residual);
  } else {
    rec.global_loss = std::numeric_limits<double>::quiet_NaN();
    rec.infeas_max = std::numeric_limits<double>::quiet_NaN();
    rec.consensus_residual = std::numeric_limits<double>::quiet_NaN();
  }
  rec.round = r + 1;
  rec.k = (r + 1) * cfg_.local_steps;
  rec.gamma = gamma;
  rec.rho = rho;
  rec.kstar_flag = (kstar_ / cfg_.local_steps == r);
  return rec;
}

const std::vector<ParamVector>& Engine::history_at(std::size_t k) const {
  if (!keep_history_) {
    throw RuntimeFailure("engine: full iterate history was not kept (budget exceeded)");
  }
  if (k >= history_.size()) {
    std::ostringstream msg;
    msg << "engine: history index " << k << " not recorded yet (" << history_.size()
        << " entries)";
    throw RuntimeFailure(msg.str());
  }
  return history_[k];
}

}  // namespace pcfed::federation
