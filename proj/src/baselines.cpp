#include "pcfed/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "pcfed/errors.hpp"

namespace pcfed::baselines {

void BaselineConfig::validate() const {
  if (agents == 0) throw ValidationError("baseline: need at least one agent");
  if (dim == 0) throw ValidationError("baseline: dim must be positive");
  if (local_steps == 0) throw ValidationError("baseline: local_steps must be positive");
  if (rounds == 0) throw ValidationError("baseline: rounds must be positive");
  if (threads == 0) throw ValidationError("baseline: threads must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("baseline: gamma must be finite and >= 0");
  }
  if (!(batch_fraction > 0.0) || batch_fraction > 1.0) {
    throw ValidationError("baseline: batch_fraction must lie in (0, 1]");
  }
  if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) {
    throw ValidationError("baseline: prox_mu must be finite and >= 0");
  }
  if (!(global_step > 0.0) || !std::isfinite(global_step)) {
    throw ValidationError("baseline: global_step must be finite and positive");
  }
  if (sampled_agents > agents) {
    throw ValidationError("baseline: sampled_agents exceeds agent count");
  }
  if (method != Method::Scaffold && sampled_agents != 0 && sampled_agents != agents) {
    throw ValidationError("baseline: client sampling is only wired for scaffold");
  }
  if (!(rho.value >= 0.0) || !std::isfinite(rho.value) || !(rho.offset >= 0.0)) {
    throw ValidationError("baseline: rho parameters must be finite and >= 0");
  }
}

ParamVector penalized_local_grad(const ObjectiveOracle& oracle, const ConstraintSet& set,
                                 double rho, const ParamVector& w, RngStream& stream,
                                 double batch_fraction) {
  ParamVector g = oracle.grad_stochastic(w, stream, batch_fraction);
  if (rho != 0.0) {
    const ParamVector pen = set.penalty_grad(w);
    add_scaled_inplace(g, rho, pen);
  }
  return g;
}

Engine::Engine(BaselineConfig cfg, std::vector<std::shared_ptr<const ObjectiveOracle>> oracles,
               std::vector<ConstraintSet> sets, ParamVector init)
    : cfg_(std::move(cfg)),
      oracles_(std::move(oracles)),
      sets_(std::move(sets)),
      model_(std::move(init)),
      participation_stream_(cfg_.seed, kParticipationStreamId) {
  cfg_.validate();
  if (oracles_.size() != cfg_.agents || sets_.size() != cfg_.agents) {
    throw ValidationError("baseline engine: need one oracle and one set per agent");
  }
  for (const auto& o : oracles_) {
    if (!o || o->dim() != cfg_.dim) throw ValidationError("baseline engine: oracle dim mismatch");
  }
  if (model_.size() != cfg_.dim) throw ValidationError("baseline engine: init dim mismatch");
  require_finite(model_, "baseline init");
  if (cfg_.sigma.values.empty()) cfg_.sigma = PersonalizationWeights::constant(0.0, cfg_.agents);
  cfg_.sigma.validate(cfg_.agents);

  control_.server.assign(cfg_.dim, 0.0);
  control_.agents.assign(cfg_.agents, ParamVector(cfg_.dim, 0.0));
  for (std::size_t i = 0; i < cfg_.agents; ++i) {
    grad_streams_.emplace_back(cfg_.seed, static_cast<std::uint64_t>(i));
  }
  RngStream kstar_stream(cfg_.seed, kKstarStreamId);
  kstar_ = metrics::sample_kstar(cfg_.rounds * cfg_.local_steps, kstar_stream);
}

ParamVector Engine::run_agent_round(std::size_t i, double rho, const ParamVector& start) {
  ParamVector w = start;
  for (std::size_t t = 0; t < cfg_.local_steps; ++t) {
    ParamVector g = penalized_local_grad(*oracles_[i], sets_[i], rho, w, grad_streams_[i],
                                         cfg_.batch_fraction);
    if (cfg_.method == Method::FedProx && cfg_.prox_mu != 0.0) {
      for (std::size_t c = 0; c < w.size(); ++c) g[c] += cfg_.prox_mu * (w[c] - start[c]);
    } else if (cfg_.method == Method::Scaffold) {
      for (std::size_t c = 0; c < w.size(); ++c) {
        g[c] += control_.server[c] - control_.agents[i][c];
      }
    }
    add_scaled_inplace(w, -cfg_.gamma, g);
    require_finite(w, "baseline local step");
  }
  return w;
}

metrics::RoundRecord Engine::run_round(const metrics::ReferenceSolution* reference,
                                       bool evaluate) {
  const std::size_t r = round_;
  const double rho = cfg_.rho.at(r, cfg_.rounds);

  if (!kstar_captured_ && kstar_ / cfg_.local_steps == r) {
    kstar_model_ = model_;
    kstar_captured_ = true;
  }

  std::vector<std::size_t> active(cfg_.agents);
  for (std::size_t i = 0; i < cfg_.agents; ++i) active[i] = i;
  if (cfg_.method == Method::Scaffold && cfg_.sampled_agents != 0 &&
      cfg_.sampled_agents < cfg_.agents) {
    active = sample_indices(participation_stream_, cfg_.agents, cfg_.sampled_agents);
    std::sort(active.begin(), active.end());
  }
  sampled_history_.push_back(active);

  std::vector<ParamVector> locals(active.size());
  const std::size_t workers = std::min<std::size_t>(cfg_.threads, active.size());
  if (workers <= 1) {
    for (std::size_t a = 0; a < active.size(); ++a) {
      locals[a] = run_agent_round(active[a], rho, model_);
    }
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t a = cursor.fetch_add(1);
          if (a >= active.size()) return;
          locals[a] = run_agent_round(active[a], rho, model_);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  if (cfg_.method == Method::Scaffold) {
    const double inv_s = 1.0 / static_cast<double>(active.size());
    const double inv_hg = 1.0 / (static_cast<double>(cfg_.local_steps) * cfg_.gamma);
    ParamVector delta_w(cfg_.dim, 0.0);
    ParamVector delta_c(cfg_.dim, 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      ParamVector c_plus(cfg_.dim, 0.0);
      for (std::size_t c = 0; c < cfg_.dim; ++c) {
        c_plus[c] = control_.agents[i][c] - control_.server[c] +
                    (model_[c] - locals[a][c]) * inv_hg;
        delta_w[c] += locals[a][c] - model_[c];
        delta_c[c] += c_plus[c] - control_.agents[i][c];
      }
      control_.agents[i] = std::move(c_plus);
    }
    add_scaled_inplace(model_, cfg_.global_step * inv_s, delta_w);
    add_scaled_inplace(control_.server, inv_s * static_cast<double>(active.size()) /
                                            static_cast<double>(cfg_.agents),
                       delta_c);
  } else {
    ParamVector mean(cfg_.dim, 0.0);
    for (const auto& w : locals) add_scaled_inplace(mean, 1.0, w);
    scale_inplace(mean, 1.0 / static_cast<double>(locals.size()));
    model_ = std::move(mean);
  }
  require_finite(model_, "baseline aggregate");
  round_ = r + 1;

  metrics::RoundRecord rec;
  if (evaluate) {
    rec = metrics::evaluate_model(model_, oracles_, sets_, cfg_.sigma, reference);
  } else {
    rec.global_loss = std::numeric_limits<double>::quiet_NaN();
    rec.infeas_max = std::numeric_limits<double>::quiet_NaN();
  }
  rec.round = r + 1;
  rec.k = (r + 1) * cfg_.local_steps;
  rec.gamma = cfg_.gamma;
  rec.rho = rho;
  rec.kstar_flag = (kstar_ / cfg_.local_steps == r);
  return rec;
}

}  // namespace pcfed::baselines
