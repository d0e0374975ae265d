#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "fedsim/analysis.hpp"
#include "fedsim/client_opt.hpp"
#include "fedsim/config.hpp"
#include "fedsim/correction.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/problem.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/schedule.hpp"
#include "fedsim/server_opt.hpp"

namespace fedsim {

struct RunResult {
  ParamVector final_x;
  std::vector<MetricsRecord> records;       // one per round, post-update
  std::vector<ParamVector> round_iterates;  // filled when record_iterates
};

namespace detail {

/// Reference points evaluated lazily: the family minimizer once, and the
/// closed-form fixed point per lr multiplier (step decay changes it).
struct ReferenceCache {
  bool enabled = false;
  std::optional<ParamVector> x_star;
  std::map<double, std::optional<ParamVector>> x_tilde;

  const std::optional<ParamVector>& fixed_point(const ExperimentConfig& cfg,
                                                double lr_mult) {
    auto it = x_tilde.find(lr_mult);
    if (it != x_tilde.end()) return it->second;
    std::optional<ParamVector> value;
    try {
      value = closed_form_fixed_point(*cfg.problem.quad, cfg.local_plan(lr_mult));
    } catch (const std::exception&) {
      // Non-contractive plan at this lr; leave the column empty.
    }
    return x_tilde.emplace(lr_mult, std::move(value)).first->second;
  }
};

struct ClientShare {
  ParamVector delta;
  DiagMatrix n_matrix;
};

}  // namespace detail

/// Runs the full round protocol. Deterministic for a fixed config: every
/// random draw comes from a substream keyed by (master_seed, lane, round,
/// client), so results do not depend on thread count or wall clock.
inline RunResult run_experiment(const ExperimentConfig& cfg, int threads = 1) {
  validate(cfg);
  if (threads < 1) throw std::invalid_argument("run_experiment: threads must be >= 1");

  const int m = cfg.problem.num_clients();
  const int s = cfg.clients_per_round;
  const std::vector<double> data_weights = cfg.problem.weights();
  const double base_eta = cfg.client_lrs[0];
  const int base_tau = cfg.client_steps[0];

  detail::ReferenceCache refs;
  if (cfg.problem.quad.has_value()) {
    refs.enabled = true;
    try {
      refs.x_star = global_min(*cfg.problem.quad);
    } catch (const std::exception&) {
      refs.x_star.reset();
    }
  }
  const bool closed_form_ok =
      refs.enabled && s == m &&
      (cfg.client_method == ClientOptimizer::Sgd ||
       cfg.client_method == ClientOptimizer::PrecondGd);

  RunResult out;
  out.records.reserve(static_cast<std::size_t>(cfg.rounds));
  ParamVector x = cfg.x0;
  ServerState server_state = make_server_state(cfg.server, cfg.problem.dim());

  for (int t = 0; t < cfg.rounds; ++t) {
    const auto round_start = std::chrono::steady_clock::now();
    const LrPair lrs = lr_at(cfg.schedule, base_eta, cfg.server.lr, base_tau, t);
    const double lr_mult = lrs.client_lr / base_eta;

    std::vector<int> participants(static_cast<std::size_t>(m));
    std::vector<double> weights;
    if (s < m) {
      auto sampler = substream(cfg.master_seed, {kLaneSampling,
                                                 static_cast<std::uint64_t>(t)});
      participants = sample_clients(m, s, sampler);
      weights.assign(static_cast<std::size_t>(s), 1.0 / s);
    } else {
      for (int i = 0; i < m; ++i) participants[static_cast<std::size_t>(i)] = i;
      weights = data_weights;
    }

    std::vector<detail::ClientShare> shares(participants.size());
    auto run_client = [&](std::size_t j) {
      const int id = participants[j];
      auto rng = substream(cfg.master_seed,
                           {kLaneClient, static_cast<std::uint64_t>(t),
                            static_cast<std::uint64_t>(id)});
      const ClientOptConfig copt = cfg.client_opt_for(id, lr_mult);
      auto grad = [&](const ParamVector& p, std::mt19937_64& r) {
        return cfg.problem.sample_gradient(id, p, r);
      };
      LocalRunResult res = run_local(copt, grad, x, rng);
      if (cfg.correction != CorrectionMode::None) {
        check_correction_matrix(res.n_matrix, "run_experiment");
        res.delta = apply_local(res.delta, res.n_matrix);
      }
      shares[j] = {std::move(res.delta), std::move(res.n_matrix)};
    };

    if (threads == 1 || shares.size() <= 1) {
      for (std::size_t j = 0; j < shares.size(); ++j) run_client(j);
    } else {
      const std::size_t n_workers =
          std::min<std::size_t>(static_cast<std::size_t>(threads), shares.size());
      std::vector<std::thread> pool;
      pool.reserve(n_workers);
      for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t j = w; j < shares.size(); j += n_workers) run_client(j);
        });
      }
      for (auto& th : pool) th.join();
    }

    std::vector<ParamVector> deltas;
    deltas.reserve(shares.size());
    for (auto& sh : shares) deltas.push_back(std::move(sh.delta));
    ParamVector pseudo_grad = aggregate(deltas, weights);
    if (cfg.correction == CorrectionMode::Joint) {
      std::vector<DiagMatrix> n_list;
      n_list.reserve(shares.size());
      for (auto& sh : shares) n_list.push_back(std::move(sh.n_matrix));
      pseudo_grad = apply_global(pseudo_grad, aggregate_global_norm(n_list, weights));
    }
    server_step(cfg.server, server_state, x, pseudo_grad, lrs.server_lr);

    MetricsRecord rec;
    rec.round = t + 1;
    if (cfg.eval_objective) {
      rec.loss = cfg.problem.objective(x);
      rec.grad_norm = norm(cfg.problem.objective_gradient(x));
    }
    if (refs.enabled && refs.x_star.has_value()) {
      rec.dist_to_opt = norm(sub(x, *refs.x_star));
    }
    if (closed_form_ok) {
      const auto& xt = refs.fixed_point(cfg, lr_mult);
      if (xt.has_value()) rec.dist_to_fixed_point = norm(sub(x, *xt));
    }
    rec.client_lr = lrs.client_lr;
    rec.server_lr = lrs.server_lr;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - round_start)
                      .count();
    out.records.push_back(std::move(rec));
    if (cfg.record_iterates) out.round_iterates.push_back(x);
  }

  out.final_x = std::move(x);
  return out;
}

}  // namespace fedsim
