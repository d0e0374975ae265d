#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/vec.hpp"

namespace fedsim {

enum class ServerOptimizer { Gd, AdaGrad, Adam };

inline const char* server_optimizer_name(ServerOptimizer m) {
  switch (m) {
    case ServerOptimizer::Gd: return "gd";
    case ServerOptimizer::AdaGrad: return "adagrad";
    case ServerOptimizer::Adam: return "adam";
  }
  return "?";
}

/// Server optimizer configuration. The adaptive kinds reuse the client-side
/// conventions (v restarts once at eps_s^2 on state creation, P = v^{-1/2},
/// no bias correction) so the two sides stay mutually consistent.
struct ServerOptConfig {
  ServerOptimizer method = ServerOptimizer::Gd;
  double lr = 1.0;  // alpha, base server learning rate
  double epsilon = 1e-7;
  double beta1 = 0.0;
  double beta2 = 0.0;
};

inline void validate(const ServerOptConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("server_opt: lr must be > 0");
  if (!(cfg.epsilon > 0.0)) {
    throw std::invalid_argument("server_opt: epsilon must be > 0");
  }
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw std::invalid_argument("server_opt: beta1/beta2 must lie in [0, 1)");
  }
}

/// Cross-round server optimizer state (the server is the one stateful party).
struct ServerState {
  ParamVector m;
  ParamVector v;
  int round = 0;
};

inline ServerState make_server_state(const ServerOptConfig& cfg, std::size_t dim) {
  validate(cfg);
  ServerState st;
  st.m = zeros(dim);
  st.v = cfg.method == ServerOptimizer::Gd
             ? zeros(dim)
             : constant_diag(dim, cfg.epsilon * cfg.epsilon);
  return st;
}

/// Weighted aggregate sum_i w_i delta_i. The reduction order is the order of
/// the input collection; callers supply results in ascending client-id order,
/// which makes the reduction bit-reproducible.
inline ParamVector aggregate(const std::vector<ParamVector>& deltas,
                             const std::vector<double>& weights) {
  if (deltas.empty()) throw std::invalid_argument("aggregate: empty client set");
  if (deltas.size() != weights.size()) {
    throw std::invalid_argument("aggregate: weights/delta count mismatch");
  }
  ParamVector out = zeros(deltas.front().size());
  for (std::size_t c = 0; c < deltas.size(); ++c) {
    check_same_dim(out, deltas[c], "aggregate");
    axpy(out, weights[c], deltas[c]);
  }
  return out;
}

/// One server update treating the aggregated delta as a pseudo-gradient.
/// alpha is the scheduled learning rate for this round (cfg.lr is the base
/// value schedules derive from). GD: x <- x - alpha * pg.
inline void server_step(const ServerOptConfig& cfg, ServerState& st,
                        ParamVector& x, const ParamVector& pseudo_grad,
                        double alpha) {
  check_same_dim(x, pseudo_grad, "server_step");
  if (!all_finite(x) || !all_finite(pseudo_grad)) {
    throw std::runtime_error("server_step: non-finite input");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("server_step: alpha must be > 0");
  const std::size_t d = x.size();
  switch (cfg.method) {
    case ServerOptimizer::Gd:
      for (std::size_t i = 0; i < d; ++i) x[i] -= alpha * pseudo_grad[i];
      break;
    case ServerOptimizer::AdaGrad:
      for (std::size_t i = 0; i < d; ++i) {
        st.v[i] += pseudo_grad[i] * pseudo_grad[i];
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * pseudo_grad[i];
        x[i] -= alpha * st.m[i] / std::sqrt(st.v[i]);
      }
      break;
    case ServerOptimizer::Adam:
      for (std::size_t i = 0; i < d; ++i) {
        st.v[i] = cfg.beta2 * st.v[i] +
                  (1.0 - cfg.beta2) * pseudo_grad[i] * pseudo_grad[i];
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * pseudo_grad[i];
        x[i] -= alpha * st.m[i] / std::sqrt(st.v[i]);
      }
      break;
  }
  st.round += 1;
}

/// Uniform sample of s client ids from [0, m_total) without replacement,
/// returned sorted ascending.
inline std::vector<int> sample_clients(int m_total, int s, std::mt19937_64& rng) {
  if (s < 1 || s > m_total) {
    throw std::invalid_argument("sample_clients: need 1 <= s <= clients, got s=" +
                                std::to_string(s) + " of " +
                                std::to_string(m_total));
  }
  std::vector<int> ids(static_cast<std::size_t>(m_total));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < s; ++i) {
    std::uniform_int_distribution<int> pick(i, m_total - 1);
    std::swap(ids[static_cast<std::size_t>(i)],
              ids[static_cast<std::size_t>(pick(rng))]);
  }
  ids.resize(static_cast<std::size_t>(s));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace fedsim
