#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/correction.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

enum class ClientOptimizer { Sgd, PrecondGd, AdaGrad, Adam, Yogi };

inline const char* client_optimizer_name(ClientOptimizer m) {
  switch (m) {
    case ClientOptimizer::Sgd: return "sgd";
    case ClientOptimizer::PrecondGd: return "precond_gd";
    case ClientOptimizer::AdaGrad: return "adagrad";
    case ClientOptimizer::Adam: return "adam";
    case ClientOptimizer::Yogi: return "yogi";
  }
  return "?";
}

/// Client optimizer configuration for one client.
///
/// Conventions, applied uniformly to AdaGrad, Adam and Yogi:
///  * second-moment accumulator restarts at v = epsilon^2, i.e. the fresh
///    preconditioner is epsilon^{-1} (restart constant c = 1/epsilon);
///  * the preconditioner is P = v^{-1/2} elementwise, never 1/(sqrt(v)+eps);
///  * no bias correction.
/// SGD and PrecondGd carry no momentum or second moment (beta1 = beta2 = 0).
struct ClientOptConfig {
  ClientOptimizer method = ClientOptimizer::Sgd;
  double lr = 0.1;        // per-step learning rate eta_i
  int local_steps = 1;    // tau_i, steps per round
  double beta1 = 0.0;
  double beta2 = 0.0;
  double epsilon = 1e-7;
  DiagMatrix fixed_precond;  // PrecondGd only; empty means identity
};

inline void validate(const ClientOptConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("client_opt: lr must be > 0");
  if (cfg.local_steps < 1) {
    // tau = 0 makes every point a fixed point; rejected outright.
    throw std::invalid_argument("client_opt: local_steps must be >= 1");
  }
  if (!(cfg.epsilon > 0.0)) {
    throw std::invalid_argument("client_opt: epsilon must be > 0");
  }
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw std::invalid_argument("client_opt: beta1/beta2 must lie in [0, 1)");
  }
  const bool adaptive = cfg.method == ClientOptimizer::AdaGrad ||
                        cfg.method == ClientOptimizer::Adam ||
                        cfg.method == ClientOptimizer::Yogi;
  if (!adaptive && (cfg.beta1 != 0.0 || cfg.beta2 != 0.0)) {
    throw std::invalid_argument(
        "client_opt: beta1/beta2 must be 0 for sgd/precond_gd");
  }
  if (cfg.method == ClientOptimizer::PrecondGd) {
    for (double p : cfg.fixed_precond) {
      if (!(p > 0.0)) {
        throw std::invalid_argument(
            "client_opt: fixed preconditioner must be elementwise > 0");
      }
    }
  } else if (!cfg.fixed_precond.empty()) {
    throw std::invalid_argument(
        "client_opt: fixed_precond only applies to precond_gd");
  }
}

/// Per-round optimizer state. Restarted at the start of every round, so
/// clients are stateless across rounds.
struct ClientOptState {
  ParamVector m;   // momentum buffer
  ParamVector v;   // second-moment accumulator, elementwise >= 0
  int step_count = 0;
};

inline bool uses_second_moment(ClientOptimizer m) {
  return m == ClientOptimizer::AdaGrad || m == ClientOptimizer::Adam ||
         m == ClientOptimizer::Yogi;
}

/// Fresh state: zero momentum and, for adaptive kinds, v = epsilon^2 so the
/// first-step preconditioner equals the restart constant 1/epsilon.
inline ClientOptState reset_state(const ClientOptConfig& cfg, std::size_t dim) {
  validate(cfg);
  ClientOptState st;
  st.m = zeros(dim);
  st.v = uses_second_moment(cfg.method)
             ? constant_diag(dim, cfg.epsilon * cfg.epsilon)
             : zeros(dim);
  st.step_count = 0;
  return st;
}

/// One local optimizer step, in place:
///   update v / P per kind, m <- beta1 m + (1-beta1) g, x <- x - lr * P * m.
/// Returns the preconditioner B_k used this step (needed for correction
/// accounting). The preconditioner update happens before the model update.
inline DiagMatrix step(const ClientOptConfig& cfg, ClientOptState& st,
                       ParamVector& x, const ParamVector& g) {
  check_same_dim(x, g, "client step");
  if (st.m.size() != x.size() || st.v.size() != x.size()) {
    throw std::invalid_argument("client step: state dimension mismatch");
  }
  if (!all_finite(x) || !all_finite(g)) {
    throw std::runtime_error("client step: non-finite input");
  }
  const std::size_t d = x.size();
  DiagMatrix b(d, 1.0);
  switch (cfg.method) {
    case ClientOptimizer::Sgd:
      break;
    case ClientOptimizer::PrecondGd:
      if (!cfg.fixed_precond.empty()) {
        check_same_dim(cfg.fixed_precond, x, "client step precond");
        b = cfg.fixed_precond;
      }
      break;
    case ClientOptimizer::AdaGrad:
      for (std::size_t i = 0; i < d; ++i) {
        st.v[i] += g[i] * g[i];
        b[i] = 1.0 / std::sqrt(st.v[i]);
      }
      break;
    case ClientOptimizer::Adam:
      for (std::size_t i = 0; i < d; ++i) {
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        b[i] = 1.0 / std::sqrt(st.v[i]);
      }
      break;
    case ClientOptimizer::Yogi:
      for (std::size_t i = 0; i < d; ++i) {
        const double gsq = g[i] * g[i];
        const double diff = st.v[i] - gsq;
        const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        st.v[i] -= (1.0 - cfg.beta2) * sgn * gsq;
        b[i] = 1.0 / std::sqrt(st.v[i]);
      }
      break;
  }
  for (std::size_t i = 0; i < d; ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g[i];
    x[i] -= cfg.lr * b[i] * st.m[i];
  }
  st.step_count += 1;
  return b;
}

/// Result of one client's local run within a round.
struct LocalRunResult {
  ParamVector delta;    // x0 - x_tau, the model delta shipped to the server
  DiagMatrix n_matrix;  // N_i with the client lr folded in (SGD: lr * tau * I)
  std::vector<ParamVector> iterates;            // optional, tau + 1 entries
  std::vector<DiagMatrix> preconditioner_trace; // optional, tau entries
};

struct LocalRunRecord {
  bool iterates = false;
  bool preconditioners = false;
};

/// Runs tau local steps from x0 with a freshly restarted state, accumulating
/// the correction matrices along the way. The gradient oracle is called as
/// grad(x, rng) once per step; a non-finite gradient aborts the run.
///
/// The returned n_matrix is lr * sum_k M^{(k)} (momentum-weighted
/// preconditioner mass, lr folded in), so for SGD it equals lr * tau and
/// apply_local(delta, n_matrix) is the mean of the local gradients.
template <class GradFn>
LocalRunResult run_local(const ClientOptConfig& cfg, GradFn&& grad,
                         const ParamVector& x0, std::mt19937_64& rng,
                         const LocalRunRecord& record = {}) {
  validate(cfg);
  if (!all_finite(x0)) throw std::runtime_error("run_local: non-finite start point");
  const std::size_t d = x0.size();
  ParamVector x = x0;
  ClientOptState st = reset_state(cfg, d);
  CorrectionAccumulator acc(d);
  LocalRunResult res;
  if (record.iterates) res.iterates.push_back(x);
  for (int k = 0; k < cfg.local_steps; ++k) {
    ParamVector g = grad(static_cast<const ParamVector&>(x), rng);
    if (!all_finite(g)) {
      throw std::runtime_error("run_local: non-finite gradient at local step " +
                               std::to_string(k));
    }
    DiagMatrix b = step(cfg, st, x, g);
    accumulate(acc, b, cfg.beta1);
    if (record.iterates) res.iterates.push_back(x);
    if (record.preconditioners) res.preconditioner_trace.push_back(std::move(b));
  }
  res.delta = sub(x0, x);
  res.n_matrix = scaled(std::move(acc.n), cfg.lr);
  return res;
}

}  // namespace fedsim
