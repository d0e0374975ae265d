#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

/// One client's shard of the synthetic logistic-regression task.
struct LogRegClient {
  std::vector<ParamVector> features;  // n samples of dimension d
  std::vector<int> labels;            // 0/1
  double label_one_prob = 0.5;        // the shard's generating probability
};

/// Binary L2-regularized logistic regression across clients:
///   F_i(x) = (1/n_i) sum_j softplus(-yhat_j <x, f_j>) + (l2/2) |x|^2,
/// yhat in {-1,+1}. l2 > 0 makes every F_i strongly convex.
struct LogRegTask {
  std::vector<LogRegClient> clients;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
  double skew = 0.0;

  std::size_t dim() const {
    return (clients.empty() || clients.front().features.empty())
               ? 0
               : clients.front().features.front().size();
  }
  int num_clients() const { return static_cast<int>(clients.size()); }
};

/// Synthetic federated task. Features are Gaussian class-conditionals with a
/// fixed per-coordinate scale spread (geometric from 0.2 to 5), which makes
/// the Hessian deliberately ill-conditioned so adaptive client optimizers
/// have curvature to exploit. Label heterogeneity: each client's
/// label-1 probability is drawn Dirichlet-style, Beta(a, a) with
/// a = (1-skew)/skew, so skew=0 is the homogeneous p=1/2 task and skew=1
/// gives one-label shards (alternating by client id). Deterministic per seed.
inline LogRegTask make_logreg(std::uint64_t seed, int num_clients,
                              int samples_per_client, int dim, double skew,
                              double l2 = 1e-3) {
  if (num_clients < 1) throw std::invalid_argument("make_logreg: need >= 1 client");
  if (samples_per_client < 1) {
    throw std::invalid_argument("make_logreg: client shards must be non-empty");
  }
  if (dim < 1) throw std::invalid_argument("make_logreg: need dim >= 1");
  if (!(skew >= 0.0 && skew <= 1.0)) {
    throw std::invalid_argument("make_logreg: skew must lie in [0, 1]");
  }
  if (l2 < 0.0) throw std::invalid_argument("make_logreg: l2 must be >= 0");

  const std::size_t d = static_cast<std::size_t>(dim);
  std::vector<double> scale(d, 1.0);
  if (d > 1) {
    const double lo = std::log(0.2), hi = std::log(5.0);
    for (std::size_t j = 0; j < d; ++j) {
      scale[j] = std::exp(lo + (hi - lo) * static_cast<double>(j) /
                                   static_cast<double>(d - 1));
    }
  }
  // Class-mean direction, fixed by the seed; class means are +/- mu.
  std::mt19937_64 dir_rng = substream(seed, {0x5EEDu});
  std::vector<double> mu(d);
  for (std::size_t j = 0; j < d; ++j) {
    mu[j] = (dir_rng() & 1u ? 1.0 : -1.0) * 0.5 * scale[j];
  }

  LogRegTask task;
  task.l2 = l2;
  task.seed = seed;
  task.skew = skew;
  task.clients.resize(static_cast<std::size_t>(num_clients));
  for (int i = 0; i < num_clients; ++i) {
    auto& cl = task.clients[static_cast<std::size_t>(i)];
    std::mt19937_64 rng =
        substream(seed, {kLaneClient, static_cast<std::uint64_t>(i)});
    double p;
    if (skew <= 0.0) {
      p = 0.5;
    } else if (skew >= 1.0) {
      p = (i % 2 == 0) ? 0.0 : 1.0;
    } else {
      const double a = (1.0 - skew) / skew;
      std::gamma_distribution<double> gamma(a, 1.0);
      const double u = gamma(rng), v = gamma(rng);
      p = (u + v > 0.0) ? u / (u + v) : 0.5;
    }
    cl.label_one_prob = p;
    std::bernoulli_distribution coin(p);
    std::normal_distribution<double> gauss(0.0, 1.0);
    cl.features.reserve(static_cast<std::size_t>(samples_per_client));
    cl.labels.reserve(static_cast<std::size_t>(samples_per_client));
    for (int s = 0; s < samples_per_client; ++s) {
      const int y = coin(rng) ? 1 : 0;
      const double sign = y == 1 ? 1.0 : -1.0;
      ParamVector f(d);
      for (std::size_t j = 0; j < d; ++j) {
        f[j] = sign * mu[j] + scale[j] * gauss(rng);
      }
      cl.features.push_back(std::move(f));
      cl.labels.push_back(y);
    }
  }
  return task;
}

inline void check_client_index(const LogRegTask& task, int i, const char* where) {
  if (i < 0 || i >= task.num_clients()) {
    throw std::invalid_argument(std::string(where) + ": client index " +
                                std::to_string(i) + " out of range");
  }
  if (task.clients[static_cast<std::size_t>(i)].features.empty()) {
    throw std::invalid_argument(std::string(where) + ": client " +
                                std::to_string(i) + " has an empty shard");
  }
}

inline double softplus(double t) {
  if (t > 35.0) return t;
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

/// sigmoid(-a) = 1 / (1 + e^a), the per-sample loss derivative factor.
inline double neg_sigmoid(double a) { return 1.0 / (1.0 + std::exp(a)); }

inline double logreg_local_objective(const LogRegTask& task, int i,
                                     const ParamVector& x) {
  check_client_index(task, i, "logreg_local_objective");
  const auto& cl = task.clients[static_cast<std::size_t>(i)];
  double f = 0.0;
  for (std::size_t s = 0; s < cl.features.size(); ++s) {
    const double yhat = cl.labels[s] == 1 ? 1.0 : -1.0;
    f += softplus(-yhat * dot(x, cl.features[s]));
  }
  f /= static_cast<double>(cl.features.size());
  return f + 0.5 * task.l2 * norm_sq(x);
}

/// Full-batch gradient of F_i, deterministic.
inline ParamVector logreg_mean_grad(const LogRegTask& task, int i,
                                    const ParamVector& x) {
  check_client_index(task, i, "logreg_mean_grad");
  const auto& cl = task.clients[static_cast<std::size_t>(i)];
  if (x.size() != task.dim()) {
    throw std::invalid_argument("logreg_mean_grad: dimension mismatch");
  }
  ParamVector g = zeros(x.size());
  for (std::size_t s = 0; s < cl.features.size(); ++s) {
    const double yhat = cl.labels[s] == 1 ? 1.0 : -1.0;
    const double coef = -yhat * neg_sigmoid(yhat * dot(x, cl.features[s]));
    axpy(g, coef, cl.features[s]);
  }
  const double inv_n = 1.0 / static_cast<double>(cl.features.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv_n + task.l2 * x[j];
  return g;
}

/// Minibatch gradient: batch == n_i returns the deterministic full-batch
/// gradient without consuming the rng; otherwise samples `batch` indices
/// uniformly with replacement, which keeps the estimator unbiased.
inline ParamVector logreg_grad(const LogRegTask& task, int i,
                               const ParamVector& x, int batch,
                               std::mt19937_64& rng) {
  check_client_index(task, i, "logreg_grad");
  const auto& cl = task.clients[static_cast<std::size_t>(i)];
  const int n = static_cast<int>(cl.features.size());
  if (batch == n) return logreg_mean_grad(task, i, x);
  if (batch < 1 || batch > n) {
    throw std::invalid_argument("logreg_grad: batch must lie in [1, " +
                                std::to_string(n) + "]");
  }
  if (x.size() != task.dim()) {
    throw std::invalid_argument("logreg_grad: dimension mismatch");
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  ParamVector g = zeros(x.size());
  for (int b = 0; b < batch; ++b) {
    const std::size_t s = static_cast<std::size_t>(pick(rng));
    const double yhat = cl.labels[s] == 1 ? 1.0 : -1.0;
    const double coef = -yhat * neg_sigmoid(yhat * dot(x, cl.features[s]));
    axpy(g, coef, cl.features[s]);
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = g[j] * inv_b + task.l2 * x[j];
  return g;
}

/// Dataset weights w_i proportional to shard sizes.
inline std::vector<double> client_weights(const LogRegTask& task) {
  std::vector<double> w(static_cast<std::size_t>(task.num_clients()));
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = static_cast<double>(task.clients[i].features.size());
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

inline double logreg_objective(const LogRegTask& task, const ParamVector& x) {
  const std::vector<double> w = client_weights(task);
  double f = 0.0;
  for (int i = 0; i < task.num_clients(); ++i) {
    f += w[static_cast<std::size_t>(i)] * logreg_local_objective(task, i, x);
  }
  return f;
}

inline ParamVector logreg_gradient(const LogRegTask& task, const ParamVector& x) {
  const std::vector<double> w = client_weights(task);
  ParamVector g = zeros(x.size());
  for (int i = 0; i < task.num_clients(); ++i) {
    axpy(g, w[static_cast<std::size_t>(i)], logreg_mean_grad(task, i, x));
  }
  return g;
}

}  // namespace fedsim
