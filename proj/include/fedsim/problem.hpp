#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "fedsim/logreg.hpp"
#include "fedsim/quadratic.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

/// Gradient noise mechanism. At most one is active: additive isotropic
/// Gaussian noise (sigma > 0) or minibatch subsampling (batch > 0). Both
/// zero means deterministic full-batch gradients.
struct NoiseModel {
  double sigma = 0.0;
  int batch = 0;
};

inline void validate(const NoiseModel& noise) {
  if (noise.sigma < 0.0) throw std::invalid_argument("noise: sigma must be >= 0");
  if (noise.batch < 0) throw std::invalid_argument("noise: batch must be >= 0");
  if (noise.sigma > 0.0 && noise.batch > 0) {
    throw std::invalid_argument(
        "noise: only one mechanism may be active (sigma or batch)");
  }
}

/// g + sigma * z with z standard normal, so E[out] = g and
/// E|out - g|^2 = sigma^2 * d.
inline ParamVector noisy_grad(const ParamVector& g, const NoiseModel& noise,
                              std::mt19937_64& rng) {
  if (noise.sigma == 0.0) return g;
  std::normal_distribution<double> gauss(0.0, 1.0);
  ParamVector out = g;
  for (double& v : out) v += noise.sigma * gauss(rng);
  return out;
}

/// A federated problem: a quadratic family or a logreg task, plus the noise
/// mechanism. Immutable after construction; gradient oracles are pure given
/// an rng stream.
struct FederatedProblem {
  std::optional<QuadraticFamily> quad;
  std::optional<LogRegTask> logreg;
  NoiseModel noise;

  static FederatedProblem quadratic(QuadraticFamily family, NoiseModel n = {}) {
    validate(family);
    validate(n);
    if (n.batch > 0) {
      throw std::invalid_argument(
          "problem: minibatch noise applies to logreg tasks only");
    }
    FederatedProblem p;
    p.quad = std::move(family);
    p.noise = n;
    return p;
  }

  static FederatedProblem logistic(LogRegTask task, NoiseModel n = {}) {
    validate(n);
    if (task.num_clients() < 1) {
      throw std::invalid_argument("problem: empty logreg task");
    }
    if (n.batch > 0) {
      for (const auto& cl : task.clients) {
        if (n.batch > static_cast<int>(cl.features.size())) {
          throw std::invalid_argument("problem: batch exceeds a client shard");
        }
      }
    }
    FederatedProblem p;
    p.logreg = std::move(task);
    p.noise = n;
    return p;
  }

  std::size_t dim() const { return quad ? quad->dim() : logreg->dim(); }

  int num_clients() const {
    return quad ? quad->num_clients() : logreg->num_clients();
  }

  /// Dataset weights w_i under full participation.
  std::vector<double> weights() const {
    if (quad) {
      std::vector<double> w;
      w.reserve(quad->clients.size());
      for (const auto& cl : quad->clients) w.push_back(cl.weight);
      return w;
    }
    return client_weights(*logreg);
  }

  /// Exact per-client gradient grad F_i(x).
  ParamVector mean_gradient(int i, const ParamVector& x) const {
    return quad ? quad_grad(*quad, i, x) : logreg_mean_grad(*logreg, i, x);
  }

  /// Stochastic per-client gradient under the configured noise mechanism.
  ParamVector sample_gradient(int i, const ParamVector& x,
                              std::mt19937_64& rng) const {
    if (quad) return noisy_grad(quad_grad(*quad, i, x), noise, rng);
    if (noise.batch > 0) return logreg_grad(*logreg, i, x, noise.batch, rng);
    return noisy_grad(logreg_mean_grad(*logreg, i, x), noise, rng);
  }

  double objective(const ParamVector& x) const {
    return quad ? family_objective(*quad, x) : logreg_objective(*logreg, x);
  }

  ParamVector objective_gradient(const ParamVector& x) const {
    return quad ? family_gradient(*quad, x) : logreg_gradient(*logreg, x);
  }
};

}  // namespace fedsim
