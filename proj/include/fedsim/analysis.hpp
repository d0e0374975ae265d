#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/client_opt.hpp"
#include "fedsim/problem.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

/// Closed-form contraction constant of k deterministic GD steps on a
/// quadratic with H = mu I: h(k) = (1 - eta*mu)^(2k). Valid for
/// 0 < eta*mu < 1 (the derivation further assumes eta*(mu+L) < 2).
inline double sgd_contraction(double eta, double mu, int k) {
  if (k < 0) throw std::invalid_argument("sgd_contraction: k must be >= 0");
  const double em = eta * mu;
  if (!(em > 0.0 && em < 1.0)) {
    throw std::invalid_argument("sgd_contraction: require 0 < eta*mu < 1");
  }
  return std::pow(1.0 - em, 2 * k);
}

/// Closed-form cumulative variance of k SGD steps per unit gradient
/// variance: q(k) = k * eta^2. sigma^2 multiplies this externally.
inline double sgd_cumulative_variance(double eta, int k) {
  if (k < 0) throw std::invalid_argument("sgd_cumulative_variance: k must be >= 0");
  if (!(eta > 0.0)) throw std::invalid_argument("sgd_cumulative_variance: eta must be > 0");
  return static_cast<double>(k) * eta * eta;
}

struct ContractionReport {
  int steps = 0;
  double h_hat = 0.0;
  std::optional<double> h_closed_form;  // SGD on H = mu*I quadratics only
  std::vector<double> per_trial_ratios;
};

struct VarianceReport {
  int steps = 0;
  double q_hat = 0.0;
  double q_bound = 0.0;  // k * eta^2
  double sigma = 0.0;
};

/// Inputs of the convergence bound; one h_i, q_i per client.
struct BoundInputs {
  std::vector<double> h;
  std::vector<double> q;
  std::vector<double> w;
  double sigma = 0.0;
  double x0_err = 0.0;  // |x^(0) - x~|^2
  int rounds = 1;       // T
};

namespace detail {

/// Endpoint of k local optimizer steps from x0 (k = 0 returns x0).
inline ParamVector local_endpoint(const ClientOptConfig& opt,
                                  const FederatedProblem& problem, int client,
                                  int k, const ParamVector& x0,
                                  std::mt19937_64& rng) {
  if (k == 0) return x0;
  ClientOptConfig cfg = opt;
  cfg.local_steps = k;
  auto grad = [&](const ParamVector& x, std::mt19937_64& r) {
    return problem.sample_gradient(client, x, r);
  };
  const LocalRunResult res = run_local(cfg, grad, x0, rng);
  return sub(x0, res.delta);
}

/// mu when the client's Hessian is exactly mu * I, else nothing.
inline std::optional<double> isotropic_curvature(const FederatedProblem& problem,
                                                 int client) {
  if (!problem.quad) return std::nullopt;
  const auto& h = problem.quad->clients[static_cast<std::size_t>(client)].h;
  if (h.n == 0) return std::nullopt;
  const double mu = h.at(0, 0);
  for (std::size_t i = 0; i < h.n; ++i) {
    for (std::size_t j = 0; j < h.n; ++j) {
      if (h.at(i, j) != (i == j ? mu : 0.0)) return std::nullopt;
    }
  }
  return mu;
}

}  // namespace detail

/// Empirical contraction constant of the k-step local operator between two
/// start points:  h_hat = |E[A(x;k)] - E[A(y;k)]|^2 / |x - y|^2, expectations
/// estimated over `trials` runs. Paired trials share identical rng streams
/// across the x-run and the y-run (common random numbers); estimating
/// without the pairing would inflate h_hat.
inline ContractionReport estimate_contraction(const ClientOptConfig& opt,
                                              const FederatedProblem& problem,
                                              int client, int k,
                                              const ParamVector& x,
                                              const ParamVector& y, int trials,
                                              std::uint64_t seed) {
  check_same_dim(x, y, "estimate_contraction");
  if (x == y) {
    throw std::invalid_argument("estimate_contraction: start points must differ");
  }
  if (trials < 1) throw std::invalid_argument("estimate_contraction: trials must be >= 1");
  if (k < 0) throw std::invalid_argument("estimate_contraction: k must be >= 0");
  if (client < 0 || client >= problem.num_clients()) {
    throw std::invalid_argument("estimate_contraction: client index out of range");
  }
  const double base = norm_sq(sub(x, y));
  ParamVector mean_x = zeros(x.size());
  ParamVector mean_y = zeros(x.size());
  ContractionReport report;
  report.steps = k;
  report.per_trial_ratios.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    // Same stream contents for both runs: common random numbers.
    std::mt19937_64 rng_x =
        substream(seed, {kLaneTrial, static_cast<std::uint64_t>(t)});
    std::mt19937_64 rng_y =
        substream(seed, {kLaneTrial, static_cast<std::uint64_t>(t)});
    const ParamVector ax = detail::local_endpoint(opt, problem, client, k, x, rng_x);
    const ParamVector ay = detail::local_endpoint(opt, problem, client, k, y, rng_y);
    report.per_trial_ratios.push_back(norm_sq(sub(ax, ay)) / base);
    axpy(mean_x, 1.0 / trials, ax);
    axpy(mean_y, 1.0 / trials, ay);
  }
  report.h_hat = norm_sq(sub(mean_x, mean_y)) / base;
  if (opt.method == ClientOptimizer::Sgd) {
    if (auto mu = detail::isotropic_curvature(problem, client)) {
      const double em = opt.lr * *mu;
      if (em > 0.0 && em < 1.0) {
        report.h_closed_form = sgd_contraction(opt.lr, *mu, k);
      }
    }
  }
  return report;
}

/// Empirical cumulative variance of the k-step local operator, normalized by
/// the supplied total gradient-noise variance sigma^2:
///   q_hat = sample variance of A(x;k) over trials / sigma^2.
/// For the isotropic noise model in d dimensions the total variance is
/// sigma_component^2 * d; callers pass that total's square root. sigma = 0
/// short-circuits to 0 (the runs are deterministic).
inline VarianceReport estimate_variance(const ClientOptConfig& opt,
                                        const FederatedProblem& problem,
                                        int client, int k, const ParamVector& x,
                                        double sigma, int trials,
                                        std::uint64_t seed) {
  if (k < 0) throw std::invalid_argument("estimate_variance: k must be >= 0");
  if (sigma < 0.0) throw std::invalid_argument("estimate_variance: sigma must be >= 0");
  if (client < 0 || client >= problem.num_clients()) {
    throw std::invalid_argument("estimate_variance: client index out of range");
  }
  VarianceReport report;
  report.steps = k;
  report.sigma = sigma;
  report.q_bound = static_cast<double>(k) * opt.lr * opt.lr;
  if (sigma == 0.0 || k == 0) return report;
  if (trials < 2) throw std::invalid_argument("estimate_variance: trials must be >= 2");
  std::vector<ParamVector> ends;
  ends.reserve(static_cast<std::size_t>(trials));
  ParamVector mean = zeros(x.size());
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng =
        substream(seed, {kLaneTrial, static_cast<std::uint64_t>(t)});
    ends.push_back(detail::local_endpoint(opt, problem, client, k, x, rng));
    axpy(mean, 1.0 / trials, ends.back());
  }
  double acc = 0.0;
  for (const ParamVector& e : ends) acc += norm_sq(sub(e, mean));
  report.q_hat = acc / (static_cast<double>(trials - 1) * sigma * sigma);
  return report;
}

/// Explicit convergence bound on E|x^(T) - x~|^2 for the corrected round
/// iteration under contraction constants h_i and cumulative variances q_i:
///   32 * x0_err / (1 - swh) * swh^(T/2)
///     + 36 * sigma^2 * sum w_i^2 q_i / (T * (1 - swh)^2),
/// with swh = sum w_i h_i, which must lie in (0, 1).
inline double convergence_bound(const BoundInputs& in) {
  const std::size_t m = in.h.size();
  if (m == 0 || in.q.size() != m || in.w.size() != m) {
    throw std::invalid_argument("convergence_bound: h/q/w must be same nonempty size");
  }
  if (in.rounds < 1) throw std::invalid_argument("convergence_bound: rounds must be >= 1");
  if (in.sigma < 0.0 || in.x0_err < 0.0) {
    throw std::invalid_argument("convergence_bound: sigma and x0_err must be >= 0");
  }
  double swh = 0.0, swq = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (in.h[i] < 0.0 || in.q[i] < 0.0 || in.w[i] < 0.0) {
      throw std::invalid_argument("convergence_bound: negative inputs");
    }
    swh += in.w[i] * in.h[i];
    swq += in.w[i] * in.w[i] * in.q[i];
    wsum += in.w[i];
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("convergence_bound: weights must sum to 1");
  }
  if (!(swh > 0.0 && swh < 1.0)) {
    throw std::invalid_argument(
        "convergence_bound: sum w_i h_i = " + std::to_string(swh) +
        " must lie in (0, 1)");
  }
  const double a = 1.0 - swh;
  const double t = static_cast<double>(in.rounds);
  return 32.0 * in.x0_err / a * std::pow(swh, t / 2.0) +
         36.0 * in.sigma * in.sigma * swq / (t * a * a);
}

/// Residual norm |x - E[A(x)]| per grid point, expectations over `trials`
/// applications of the round operator (exact for deterministic operators
/// with trials = 1). The operator is called as op(x, rng).
template <class RoundOp>
std::vector<std::pair<ParamVector, double>> residual_landscape(
    RoundOp&& op, const std::vector<ParamVector>& grid, int trials,
    std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("residual_landscape: trials must be >= 1");
  std::vector<std::pair<ParamVector, double>> out;
  out.reserve(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    ParamVector mean = zeros(grid[g].size());
    for (int t = 0; t < trials; ++t) {
      std::mt19937_64 rng = substream(
          seed, {kLaneTrial, static_cast<std::uint64_t>(g),
                 static_cast<std::uint64_t>(t)});
      axpy(mean, 1.0 / trials, op(grid[g], rng));
    }
    out.emplace_back(grid[g], norm(sub(grid[g], mean)));
  }
  return out;
}

struct LrPair {
  double client_lr = 0.0;  // eta
  double server_lr = 0.0;  // alpha
};

/// Learning-rate pair minimizing the worst-case rate bound for locally
/// corrected runs over horizon T:
///   eta = min{ 1/(tau L), (1/(tau T^(1/3))) (D / (L^2 Lambda G^2))^(1/3) },
///   alpha = eta * tau  (alpha <= 1/L always).
/// L is the smoothness constant, Lambda the aggregation-matrix bound, G the
/// preconditioned-gradient bound and D the initial optimality gap.
inline LrPair prescribe_corrected_lr(int tau, double L, double Lambda, double G,
                                     double D, int T) {
  if (tau < 1 || T < 1) {
    throw std::invalid_argument("prescribe_corrected_lr: tau and T must be >= 1");
  }
  if (!(L > 0.0) || !(Lambda > 0.0) || !(G > 0.0) || !(D > 0.0)) {
    throw std::invalid_argument("prescribe_corrected_lr: constants must be > 0");
  }
  const double t3 = std::cbrt(static_cast<double>(T));
  const double ratio = std::cbrt(D / (L * L * Lambda * G * G));
  const double eta = std::min(1.0 / (tau * L), ratio / (tau * t3));
  return LrPair{eta, eta * static_cast<double>(tau)};
}

/// Decaying server learning rate for the SGD special case:
///   alpha_t = 2 / [(1 - (1 - eta*mu)^(2 tau)) * (t + beta)].
/// Requires 0 < eta*mu < 2 so the contraction factor is genuine; beta > 0 is
/// capped by 4 sigma^2 eta^2 tau / [(1 - (1-eta*mu)^(2tau)) |x0 - x~|]^2,
/// which callers enforce (the needed quantities are theirs).
inline double inverse_time_server_lr(int t, double eta, double mu, int tau,
                                     double beta) {
  if (t < 0) throw std::invalid_argument("inverse_time_server_lr: t must be >= 0");
  if (tau < 1) throw std::invalid_argument("inverse_time_server_lr: tau must be >= 1");
  if (!(beta > 0.0)) throw std::invalid_argument("inverse_time_server_lr: beta must be > 0");
  const double em = eta * mu;
  if (!(em > 0.0 && em < 2.0)) {
    throw std::invalid_argument("inverse_time_server_lr: require 0 < eta*mu < 2");
  }
  const double a = 1.0 - std::pow(1.0 - em, 2 * tau);
  return 2.0 / (a * (static_cast<double>(t) + beta));
}

}  // namespace fedsim
