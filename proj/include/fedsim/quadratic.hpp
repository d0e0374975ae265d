#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/matrix.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

/// One client's quadratic objective F_i(x) = 0.5 x^T H_i x - e_i^T x + c_i.
struct QuadraticClient {
  Matrix h;       // symmetric positive definite
  ParamVector e;
  double c = 0.0;
  double weight = 0.0;
};

struct QuadraticFamily {
  std::vector<QuadraticClient> clients;

  std::size_t dim() const { return clients.empty() ? 0 : clients.front().e.size(); }
  int num_clients() const { return static_cast<int>(clients.size()); }
};

inline void validate(const QuadraticFamily& family) {
  if (family.clients.empty()) {
    throw std::invalid_argument("quadratic family: no clients");
  }
  const std::size_t d = family.dim();
  double wsum = 0.0;
  for (std::size_t i = 0; i < family.clients.size(); ++i) {
    const auto& cl = family.clients[i];
    const std::string who = "quadratic client " + std::to_string(i);
    if (cl.h.n != d || cl.e.size() != d) {
      throw std::invalid_argument(who + ": dimension mismatch");
    }
    if (!is_symmetric(cl.h, 1e-12)) {
      throw std::invalid_argument(who + ": H is not symmetric");
    }
    if (!is_positive_definite(cl.h)) {
      throw std::invalid_argument(who + ": H is not positive definite");
    }
    if (cl.weight < 0.0) throw std::invalid_argument(who + ": negative weight");
    wsum += cl.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument("quadratic family: weights must sum to 1 (got " +
                                std::to_string(wsum) + ")");
  }
}

inline void check_client_index(const QuadraticFamily& family, int i,
                               const char* where) {
  if (i < 0 || i >= family.num_clients()) {
    throw std::invalid_argument(std::string(where) + ": client index " +
                                std::to_string(i) + " out of range");
  }
}

/// grad F_i(x) = H_i x - e_i.
inline ParamVector quad_grad(const QuadraticFamily& family, int i,
                             const ParamVector& x) {
  check_client_index(family, i, "quad_grad");
  const auto& cl = family.clients[static_cast<std::size_t>(i)];
  return sub(matvec(cl.h, x), cl.e);
}

/// x_i* = H_i^{-1} e_i by direct solve, guarded by a condition-number check
/// and a residual check (|H x - e| < 1e-10).
inline ParamVector local_min(const QuadraticFamily& family, int i) {
  check_client_index(family, i, "local_min");
  const auto& cl = family.clients[static_cast<std::size_t>(i)];
  const double cond = spd_condition(cl.h);
  if (!(cond <= 1e12)) {
    throw std::runtime_error("local_min: H of client " + std::to_string(i) +
                             " is ill-conditioned (condition estimate " +
                             std::to_string(cond) + ")");
  }
  ParamVector x = solve(cl.h, cl.e);
  const ParamVector resid = sub(matvec(cl.h, x), cl.e);
  if (norm(resid) >= 1e-10) {
    throw std::runtime_error("local_min: residual too large for client " +
                             std::to_string(i));
  }
  return x;
}

/// x* = (sum w_i H_i)^{-1} sum w_i H_i x_i*.
inline ParamVector global_min(const QuadraticFamily& family) {
  validate(family);
  const std::size_t d = family.dim();
  Matrix a(d);
  ParamVector b = zeros(d);
  for (int i = 0; i < family.num_clients(); ++i) {
    const auto& cl = family.clients[static_cast<std::size_t>(i)];
    a = add_scaled(a, cl.weight, cl.h);
    axpy(b, cl.weight, matvec(cl.h, local_min(family, i)));
  }
  return solve(a, b);
}

/// F(x) = sum w_i F_i(x).
inline double family_objective(const QuadraticFamily& family,
                               const ParamVector& x) {
  double f = 0.0;
  for (const auto& cl : family.clients) {
    f += cl.weight * (0.5 * dot(x, matvec(cl.h, x)) - dot(cl.e, x) + cl.c);
  }
  return f;
}

inline ParamVector family_gradient(const QuadraticFamily& family,
                                   const ParamVector& x) {
  ParamVector g = zeros(x.size());
  for (const auto& cl : family.clients) {
    axpy(g, cl.weight, sub(matvec(cl.h, x), cl.e));
  }
  return g;
}

/// Per-client plan for fixed-preconditioner local runs: learning rate eta_i,
/// step count tau_i and diagonal preconditioner P_i (empty = identity).
struct LocalPlan {
  std::vector<double> lr;
  std::vector<int> steps;
  std::vector<DiagMatrix> precond;  // empty list or empty entries = identity
};

inline LocalPlan uniform_plan(int num_clients, double lr, int steps,
                              std::vector<DiagMatrix> precond = {}) {
  LocalPlan plan;
  plan.lr.assign(static_cast<std::size_t>(num_clients), lr);
  plan.steps.assign(static_cast<std::size_t>(num_clients), steps);
  plan.precond = std::move(precond);
  return plan;
}

inline void check_plan(const QuadraticFamily& family, const LocalPlan& plan,
                       const char* where) {
  const std::size_t m = static_cast<std::size_t>(family.num_clients());
  if (plan.lr.size() != m || plan.steps.size() != m ||
      (!plan.precond.empty() && plan.precond.size() != m)) {
    throw std::invalid_argument(std::string(where) +
                                ": plan size does not match client count");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!(plan.lr[i] > 0.0) || plan.steps[i] < 1) {
      throw std::invalid_argument(std::string(where) +
                                  ": plan needs lr > 0 and steps >= 1");
    }
  }
}

inline DiagMatrix plan_precond(const LocalPlan& plan, std::size_t i,
                               std::size_t d) {
  if (plan.precond.empty() || plan.precond[i].empty()) {
    return constant_diag(d, 1.0);
  }
  if (plan.precond[i].size() != d) {
    throw std::invalid_argument("plan preconditioner: dimension mismatch");
  }
  return plan.precond[i];
}

/// K_i = (I - eta_i P_i H_i)^{tau_i}, the per-client contraction matrix of
/// the local preconditioned-GD operator.
inline Matrix contraction_matrix(const QuadraticFamily& family,
                                 const LocalPlan& plan, int i) {
  check_client_index(family, i, "contraction_matrix");
  const std::size_t d = family.dim();
  const auto& cl = family.clients[static_cast<std::size_t>(i)];
  const std::size_t ii = static_cast<std::size_t>(i);
  const DiagMatrix p = plan_precond(plan, ii, d);
  const Matrix step = add_scaled(Matrix::identity(d), -plan.lr[ii],
                                 diag_times(p, cl.h));
  return mat_pow(step, plan.steps[ii]);
}

/// Fixed point of the expected deterministic round operator:
///   x~ = [sum w_i (I - K_i)]^{-1} sum w_i (I - K_i) x_i*.
/// Errors if the averaged operator is not a contraction (spectral norm of
/// sum w_i K_i >= 1, reported in the message).
inline ParamVector closed_form_fixed_point(const QuadraticFamily& family,
                                           const LocalPlan& plan) {
  validate(family);
  check_plan(family, plan, "closed_form_fixed_point");
  const std::size_t d = family.dim();
  Matrix ksum(d);
  Matrix s(d);
  ParamVector b = zeros(d);
  for (int i = 0; i < family.num_clients(); ++i) {
    const auto& cl = family.clients[static_cast<std::size_t>(i)];
    const Matrix k = contraction_matrix(family, plan, i);
    ksum = add_scaled(ksum, cl.weight, k);
    const Matrix ik = add_scaled(Matrix::identity(d), -1.0, k);
    s = add_scaled(s, cl.weight, ik);
    axpy(b, cl.weight, matvec(ik, local_min(family, i)));
  }
  const double rho = spectral_norm(ksum, 1e-8);
  if (!(rho < 1.0)) {
    throw std::runtime_error(
        "closed_form_fixed_point: averaged operator is not a contraction "
        "(spectral norm " + std::to_string(rho) + " >= 1)");
  }
  return solve(s, b);
}

/// Limit of the fixed point as the common lr scale goes to zero with
/// eta_i = gamma_i * eta:
///   (sum w_i gamma_i tau_i P_i H_i)^{-1} (sum w_i gamma_i tau_i P_i H_i x_i*).
/// The expression is invariant to the overall scale of gamma.
inline ParamVector limiting_fixed_point(const QuadraticFamily& family,
                                        const std::vector<double>& gammas,
                                        const std::vector<int>& taus,
                                        const std::vector<DiagMatrix>& precond) {
  validate(family);
  const std::size_t m = static_cast<std::size_t>(family.num_clients());
  if (gammas.size() != m || taus.size() != m ||
      (!precond.empty() && precond.size() != m)) {
    throw std::invalid_argument(
        "limiting_fixed_point: plan size does not match client count");
  }
  const std::size_t d = family.dim();
  Matrix a(d);
  ParamVector b = zeros(d);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& cl = family.clients[i];
    DiagMatrix p = (precond.empty() || precond[i].empty())
                       ? constant_diag(d, 1.0)
                       : precond[i];
    const Matrix ph = diag_times(p, cl.h);
    const double scale = cl.weight * gammas[i] * static_cast<double>(taus[i]);
    a = add_scaled(a, scale, ph);
    axpy(b, scale, matvec(ph, local_min(family, static_cast<int>(i))));
  }
  try {
    return solve(a, b);
  } catch (const std::runtime_error&) {
    throw std::runtime_error("limiting_fixed_point: singular system");
  }
}

/// Closed form of the round-operator residual x - A(x):
///   sum w_i (I - K_i) H_i^{-1} grad F_i(x) = sum w_i (I - K_i)(x - x_i*).
inline ParamVector skew_residual(const QuadraticFamily& family,
                                 const LocalPlan& plan, const ParamVector& x) {
  validate(family);
  check_plan(family, plan, "skew_residual");
  const std::size_t d = family.dim();
  if (x.size() != d) throw std::invalid_argument("skew_residual: dimension mismatch");
  ParamVector out = zeros(d);
  for (int i = 0; i < family.num_clients(); ++i) {
    const auto& cl = family.clients[static_cast<std::size_t>(i)];
    const Matrix k = contraction_matrix(family, plan, i);
    const Matrix ik = add_scaled(Matrix::identity(d), -1.0, k);
    axpy(out, cl.weight, matvec(ik, sub(x, local_min(family, i))));
  }
  return out;
}

}  // namespace fedsim
