#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/vec.hpp"

namespace fedsim {

/// Joint = local normalization on clients plus global renormalization at the
/// server; Joint implies the local accounting is active.
enum class CorrectionMode { None, Local, Joint };

/// Components of a correction matrix at or below this floor are treated as
/// broken accounting and raise an error. No silent clamping: a vanishing N
/// means no local progress and the invariants exist to catch that.
inline constexpr double kCorrectionFloor = 1e-12;

/// In-round accumulator for the correction matrices. M is the
/// momentum-weighted preconditioner (M starts at 0), N the running sum.
struct CorrectionAccumulator {
  DiagMatrix m;
  DiagMatrix n;

  explicit CorrectionAccumulator(std::size_t d) : m(d, 0.0), n(d, 0.0) {}
};

/// One per-step update: M' = beta1 * M + (1 - beta1) * B_k, N' = N + M'.
/// B_k is the preconditioner the client optimizer used this step.
inline void accumulate(CorrectionAccumulator& acc, const DiagMatrix& b_k,
                       double beta1) {
  check_same_dim(acc.m, b_k, "accumulate");
  for (std::size_t i = 0; i < b_k.size(); ++i) {
    if (!(b_k[i] > 0.0)) {
      throw std::invalid_argument(
          "accumulate: preconditioner component " + std::to_string(i) +
          " is not strictly positive");
    }
    acc.m[i] = beta1 * acc.m[i] + (1.0 - beta1) * b_k[i];
    acc.n[i] += acc.m[i];
  }
}

inline void check_correction_matrix(const DiagMatrix& n, const char* where) {
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > kCorrectionFloor)) {
      throw std::runtime_error(
          std::string(where) + ": correction component " + std::to_string(i) +
          " = " + std::to_string(n[i]) +
          " is at or below the positivity floor (no local progress or broken "
          "accounting)");
    }
  }
}

/// Local correction: the client ships N^{-1} * delta instead of delta.
inline ParamVector apply_local(const ParamVector& delta, const DiagMatrix& n) {
  check_same_dim(delta, n, "apply_local");
  check_correction_matrix(n, "apply_local");
  ParamVector out(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) out[i] = delta[i] / n[i];
  return out;
}

/// Server-side normalizer N_s = sum_i w_i * N_i^{-1}. Weights must be
/// renormalized over the participating set before the call.
inline DiagMatrix aggregate_global_norm(const std::vector<DiagMatrix>& n_list,
                                        const std::vector<double>& weights) {
  if (n_list.empty()) {
    throw std::invalid_argument("aggregate_global_norm: empty client set");
  }
  if (n_list.size() != weights.size()) {
    throw std::invalid_argument(
        "aggregate_global_norm: weights/matrix count mismatch");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("aggregate_global_norm: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw std::invalid_argument(
        "aggregate_global_norm: weights must sum to 1 over the participating "
        "set (got " + std::to_string(wsum) + ")");
  }
  DiagMatrix n_s(n_list.front().size(), 0.0);
  for (std::size_t c = 0; c < n_list.size(); ++c) {
    check_same_dim(n_s, n_list[c], "aggregate_global_norm");
    check_correction_matrix(n_list[c], "aggregate_global_norm");
    for (std::size_t i = 0; i < n_s.size(); ++i) {
      n_s[i] += weights[c] / n_list[c][i];
    }
  }
  return n_s;
}

/// Global correction: renormalize the aggregated delta by N_s^{-1}.
inline ParamVector apply_global(const ParamVector& delta_agg,
                                const DiagMatrix& n_s) {
  check_same_dim(delta_agg, n_s, "apply_global");
  check_correction_matrix(n_s, "apply_global");
  ParamVector out(delta_agg.size());
  for (std::size_t i = 0; i < delta_agg.size(); ++i) out[i] = delta_agg[i] / n_s[i];
  return out;
}

}  // namespace fedsim
