#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedsim/analysis.hpp"

namespace fedsim {

enum class ScheduleType { Constant, StepDecay, InverseTime };

/// Learning-rate schedule over rounds.
///  * constant: base values at every round.
///  * step_decay: client lr divided by `factor` at each listed round (the
///    division applies from that round on); the server lr is divided by
///    `server_factor`, which defaults to 1 (no server decay).
///  * inverse_time: constant client lr; server lr follows the decaying
///    schedule alpha_t = 2 / [(1 - (1 - eta*mu)^(2 tau)) (t + beta)].
struct LrSchedule {
  ScheduleType type = ScheduleType::Constant;
  std::vector<int> decay_rounds;  // step_decay
  double factor = 10.0;           // step_decay, client lr divisor
  double server_factor = 1.0;     // step_decay, server lr divisor
  double beta = 1.0;              // inverse_time
  double mu = 1.0;                // inverse_time, strong-convexity constant
};

inline void validate(const LrSchedule& s) {
  switch (s.type) {
    case ScheduleType::Constant:
      break;
    case ScheduleType::StepDecay: {
      if (!(s.factor > 0.0) || !(s.server_factor > 0.0)) {
        throw std::invalid_argument("schedule: decay factors must be > 0");
      }
      for (std::size_t i = 0; i < s.decay_rounds.size(); ++i) {
        if (s.decay_rounds[i] < 0) {
          throw std::invalid_argument("schedule: decay rounds must be >= 0");
        }
        if (i > 0 && s.decay_rounds[i] <= s.decay_rounds[i - 1]) {
          throw std::invalid_argument("schedule: decay rounds must increase");
        }
      }
      break;
    }
    case ScheduleType::InverseTime:
      if (!(s.beta > 0.0)) throw std::invalid_argument("schedule: beta must be > 0");
      if (!(s.mu > 0.0)) throw std::invalid_argument("schedule: mu must be > 0");
      break;
  }
}

/// Learning rates in effect at round t (0-based). base_eta / base_alpha are
/// the config values; tau is the common local step count (inverse_time only).
inline LrPair lr_at(const LrSchedule& s, double base_eta, double base_alpha,
                    int tau, int t) {
  if (t < 0) throw std::invalid_argument("lr_at: round must be >= 0");
  switch (s.type) {
    case ScheduleType::Constant:
      return LrPair{base_eta, base_alpha};
    case ScheduleType::StepDecay: {
      int hits = 0;
      for (int r : s.decay_rounds) {
        if (r <= t) ++hits;
      }
      return LrPair{base_eta / std::pow(s.factor, hits),
                    base_alpha / std::pow(s.server_factor, hits)};
    }
    case ScheduleType::InverseTime:
      return LrPair{base_eta,
                    inverse_time_server_lr(t, base_eta, s.mu, tau, s.beta)};
  }
  throw std::logic_error("lr_at: unknown schedule type");
}

}  // namespace fedsim
