#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/client_opt.hpp"
#include "fedsim/correction.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/problem.hpp"
#include "fedsim/schedule.hpp"
#include "fedsim/server_opt.hpp"

namespace fedsim {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kDefaultMaxDim = 64;

/// Fully resolved experiment description. Client optimizer settings are
/// stored per client (configs may give scalars, which broadcast to all
/// clients, or per-client arrays).
struct ExperimentConfig {
  FederatedProblem problem;

  ClientOptimizer client_method = ClientOptimizer::Sgd;
  double client_beta1 = 0.0;
  double client_beta2 = 0.0;
  double client_epsilon = 1e-7;
  std::vector<double> client_lrs;          // size M
  std::vector<int> client_steps;           // size M
  std::vector<DiagMatrix> client_precond;  // empty, or size M (precond_gd)

  ServerOptConfig server;
  CorrectionMode correction = CorrectionMode::None;

  int clients_per_round = 1;  // S
  int rounds = 1;             // T
  std::uint64_t master_seed = 0;
  LrSchedule schedule;

  ParamVector x0;  // resolved to the problem dimension
  bool record_iterates = false;
  bool eval_objective = true;
  int max_dim = kDefaultMaxDim;

  /// Client i's optimizer config with the schedule's lr multiplier applied.
  ClientOptConfig client_opt_for(int i, double lr_mult = 1.0) const {
    const std::size_t ii = static_cast<std::size_t>(i);
    ClientOptConfig cfg;
    cfg.method = client_method;
    cfg.lr = client_lrs[ii] * lr_mult;
    cfg.local_steps = client_steps[ii];
    cfg.beta1 = client_beta1;
    cfg.beta2 = client_beta2;
    cfg.epsilon = client_epsilon;
    if (!client_precond.empty()) cfg.fixed_precond = client_precond[ii];
    return cfg;
  }

  /// Local plan (lr, steps, preconditioners) for the closed-form oracles,
  /// with an optional lr multiplier for scheduled rounds.
  LocalPlan local_plan(double lr_mult = 1.0) const {
    LocalPlan plan;
    plan.lr = client_lrs;
    for (double& lr : plan.lr) lr *= lr_mult;
    plan.steps = client_steps;
    plan.precond = client_precond;
    return plan;
  }
};

inline ClientOptimizer parse_client_optimizer(const std::string& s) {
  if (s == "sgd") return ClientOptimizer::Sgd;
  if (s == "precond_gd") return ClientOptimizer::PrecondGd;
  if (s == "adagrad") return ClientOptimizer::AdaGrad;
  if (s == "adam") return ClientOptimizer::Adam;
  if (s == "yogi") return ClientOptimizer::Yogi;
  throw std::invalid_argument("config: unknown client optimizer '" + s + "'");
}

inline ServerOptimizer parse_server_optimizer(const std::string& s) {
  if (s == "gd") return ServerOptimizer::Gd;
  if (s == "adagrad") return ServerOptimizer::AdaGrad;
  if (s == "adam") return ServerOptimizer::Adam;
  throw std::invalid_argument("config: unknown server optimizer '" + s + "'");
}

inline CorrectionMode parse_correction_mode(const std::string& s) {
  if (s == "none") return CorrectionMode::None;
  if (s == "local") return CorrectionMode::Local;
  if (s == "joint") return CorrectionMode::Joint;
  throw std::invalid_argument("config: unknown correction mode '" + s + "'");
}

inline MetricsFormat parse_metrics_format(const std::string& s) {
  if (s == "csv") return MetricsFormat::Csv;
  if (s == "jsonl") return MetricsFormat::Jsonl;
  throw std::invalid_argument("config: unknown metrics format '" + s + "'");
}

namespace detail {

/// Unknown keys are rejected outright so config typos fail fast.
inline void expect_keys(const nlohmann::json& j, const char* ctx,
                        std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: " + std::string(ctx) +
                                " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::invalid_argument("config: unknown key '" + item.key() +
                                  "' in " + ctx);
    }
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* ctx,
                                     const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw std::invalid_argument("config: missing key '" + std::string(key) +
                                "' in " + ctx);
  }
  return *it;
}

inline Matrix parse_matrix(const nlohmann::json& j, const char* ctx) {
  if (!j.is_array() || j.empty()) {
    throw std::invalid_argument("config: " + std::string(ctx) +
                                " must be a nested array");
  }
  std::vector<std::vector<double>> rows;
  for (const auto& row : j) rows.push_back(row.get<std::vector<double>>());
  return Matrix::from_rows(rows);
}

inline FederatedProblem parse_problem(const nlohmann::json& j,
                                      const NoiseModel& noise) {
  const std::string type = require(j, "problem", "type").get<std::string>();
  if (type == "quadratic") {
    expect_keys(j, "problem", {"type", "clients"});
    const auto& clients = require(j, "problem", "clients");
    if (!clients.is_array() || clients.empty()) {
      throw std::invalid_argument("config: problem.clients must be a nonempty array");
    }
    QuadraticFamily family;
    for (const auto& cj : clients) {
      expect_keys(cj, "problem.clients[]", {"h", "e", "c", "weight"});
      QuadraticClient cl;
      cl.h = parse_matrix(require(cj, "problem.clients[]", "h"), "clients[].h");
      cl.e = require(cj, "problem.clients[]", "e").get<ParamVector>();
      cl.c = cj.value("c", 0.0);
      cl.weight = require(cj, "problem.clients[]", "weight").get<double>();
      family.clients.push_back(std::move(cl));
    }
    return FederatedProblem::quadratic(std::move(family), noise);
  }
  if (type == "logreg") {
    expect_keys(j, "problem",
                {"type", "seed", "num_clients", "samples_per_client", "dim",
                 "skew", "l2"});
    const LogRegTask task = make_logreg(
        require(j, "problem", "seed").get<std::uint64_t>(),
        require(j, "problem", "num_clients").get<int>(),
        require(j, "problem", "samples_per_client").get<int>(),
        require(j, "problem", "dim").get<int>(), j.value("skew", 0.0),
        j.value("l2", 1e-3));
    return FederatedProblem::logistic(task, noise);
  }
  throw std::invalid_argument("config: unknown problem type '" + type + "'");
}

inline LrSchedule parse_schedule(const nlohmann::json& j) {
  LrSchedule s;
  const std::string type = require(j, "lr_schedule", "type").get<std::string>();
  if (type == "constant") {
    expect_keys(j, "lr_schedule", {"type"});
    s.type = ScheduleType::Constant;
  } else if (type == "step_decay") {
    expect_keys(j, "lr_schedule", {"type", "rounds", "factor", "server_factor"});
    s.type = ScheduleType::StepDecay;
    s.decay_rounds = require(j, "lr_schedule", "rounds").get<std::vector<int>>();
    s.factor = j.value("factor", 10.0);
    s.server_factor = j.value("server_factor", 1.0);
  } else if (type == "inverse_time") {
    expect_keys(j, "lr_schedule", {"type", "beta", "mu"});
    s.type = ScheduleType::InverseTime;
    s.beta = require(j, "lr_schedule", "beta").get<double>();
    s.mu = require(j, "lr_schedule", "mu").get<double>();
  } else {
    throw std::invalid_argument("config: unknown lr_schedule type '" + type + "'");
  }
  validate(s);
  return s;
}

template <class T>
std::vector<T> broadcast(const nlohmann::json& j, int m, const char* ctx) {
  std::vector<T> out;
  if (j.is_array()) {
    out = j.get<std::vector<T>>();
    if (out.size() != static_cast<std::size_t>(m)) {
      throw std::invalid_argument("config: " + std::string(ctx) + " has " +
                                  std::to_string(out.size()) +
                                  " entries for " + std::to_string(m) +
                                  " clients");
    }
  } else {
    out.assign(static_cast<std::size_t>(m), j.get<T>());
  }
  return out;
}

}  // namespace detail

inline void validate(const ExperimentConfig& cfg) {
  const int m = cfg.problem.num_clients();
  const std::size_t d = cfg.problem.dim();
  if (static_cast<int>(d) > cfg.max_dim) {
    throw std::invalid_argument("config: problem dimension " +
                                std::to_string(d) + " exceeds max_dim " +
                                std::to_string(cfg.max_dim));
  }
  if (cfg.rounds < 1) throw std::invalid_argument("config: rounds must be >= 1");
  if (cfg.clients_per_round < 1 || cfg.clients_per_round > m) {
    throw std::invalid_argument("config: clients_per_round must lie in [1, " +
                                std::to_string(m) + "]");
  }
  if (cfg.client_lrs.size() != static_cast<std::size_t>(m) ||
      cfg.client_steps.size() != static_cast<std::size_t>(m)) {
    throw std::invalid_argument("config: per-client settings must cover all clients");
  }
  if (!cfg.client_precond.empty() &&
      cfg.client_precond.size() != static_cast<std::size_t>(m)) {
    throw std::invalid_argument("config: precond list must cover all clients");
  }
  if (cfg.x0.size() != d) {
    throw std::invalid_argument("config: x0 dimension mismatch");
  }
  for (int i = 0; i < m; ++i) validate(cfg.client_opt_for(i));
  validate(cfg.server);
  validate(cfg.schedule);
  if (cfg.schedule.type == ScheduleType::InverseTime) {
    for (int i = 1; i < m; ++i) {
      if (cfg.client_lrs[static_cast<std::size_t>(i)] != cfg.client_lrs[0] ||
          cfg.client_steps[static_cast<std::size_t>(i)] != cfg.client_steps[0]) {
        throw std::invalid_argument(
            "config: inverse_time schedule requires uniform client lr/steps");
      }
    }
  }
}

/// Parses and validates a config document. Unknown keys anywhere are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  detail::expect_keys(
      j, "config",
      {"schema_version", "problem", "noise", "client_opt", "server_opt",
       "correction", "clients_per_round", "rounds", "master_seed",
       "lr_schedule", "x0", "record_iterates", "eval_objective", "max_dim"});
  const int version = detail::require(j, "config", "schema_version").get<int>();
  if (version != kConfigSchemaVersion) {
    throw std::invalid_argument("config: unsupported schema_version " +
                                std::to_string(version) + " (expected " +
                                std::to_string(kConfigSchemaVersion) + ")");
  }

  NoiseModel noise;
  if (j.contains("noise")) {
    detail::expect_keys(j["noise"], "noise", {"sigma", "batch"});
    noise.sigma = j["noise"].value("sigma", 0.0);
    noise.batch = j["noise"].value("batch", 0);
    validate(noise);
  }

  ExperimentConfig cfg;
  cfg.problem = detail::parse_problem(detail::require(j, "config", "problem"), noise);
  const int m = cfg.problem.num_clients();
  const std::size_t d = cfg.problem.dim();

  const auto& co = detail::require(j, "config", "client_opt");
  detail::expect_keys(co, "client_opt",
                      {"method", "lr", "local_steps", "beta1", "beta2",
                       "epsilon", "precond"});
  cfg.client_method =
      parse_client_optimizer(detail::require(co, "client_opt", "method").get<std::string>());
  cfg.client_lrs = detail::broadcast<double>(
      detail::require(co, "client_opt", "lr"), m, "client_opt.lr");
  cfg.client_steps = detail::broadcast<int>(
      detail::require(co, "client_opt", "local_steps"), m, "client_opt.local_steps");
  cfg.client_beta1 = co.value("beta1", 0.0);
  cfg.client_beta2 = co.value("beta2", 0.0);
  cfg.client_epsilon = co.value("epsilon", 1e-7);
  if (co.contains("precond")) {
    const auto& pj = co["precond"];
    if (!pj.is_array() || pj.empty()) {
      throw std::invalid_argument("config: client_opt.precond must be a nonempty array");
    }
    if (pj.front().is_array()) {
      cfg.client_precond = detail::broadcast<DiagMatrix>(pj, m, "client_opt.precond");
    } else {
      cfg.client_precond.assign(static_cast<std::size_t>(m), pj.get<DiagMatrix>());
    }
  }

  if (j.contains("server_opt")) {
    const auto& so = j["server_opt"];
    detail::expect_keys(so, "server_opt",
                        {"method", "lr", "epsilon", "beta1", "beta2"});
    cfg.server.method = parse_server_optimizer(
        detail::require(so, "server_opt", "method").get<std::string>());
    cfg.server.lr = so.value("lr", 1.0);
    cfg.server.epsilon = so.value("epsilon", 1e-7);
    cfg.server.beta1 = so.value("beta1", 0.0);
    cfg.server.beta2 = so.value("beta2", 0.0);
  }

  cfg.correction = j.contains("correction")
                       ? parse_correction_mode(j["correction"].get<std::string>())
                       : CorrectionMode::None;
  cfg.clients_per_round = j.value("clients_per_round", m);
  cfg.rounds = detail::require(j, "config", "rounds").get<int>();
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  cfg.schedule = j.contains("lr_schedule") ? detail::parse_schedule(j["lr_schedule"])
                                           : LrSchedule{};
  cfg.x0 = j.contains("x0") ? j["x0"].get<ParamVector>() : zeros(d);
  cfg.record_iterates = j.value("record_iterates", false);
  cfg.eval_objective = j.value("eval_objective", true);
  cfg.max_dim = j.value("max_dim", kDefaultMaxDim);
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) {
    throw std::runtime_error("config: cannot open '" + path + "'");
  }
  nlohmann::json j;
  try {
    file >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: invalid value in '" + path + "': " + e.what());
  }
}

}  // namespace fedsim
