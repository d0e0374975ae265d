// fedsim: run federated optimization experiments from JSON configs and
// query the closed-form analysis oracles. All failures exit nonzero with a
// one-line JSON error object on stderr.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/analysis.hpp"
#include "fedsim/config.hpp"
#include "fedsim/simulation.hpp"

namespace {

using nlohmann::json;
using namespace fedsim;

json optional_number(const std::optional<double>& v) {
  return v.has_value() ? json(*v) : json(nullptr);
}

/// One application of the round operator from x, drawing any sampling and
/// gradient noise from `rng`. Server state starts fresh, so for adaptive
/// servers this is the first-round operator.
ParamVector apply_round(const ExperimentConfig& cfg, const ParamVector& x0,
                        std::mt19937_64& rng) {
  const int m = cfg.problem.num_clients();
  const int s = cfg.clients_per_round;
  const LrPair lrs = lr_at(cfg.schedule, cfg.client_lrs[0], cfg.server.lr,
                           cfg.client_steps[0], 0);
  const double lr_mult = lrs.client_lr / cfg.client_lrs[0];

  std::vector<int> participants;
  std::vector<double> weights;
  if (s < m) {
    participants = sample_clients(m, s, rng);
    weights.assign(static_cast<std::size_t>(s), 1.0 / s);
  } else {
    for (int i = 0; i < m; ++i) participants.push_back(i);
    weights = cfg.problem.weights();
  }

  ParamVector x = x0;
  std::vector<ParamVector> deltas;
  std::vector<DiagMatrix> n_list;
  for (int id : participants) {
    auto grad = [&](const ParamVector& p, std::mt19937_64& r) {
      return cfg.problem.sample_gradient(id, p, r);
    };
    LocalRunResult res = run_local(cfg.client_opt_for(id, lr_mult), grad, x, rng);
    if (cfg.correction != CorrectionMode::None) {
      check_correction_matrix(res.n_matrix, "apply_round");
      res.delta = apply_local(res.delta, res.n_matrix);
    }
    deltas.push_back(std::move(res.delta));
    n_list.push_back(std::move(res.n_matrix));
  }
  ParamVector pseudo_grad = aggregate(deltas, weights);
  if (cfg.correction == CorrectionMode::Joint) {
    pseudo_grad = apply_global(pseudo_grad, aggregate_global_norm(n_list, weights));
  }
  ServerState st = make_server_state(cfg.server, cfg.problem.dim());
  server_step(cfg.server, st, x, pseudo_grad, lrs.server_lr);
  return x;
}

std::vector<ParamVector> parse_grid(const std::string& spec, std::size_t dim) {
  std::vector<std::vector<double>> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    double lo = 0.0, hi = 0.0;
    int n = 0;
    if (std::sscanf(part.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 1) {
      throw std::invalid_argument("landscape: bad grid segment '" + part +
                                  "' (want lo:hi:n with n >= 1)");
    }
    std::vector<double> axis;
    for (int i = 0; i < n; ++i) {
      axis.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    }
    axes.push_back(std::move(axis));
  }
  if (axes.size() != dim) {
    throw std::invalid_argument("landscape: grid has " +
                                std::to_string(axes.size()) +
                                " axes for a " + std::to_string(dim) +
                                "-dimensional problem");
  }
  std::size_t total = 1;
  for (const auto& a : axes) {
    total *= a.size();
    if (total > 1000000) {
      throw std::invalid_argument("landscape: grid exceeds 10^6 points");
    }
  }
  std::vector<ParamVector> grid;
  grid.reserve(total);
  ParamVector point(dim, 0.0);
  // Odometer enumeration, last axis fastest.
  std::vector<std::size_t> idx(dim, 0);
  for (std::size_t count = 0; count < total; ++count) {
    for (std::size_t d = 0; d < dim; ++d) point[d] = axes[d][idx[d]];
    grid.push_back(point);
    for (std::size_t d = dim; d-- > 0;) {
      if (++idx[d] < axes[d].size()) break;
      idx[d] = 0;
    }
  }
  return grid;
}

int cmd_run(const std::string& config_path, const std::string& out_path,
            const std::string& format_name, int threads) {
  const ExperimentConfig cfg = load_config(config_path);
  const MetricsFormat format = parse_metrics_format(format_name);
  const RunResult res = run_experiment(cfg, threads);
  write_metrics(res.records, out_path, format);
  json summary{{"rounds", cfg.rounds},
               {"out", out_path},
               {"final_x", res.final_x},
               {"final_loss", optional_number(res.records.back().loss)},
               {"final_grad_norm", optional_number(res.records.back().grad_norm)}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_fixed_point(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  if (!cfg.problem.quad.has_value()) {
    throw std::invalid_argument("fixed-point: requires a quadratic problem");
  }
  if (cfg.client_method != ClientOptimizer::Sgd &&
      cfg.client_method != ClientOptimizer::PrecondGd) {
    throw std::invalid_argument(
        "fixed-point: closed forms exist only for sgd / precond_gd clients");
  }
  const QuadraticFamily& fam = *cfg.problem.quad;
  const ParamVector x_star = global_min(fam);
  const ParamVector x_tilde = closed_form_fixed_point(fam, cfg.local_plan());
  std::vector<double> gammas = cfg.client_lrs;
  std::vector<int> taus = cfg.client_steps;
  const ParamVector x_limit =
      limiting_fixed_point(fam, gammas, taus, cfg.client_precond);
  json out{{"x_star", x_star},
           {"x_tilde", x_tilde},
           {"x_tilde_limit", x_limit},
           {"gap_x_tilde_to_x_star", norm(sub(x_tilde, x_star))},
           {"gap_limit_to_x_star", norm(sub(x_limit, x_star))},
           {"gap_x_tilde_to_limit", norm(sub(x_tilde, x_limit))}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_landscape(const std::string& config_path, const std::string& grid_spec,
                  const std::string& out_path, int trials) {
  const ExperimentConfig cfg = load_config(config_path);
  const std::vector<ParamVector> grid = parse_grid(grid_spec, cfg.problem.dim());
  auto op = [&](const ParamVector& x, std::mt19937_64& rng) {
    return apply_round(cfg, x, rng);
  };
  const auto rows = residual_landscape(op, grid, trials, cfg.master_seed);

  std::ostringstream body;
  for (std::size_t d = 0; d < cfg.problem.dim(); ++d) body << "x_" << d << ",";
  body << "residual\n";
  char buf[32];
  for (const auto& [point, residual] : rows) {
    for (double v : point) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      body << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", residual);
    body << buf << "\n";
  }
  std::ofstream file(out_path);
  if (!file || !(file << body.str()) || !file.flush()) {
    throw std::runtime_error("landscape: cannot write '" + out_path + "'");
  }
  json summary{{"points", rows.size()}, {"out", out_path}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_validate(const std::string& config_path, const std::string& what,
                 int client, int steps, int trials, double offset) {
  const ExperimentConfig cfg = load_config(config_path);
  const std::size_t d = cfg.problem.dim();
  if (client < 0 || client >= cfg.problem.num_clients()) {
    throw std::invalid_argument("validate: client index out of range");
  }
  const double sigma_total = cfg.problem.noise.sigma * std::sqrt(static_cast<double>(d));

  if (what == "h") {
    ParamVector y = cfg.x0;
    for (double& v : y) v += offset;
    const ContractionReport rep = estimate_contraction(
        cfg.client_opt_for(client), cfg.problem, client, steps, cfg.x0, y,
        trials, cfg.master_seed);
    json out{{"what", "h"},
             {"client", client},
             {"steps", rep.steps},
             {"trials", trials},
             {"h_hat", rep.h_hat},
             {"h_closed_form", optional_number(rep.h_closed_form)}};
    std::cout << out.dump() << "\n";
    return 0;
  }
  if (what == "q") {
    if (!(cfg.problem.noise.sigma > 0.0)) {
      throw std::invalid_argument(
          "validate: q estimation requires additive noise (noise.sigma > 0)");
    }
    const VarianceReport rep =
        estimate_variance(cfg.client_opt_for(client), cfg.problem, client,
                          steps, cfg.x0, sigma_total, trials, cfg.master_seed);
    json out{{"what", "q"},
             {"client", client},
             {"steps", rep.steps},
             {"trials", trials},
             {"q_hat", rep.q_hat},
             {"q_bound", rep.q_bound},
             {"sigma", rep.sigma}};
    std::cout << out.dump() << "\n";
    return 0;
  }
  if (what == "bound") {
    if (!cfg.problem.quad.has_value() ||
        cfg.client_method != ClientOptimizer::Sgd) {
      throw std::invalid_argument(
          "validate: the bound applies to sgd clients on quadratic problems");
    }
    const QuadraticFamily& fam = *cfg.problem.quad;
    BoundInputs in;
    in.w = cfg.problem.weights();
    for (int i = 0; i < cfg.problem.num_clients(); ++i) {
      const Matrix& h = fam.clients[static_cast<std::size_t>(i)].h;
      const double lmax = spectral_norm(h);
      const double mu = lmax / spd_condition(h);
      const std::size_t ii = static_cast<std::size_t>(i);
      in.h.push_back(sgd_contraction(cfg.client_lrs[ii], mu, cfg.client_steps[ii]));
      in.q.push_back(sgd_cumulative_variance(cfg.client_lrs[ii], cfg.client_steps[ii]));
    }
    in.sigma = sigma_total;
    in.rounds = cfg.rounds;
    const ParamVector x_tilde = closed_form_fixed_point(fam, cfg.local_plan());
    in.x0_err = norm_sq(sub(cfg.x0, x_tilde));
    double swh = 0.0;
    for (std::size_t i = 0; i < in.h.size(); ++i) swh += in.w[i] * in.h[i];
    json out{{"what", "bound"},
             {"rounds", in.rounds},
             {"swh", swh},
             {"sigma", in.sigma},
             {"x0_err", in.x0_err},
             {"h", in.h},
             {"q", in.q},
             {"bound", convergence_bound(in)}};
    std::cout << out.dump() << "\n";
    return 0;
  }
  throw std::invalid_argument("validate: --what must be h, q, or bound");
}

int fail(const std::string& stage, const std::exception& e) {
  json err{{"error", stage}, {"message", e.what()}};
  std::cerr << err.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated optimization simulator and analysis oracles"};
  app.require_subcommand(1);

  std::string config_path, out_path = "metrics.csv", format_name = "csv";
  std::string grid_spec, what;
  int threads = 1, client = 0, steps = 10, trials = 1000;
  double offset = 1.0;

  CLI::App* run = app.add_subcommand("run", "Run an experiment, write per-round metrics");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_path, "Metrics output path");
  run->add_option("--format", format_name, "csv or jsonl");
  run->add_option("--threads", threads, "Client worker threads");

  CLI::App* fp = app.add_subcommand("fixed-point",
                                    "Closed-form x*, x~ and limiting x~ with gaps");
  fp->add_option("config", config_path, "Experiment config (JSON)")->required();

  CLI::App* land = app.add_subcommand("landscape",
                                      "Residual |x - E[A(x)]| over a parameter grid");
  land->add_option("config", config_path, "Experiment config (JSON)")->required();
  land->add_option("--grid", grid_spec, "Per-axis lo:hi:n, comma separated")->required();
  land->add_option("--out", out_path, "Output CSV path")->required();
  land->add_option("--trials", trials, "Round applications per grid point");

  CLI::App* val = app.add_subcommand("validate",
                                     "Estimate contraction/variance or evaluate the bound");
  val->add_option("config", config_path, "Experiment config (JSON)")->required();
  val->add_option("--what", what, "h, q, or bound")->required();
  val->add_option("--client", client, "Client index");
  val->add_option("--steps", steps, "Local steps k");
  val->add_option("--trials", trials, "Monte Carlo trials");
  val->add_option("--offset", offset, "Second start point offset for h");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    nlohmann::json err{{"error", "cli"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_path, format_name, threads);
    if (fp->parsed()) return cmd_fixed_point(config_path);
    if (land->parsed()) return cmd_landscape(config_path, grid_spec, out_path, trials);
    if (val->parsed()) return cmd_validate(config_path, what, client, steps, trials, offset);
  } catch (const std::exception& e) {
    std::string stage = "run";
    if (fp->parsed()) stage = "fixed-point";
    if (land->parsed()) stage = "landscape";
    if (val->parsed()) stage = "validate";
    return fail(stage, e);
  }
  return 1;
}
