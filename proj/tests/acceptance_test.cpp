// Acceptance suite: one check per shipped claim, each printed as a single
// [PASS]/[FAIL] line with the measured numbers. The process exit code is the
// number of failed checks, so `ctest` reports the suite red if any claim
// regresses. Tolerances are fixed here and are not tuned to the build.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "fedsim/analysis.hpp"
#include "fedsim/simulation.hpp"
#include "helpers.hpp"

using namespace fedsim;
using fedsim::testing::family_1d;
using fedsim::testing::family_2d;
using fedsim::testing::family_bound;
using fedsim::testing::family_iso;
using fedsim::testing::family_stoch;
using fedsim::testing::precond_2d;

namespace {

int g_failures = 0;

void report(const char* id, bool pass, const std::string& detail) {
  std::printf("[%s] %s %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  if (!pass) ++g_failures;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return std::string(buf);
}

ExperimentConfig base_quad(QuadraticFamily fam, double lr, int steps,
                           int rounds, NoiseModel noise = {}) {
  ExperimentConfig cfg;
  cfg.problem = FederatedProblem::quadratic(std::move(fam), noise);
  cfg.client_method = ClientOptimizer::Sgd;
  const int m = cfg.problem.num_clients();
  cfg.client_lrs.assign(static_cast<std::size_t>(m), lr);
  cfg.client_steps.assign(static_cast<std::size_t>(m), steps);
  cfg.server.method = ServerOptimizer::Gd;
  cfg.server.lr = 1.0;
  cfg.clients_per_round = m;
  cfg.rounds = rounds;
  cfg.master_seed = 11;
  cfg.x0 = zeros(cfg.problem.dim());
  return cfg;
}

// --- 1. Simulated runs land on the closed-form fixed point. -----------------

void criterion_1() {
  const auto t0 = Clock::now();

  const ExperimentConfig c1 = base_quad(family_1d(), 0.1, 2, 500);
  const RunResult r1 = run_experiment(c1);
  const ParamVector xt1 =
      closed_form_fixed_point(family_1d(), uniform_plan(2, 0.1, 2));
  const double gap1 = norm(sub(r1.final_x, xt1));
  const bool frozen1 = std::abs(xt1[0] - 1.6545454545454545) < 1e-14;

  ExperimentConfig c2 = base_quad(family_2d(), 0.1, 5, 500);
  c2.client_method = ClientOptimizer::PrecondGd;
  c2.client_precond = precond_2d();
  const RunResult r2 = run_experiment(c2);
  const ParamVector xt2 =
      closed_form_fixed_point(family_2d(), uniform_plan(2, 0.1, 5, precond_2d()));
  const double gap2 = norm(sub(r2.final_x, xt2));
  const bool frozen2 = std::abs(xt2[0] - (-0.00192673906154046)) < 1e-13 &&
                       std::abs(xt2[1] - 0.5077429224430219) < 1e-12;

  const double dt = seconds_since(t0);
  report("C1", gap1 < 1e-6 && gap2 < 1e-6 && frozen1 && frozen2 && dt < 1.0,
         fmt("fixed-point gaps 1d=%.3e 2d=%.3e (tol 1e-6), %.2fs (limit 1s)",
             gap1, gap2, dt));
}

// --- 2. Non-vanishing bias survives lr decay; local correction removes it. --

void criterion_2() {
  // P_i = H_i^{-1} makes eta*P_i*H_i identical across clients, so the
  // uncorrected fixed point sits at the unweighted midpoint 1.5 at every lr,
  // and distance to x* = 5/3 plateaus at 1/6 through both decays.
  ExperimentConfig plain = base_quad(family_1d(), 0.1, 2, 500);
  plain.client_method = ClientOptimizer::PrecondGd;
  plain.client_precond = {{1.0}, {0.5}};
  plain.schedule.type = ScheduleType::StepDecay;
  plain.schedule.decay_rounds = {200, 400};
  plain.schedule.factor = 10.0;
  const RunResult rp = run_experiment(plain);
  const double limit_gap = 1.0 / 6.0;
  bool plateau = true;
  double worst = 0.0;
  for (int round : {199, 399, 499}) {
    const double dist = *rp.records[static_cast<std::size_t>(round)].dist_to_opt;
    worst = std::max(worst, std::abs(dist - limit_gap) / limit_gap);
    plateau = plateau && std::abs(dist - limit_gap) <= 0.05 * limit_gap;
  }

  ExperimentConfig corrected = plain;
  corrected.client_steps = {1, 1};
  corrected.correction = CorrectionMode::Local;
  const RunResult rc = run_experiment(corrected);
  const double corrected_dist = *rc.records.back().dist_to_opt;

  report("C2", plateau && corrected_dist < 1e-6,
         fmt("uncorrected plateau within %.2f%% of 1/6 (tol 5%%), corrected "
             "dist %.3e (tol 1e-6)",
             100.0 * worst, corrected_dist));
}

// --- 3. Without fixed preconditioners the bias vanishes linearly in lr. -----

void criterion_3() {
  const ParamVector xs = global_min(family_1d());
  auto gap = [&](double eta) {
    const ParamVector xt =
        closed_form_fixed_point(family_1d(), uniform_plan(2, eta, 4));
    return norm(sub(xt, xs));
  };
  const double g1 = gap(0.01), g2 = gap(0.005), g3 = gap(0.0025);
  const double ratio1 = g1 / g2, ratio2 = g2 / g3;
  const bool frozen = std::abs(g1 - 3.349800370251e-03) < 1e-14 &&
                      std::abs(g2 - 1.670808705144e-03) < 1e-14;
  report("C3", ratio1 >= 1.9 && ratio2 >= 1.9 && frozen,
         fmt("halving lr shrinks |x~ - x*| by %.4f then %.4f (need >= 1.9)",
             ratio1, ratio2));
}

// --- 4. Estimated contraction / variance match their closed forms. ----------

void criterion_4() {
  ClientOptConfig sgd;
  sgd.method = ClientOptimizer::Sgd;
  sgd.lr = 0.1;
  sgd.local_steps = 1;

  const FederatedProblem iso = FederatedProblem::quadratic(family_iso());
  const FederatedProblem pair = FederatedProblem::quadratic(family_bound());
  bool h_ok = true;
  double h_worst = 0.0;
  for (int k : {1, 5, 10}) {
    const double e1 = std::abs(
        estimate_contraction(sgd, iso, 0, k, {2.0}, {-1.0}, 3, 5).h_hat -
        std::pow(0.9, 2 * k));
    const double e2 = std::abs(
        estimate_contraction(sgd, pair, 0, k, {2.0, 1.0}, {-1.0, 0.5}, 3, 5)
            .h_hat -
        std::pow(1.0 - 0.1 * 0.8, 2 * k));
    h_worst = std::max({h_worst, e1, e2});
    h_ok = h_ok && e1 < 1e-10 && e2 < 1e-10;
  }

  NoiseModel noise;
  noise.sigma = 1.0;
  const FederatedProblem stoch = FederatedProblem::quadratic(family_iso(), noise);
  const int trials = 10000;
  const VarianceReport v10 =
      estimate_variance(sgd, stoch, 0, 10, {1.0}, 1.0, trials, 21);
  const VarianceReport v1 =
      estimate_variance(sgd, stoch, 0, 1, {1.0}, 1.0, trials, 22);
  const double se1 = 0.01 * std::sqrt(2.0 / (trials - 1));
  const bool q_ok = v10.q_hat <= 1.05 * v10.q_bound &&
                    std::abs(v1.q_hat - 0.01) <= 3.0 * se1;

  report("C4", h_ok && q_ok,
         fmt("worst |h_hat - closed| %.2e (tol 1e-10); q10 %.4f <= 0.105, "
             "|q1 - 0.01| = %.2e (tol 3SE)",
             h_worst, v10.q_hat, std::abs(v1.q_hat - 0.01)));
}

// --- 5. The explicit convergence bound holds, deterministic and noisy. ------

void criterion_5() {
  const auto t0 = Clock::now();

  // Deterministic: isotropic two-client family, exact h_i, error per round.
  ExperimentConfig det = base_quad(family_bound(), 0.1, 2, 50);
  det.record_iterates = true;
  det.eval_objective = false;
  const RunResult rd = run_experiment(det);
  const ParamVector xt =
      closed_form_fixed_point(family_bound(), uniform_plan(2, 0.1, 2));
  BoundInputs in;
  in.h = {sgd_contraction(0.1, 0.8, 2), sgd_contraction(0.1, 1.2, 2)};
  in.q = {0.0, 0.0};
  in.w = {0.5, 0.5};
  in.sigma = 0.0;
  in.x0_err = norm_sq(sub(det.x0, xt));
  bool det_ok = true;
  double det_margin = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= det.rounds; ++t) {
    in.rounds = t;
    const double err =
        norm_sq(sub(rd.round_iterates[static_cast<std::size_t>(t - 1)], xt));
    const double bound = convergence_bound(in);
    det_ok = det_ok && err <= bound;
    det_margin = std::min(det_margin, bound / std::max(err, 1e-300));
  }

  // Stochastic: homogeneous 1D pair (x~ = x* = 1/2), inverse-time server lr,
  // mean squared error over 1000 seeds against the bound with 10% slack.
  NoiseModel noise;
  noise.sigma = 1.0;
  const int kSeeds = 1000, kRounds = 40;
  ExperimentConfig sto = base_quad(family_stoch(), 0.1, 2, kRounds, noise);
  sto.eval_objective = false;
  sto.schedule.type = ScheduleType::InverseTime;
  sto.schedule.beta = 6.0;
  sto.schedule.mu = 1.0;
  double mean_sq = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    sto.master_seed = static_cast<std::uint64_t>(s);
    const RunResult r = run_experiment(sto);
    const double err = r.final_x[0] - 0.5;
    mean_sq += err * err / kSeeds;
  }
  BoundInputs sin;
  sin.h = {sgd_contraction(0.1, 1.0, 2), sgd_contraction(0.1, 1.0, 2)};
  sin.q = {sgd_cumulative_variance(0.1, 2), sgd_cumulative_variance(0.1, 2)};
  sin.w = {0.5, 0.5};
  sin.sigma = 1.0;  // sigma * sqrt(d), d = 1
  sin.x0_err = 0.25;
  sin.rounds = kRounds;
  const double sbound = convergence_bound(sin);
  const bool sto_ok = mean_sq <= 1.1 * sbound;

  const double dt = seconds_since(t0);
  report("C5", det_ok && sto_ok && dt < 30.0,
         fmt("deterministic err <= bound all 50 rounds (min slack x%.1f); "
             "stochastic E|x-x~|^2 = %.4f vs bound %.4f",
             det_margin, mean_sq, sbound) +
             fmt("; %.1fs (limit 30s)", dt));
}

// --- 6. Prescribed corrected lr attains the horizon-rate scaling. -----------

void criterion_6() {
  const auto t0 = Clock::now();
  const int tau = 4;
  const LogRegTask task = make_logreg(11, 4, 50, 5, 0.5, 1e-3);
  const std::size_t d = task.dim();

  // Constants fed to the prescription, estimated from the task itself.
  // L: max client smoothness = 0.25 lambda_max(second moment) + l2.
  double big_l = 0.0;
  for (int i = 0; i < task.num_clients(); ++i) {
    const auto& cl = task.clients[static_cast<std::size_t>(i)];
    Matrix moment = Matrix::identity(d);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (const ParamVector& f : cl.features) acc += f[r] * f[c];
        moment.at(r, c) = acc / static_cast<double>(cl.features.size());
      }
    }
    big_l = std::max(big_l, 0.25 * spectral_norm(moment) + task.l2);
  }
  // D: initial gap bound F(x0) - F* <= F(0) (the objective is nonnegative).
  const double big_d = logreg_objective(task, zeros(d));

  // G and Lambda: gradient-norm and normalized inverse-correction-mass
  // bounds, measured along a short probe run at the conservative cap lr
  // 1/(tau L) and inflated 2x.
  FederatedProblem prob = FederatedProblem::logistic(task);
  auto corrected_cfg = [&](double eta, double alpha, int rounds) {
    ExperimentConfig cfg;
    cfg.problem = prob;
    cfg.client_method = ClientOptimizer::AdaGrad;
    cfg.client_epsilon = 1e-7;
    cfg.client_lrs.assign(4, eta);
    cfg.client_steps.assign(4, tau);
    cfg.correction = CorrectionMode::Local;
    cfg.server.method = ServerOptimizer::Gd;
    cfg.server.lr = alpha;
    cfg.clients_per_round = 4;
    cfg.rounds = rounds;
    cfg.master_seed = 3;
    cfg.x0 = zeros(d);
    return cfg;
  };
  double big_g = 0.0, lambda = 0.0;
  {
    const double probe_eta = 1.0 / (tau * big_l);
    ParamVector x = zeros(d);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 25; ++t) {
      ParamVector agg = zeros(d);
      for (int i = 0; i < task.num_clients(); ++i) {
        big_g = std::max(big_g, norm(logreg_mean_grad(task, i, x)));
        ClientOptConfig copt;
        copt.method = ClientOptimizer::AdaGrad;
        copt.lr = probe_eta;
        copt.local_steps = tau;
        auto grad = [&](const ParamVector& p, std::mt19937_64& r) {
          return prob.sample_gradient(i, p, r);
        };
        const LocalRunResult res = run_local(copt, grad, x, rng);
        for (double nj : res.n_matrix) {
          lambda = std::max(lambda, probe_eta * tau / nj);
        }
        axpy(agg, 0.25, apply_local(res.delta, res.n_matrix));
      }
      axpy(x, -probe_eta * tau, agg);
    }
    big_g *= 2.0;
    lambda *= 2.0;
  }

  auto min_grad_sq = [&](int rounds) {
    const LrPair lr =
        prescribe_corrected_lr(tau, big_l, lambda, big_g, big_d, rounds);
    const RunResult res =
        run_experiment(corrected_cfg(lr.client_lr, lr.server_lr, rounds));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : res.records) {
      best = std::min(best, *rec.grad_norm * *rec.grad_norm);
    }
    return best;
  };

  const int kHorizon = 30;
  const double at_t = min_grad_sq(kHorizon);
  const double at_8t = min_grad_sq(8 * kHorizon);
  const double ratio = at_8t / at_t;
  const double tol = std::pow(1.0 / 8.0, 2.0 / 3.0) * 1.5;
  const double dt = seconds_since(t0);
  report("C6", ratio <= tol && dt < 60.0,
         fmt("min |grad F|^2 ratio between horizons %.0f and 8x: %.4f",
             double(kHorizon), ratio) +
             fmt(" (tol %.4f); %.1fs (limit 60s)", tol, dt));
}

// --- 7. Adaptive client optimizers contract faster on the skewed task. ------

void criterion_7() {
  // Mini-batch gradients with the contraction of EXPECTED iterates (trial
  // averages under common random numbers), mirroring the two-trajectory
  // mini-batch experiment this claim comes from.  The expectation matters
  // for Adam: deterministic full-batch runs leave its momentum oscillation
  // phase-locked at short horizons, while averaging over mini-batch draws
  // reveals the contraction of the mean trajectory.  Each optimizer gets its
  // best learning rate from the same fixed small grid.
  const std::vector<double> grid = {0.5, 0.2, 0.1, 0.05, 0.02, 0.002};
  const int k = 10;
  const int trials = 50;
  int ada_wins = 0, adam_wins = 0;
  for (int s = 1; s <= 5; ++s) {
    const LogRegTask task =
        make_logreg(static_cast<std::uint64_t>(100 + s), 4, 40, 8, 0.5, 1e-3);
    NoiseModel noise;
    noise.batch = 8;
    const FederatedProblem prob = FederatedProblem::logistic(task, noise);
    const ParamVector x = zeros(task.dim());
    ParamVector y = x;
    for (double& v : y) v += 1.0;

    auto best_h = [&](ClientOptimizer method, double b1, double b2) {
      double best = std::numeric_limits<double>::infinity();
      for (double lr : grid) {
        ClientOptConfig o;
        o.method = method;
        o.lr = lr;
        o.local_steps = 1;
        o.beta1 = b1;
        o.beta2 = b2;
        o.epsilon = 1e-7;
        best = std::min(
            best, estimate_contraction(o, prob, 0, k, x, y, trials, 7).h_hat);
      }
      return best;
    };
    const double h_sgd = best_h(ClientOptimizer::Sgd, 0.0, 0.0);
    const double h_ada = best_h(ClientOptimizer::AdaGrad, 0.0, 0.0);
    const double h_adam = best_h(ClientOptimizer::Adam, 0.9, 0.999);
    if (h_ada < h_sgd) ++ada_wins;
    if (h_adam < h_sgd) ++adam_wins;
  }
  report("C7", ada_wins >= 4 && adam_wins >= 4,
         fmt("best-lr h at k=10: adagrad < sgd in %.0f/5, adam < sgd in %.0f/5 "
             "(need >= 4)",
             double(ada_wins), double(adam_wins)));
}

// --- 8. Exact identities of the round protocol. -----------------------------

void criterion_8() {
  // (a) Homogeneous N_i: joint correction reproduces the uncorrected run
  // bit-for-bit (lr and weights are powers of two, so nothing rounds).
  ExperimentConfig none = base_quad(family_1d(), 0.25, 2, 50);
  ExperimentConfig joint = none;
  joint.correction = CorrectionMode::Joint;
  const RunResult rn = run_experiment(none);
  const RunResult rj = run_experiment(joint);
  bool bitwise = rn.final_x == rj.final_x;
  for (std::size_t i = 0; i < rn.records.size() && bitwise; ++i) {
    bitwise = rn.records[i].loss == rj.records[i].loss &&
              rn.records[i].dist_to_opt == rj.records[i].dist_to_opt;
  }

  // (b) Server-optimizer swap: GD and Adam servers settle on the same point.
  // The Adam server lr is step-decayed so its updates die out at x~.
  const ExperimentConfig gd_cfg = base_quad(family_1d(), 0.1, 2, 900);
  ExperimentConfig adam_cfg = gd_cfg;
  adam_cfg.server.method = ServerOptimizer::Adam;
  adam_cfg.server.lr = 0.5;
  adam_cfg.server.beta1 = 0.9;
  adam_cfg.server.beta2 = 0.99;
  adam_cfg.server.epsilon = 1e-7;
  adam_cfg.schedule.type = ScheduleType::StepDecay;
  adam_cfg.schedule.decay_rounds = {100, 200, 300, 400, 500, 600, 700, 800};
  adam_cfg.schedule.factor = 1.0;  // client lr untouched: same fixed point
  adam_cfg.schedule.server_factor = 10.0;
  const RunResult rg = run_experiment(gd_cfg);
  const RunResult ra = run_experiment(adam_cfg);
  const double swap_gap = norm(sub(rg.final_x, ra.final_x));

  // (c) tau = 1: the fixed point is the global minimizer exactly.
  const ParamVector xt1 =
      closed_form_fixed_point(family_1d(), uniform_plan(2, 0.1, 1));
  const ParamVector xs = global_min(family_1d());
  const double tau1_gap = norm(sub(xt1, xs));
  const ExperimentConfig tau1 = base_quad(family_1d(), 0.1, 1, 500);
  const double tau1_sim = *run_experiment(tau1).records.back().dist_to_opt;

  report("C8",
         bitwise && swap_gap < 1e-6 && tau1_gap < 1e-12 && tau1_sim < 1e-6,
         fmt("joint==none bitwise %.0f; server-swap gap %.2e (tol 1e-6); ",
             bitwise ? 1.0 : 0.0, swap_gap) +
             fmt("tau=1 |x~-x*| %.1e (tol 1e-12), sim %.1e (tol 1e-6)",
                 tau1_gap, tau1_sim));
}

// --- 9. Byte-identical metrics across reruns and thread counts. -------------

void criterion_9() {
  using fedsim::testing::config_path;
  using fedsim::testing::run_cli;
  using fedsim::testing::slurp;
  const std::string cfg = config_path("quad1d_stoch.json");
  const int rc1 =
      run_cli("run " + cfg + " --out acc_det_a.csv", "acc_a").exit_code;
  const int rc2 =
      run_cli("run " + cfg + " --out acc_det_b.csv", "acc_b").exit_code;
  const int rc3 =
      run_cli("run " + cfg + " --out acc_det_c.csv --threads 4", "acc_c")
          .exit_code;
  const std::string a = slurp("acc_det_a.csv");
  const bool ok = rc1 == 0 && rc2 == 0 && rc3 == 0 && !a.empty() &&
                  a == slurp("acc_det_b.csv") && a == slurp("acc_det_c.csv");
  std::remove("acc_det_a.csv");
  std::remove("acc_det_b.csv");
  std::remove("acc_det_c.csv");
  report("C9", ok,
         "rerun and --threads 4 metrics byte-identical with gradient noise on");
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  std::printf("%d/9 criteria passed\n", 9 - g_failures);
  return g_failures;
}
