#pragma once

// Shared fixtures: the documented quadratic families whose closed-form
// values are frozen into the tests, plus a tiny process-spawn helper for
// exercising the CLI binary.

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/problem.hpp"
#include "fedsim/quadratic.hpp"

namespace fedsim::testing {

/// Two 1D clients, H = (1, 2), e = (1, 4), w = (1/2, 1/2).
/// x* = 5/3; SGD eta = 0.1, tau = 2 gives x~ = 0.455/0.275 = 1.6545454...
inline QuadraticFamily family_1d() {
  QuadraticFamily fam;
  fam.clients.push_back({Matrix::from_rows({{1.0}}), {1.0}, 0.0, 0.5});
  fam.clients.push_back({Matrix::from_rows({{2.0}}), {4.0}, 0.0, 0.5});
  return fam;
}

/// Two 2D clients with non-commuting Hessians, w = (0.6, 0.4).
inline QuadraticFamily family_2d() {
  QuadraticFamily fam;
  fam.clients.push_back(
      {Matrix::from_rows({{3.0, 0.5}, {0.5, 1.5}}), {1.0, 0.5}, 0.0, 0.6});
  fam.clients.push_back(
      {Matrix::from_rows({{1.0, -0.2}, {-0.2, 2.5}}), {-0.5, 2.0}, 0.0, 0.4});
  return fam;
}

/// Heterogeneous diagonal preconditioners paired with family_2d.
inline std::vector<DiagMatrix> precond_2d() {
  return {{1.0 / 3.0, 2.0 / 3.0}, {1.0, 0.4}};
}

/// Isotropic pair H = 0.8 I, 1.2 I in d = 2 with x1* = (1, -0.5),
/// x2* = (-1, 2); closed-form h_i available, so the convergence bound is
/// checkable without estimation error.
inline QuadraticFamily family_bound() {
  QuadraticFamily fam;
  fam.clients.push_back(
      {Matrix::from_rows({{0.8, 0.0}, {0.0, 0.8}}), {0.8, -0.4}, 0.0, 0.5});
  fam.clients.push_back(
      {Matrix::from_rows({{1.2, 0.0}, {0.0, 1.2}}), {-1.2, 2.4}, 0.0, 0.5});
  return fam;
}

/// Homogeneous-curvature 1D pair (H = 1, 1), x_i* = (0, 1): x~ = x* = 1/2
/// for any eta/tau, which isolates the variance term of the bound.
inline QuadraticFamily family_stoch() {
  QuadraticFamily fam;
  fam.clients.push_back({Matrix::from_rows({{1.0}}), {0.0}, 0.0, 0.5});
  fam.clients.push_back({Matrix::from_rows({{1.0}}), {1.0}, 0.0, 0.5});
  return fam;
}

/// Single client H = [[1]], e = [1]: the isotropic case where the SGD
/// contraction constant has the exact closed form (1 - eta)^{2k}.
inline QuadraticFamily family_iso() {
  QuadraticFamily fam;
  fam.clients.push_back({Matrix::from_rows({{1.0}}), {1.0}, 0.0, 1.0});
  return fam;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Runs the CLI binary with `args`, capturing stdout/stderr via temp files.
/// `tag` keeps concurrent capture files distinct.
inline CliResult run_cli(const std::string& args, const std::string& tag) {
  const std::string out_path = "cli_capture_" + tag + ".out";
  const std::string err_path = "cli_capture_" + tag + ".err";
  const std::string cmd = std::string(FEDSIM_CLI_PATH) + " " + args + " > " +
                          out_path + " 2> " + err_path;
  const int rc = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = (rc < 0) ? rc : WEXITSTATUS(rc);
  res.out = slurp(out_path);
  res.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return res;
}

inline std::string config_path(const std::string& name) {
  return std::string(FEDSIM_CONFIG_DIR) + "/" + name;
}

}  // namespace fedsim::testing
