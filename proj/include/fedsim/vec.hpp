#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

/// Dense d-dimensional parameter / gradient vector.
using ParamVector = std::vector<double>;

/// Diagonal positive matrix stored as its diagonal. Houses preconditioners P,
/// per-step B_k, and the correction matrices M, N, N_s.
using DiagMatrix = std::vector<double>;

inline ParamVector zeros(std::size_t d) { return ParamVector(d, 0.0); }

inline DiagMatrix constant_diag(std::size_t d, double value) {
  return DiagMatrix(d, value);
}

inline void check_same_dim(const ParamVector& a, const ParamVector& b,
                           const char* where) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

inline bool all_finite(const ParamVector& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const ParamVector& a) { return dot(a, a); }

inline double norm(const ParamVector& a) { return std::sqrt(norm_sq(a)); }

inline ParamVector add(ParamVector a, const ParamVector& b) {
  check_same_dim(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline ParamVector sub(ParamVector a, const ParamVector& b) {
  check_same_dim(a, b, "sub");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline ParamVector scaled(ParamVector a, double s) {
  for (double& x : a) x *= s;
  return a;
}

/// a += s * b
inline void axpy(ParamVector& a, double s, const ParamVector& b) {
  check_same_dim(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

/// Elementwise product, used for applying a DiagMatrix to a vector.
inline ParamVector diag_apply(const DiagMatrix& d, const ParamVector& v) {
  check_same_dim(d, v, "diag_apply");
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = d[i] * v[i];
  return out;
}

}  // namespace fedsim
