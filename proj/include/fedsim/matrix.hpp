#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/vec.hpp"

namespace fedsim {

/// Dense square matrix, row-major. Problem dimensions are desk-scale (d
/// capped by config), so direct dense algorithms are used throughout.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> a;  // n*n, row-major

  Matrix() = default;
  explicit Matrix(std::size_t dim) : n(dim), a(dim * dim, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }

  static Matrix identity(std::size_t dim) {
    Matrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) {
        throw std::invalid_argument("Matrix::from_rows: matrix must be square");
      }
      for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j];
    }
    return m;
  }
};

inline ParamVector matvec(const Matrix& m, const ParamVector& v) {
  if (v.size() != m.n) throw std::invalid_argument("matvec: dimension mismatch");
  ParamVector out(m.n, 0.0);
  for (std::size_t i = 0; i < m.n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.n; ++j) s += m.at(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

inline Matrix matmul(const Matrix& x, const Matrix& y) {
  if (x.n != y.n) throw std::invalid_argument("matmul: dimension mismatch");
  Matrix out(x.n);
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t k = 0; k < x.n; ++k) {
      const double xi = x.at(i, k);
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < x.n; ++j) out.at(i, j) += xi * y.at(k, j);
    }
  }
  return out;
}

/// Repeated multiplication; exponents stay small (local steps <= 1e3).
inline Matrix mat_pow(const Matrix& m, int p) {
  if (p < 0) throw std::invalid_argument("mat_pow: negative exponent");
  Matrix out = Matrix::identity(m.n);
  for (int i = 0; i < p; ++i) out = matmul(out, m);
  return out;
}

inline Matrix add_scaled(Matrix x, double s, const Matrix& y) {
  if (x.n != y.n) throw std::invalid_argument("add_scaled: dimension mismatch");
  for (std::size_t i = 0; i < x.a.size(); ++i) x.a[i] += s * y.a[i];
  return x;
}

/// diag(d) * m, i.e. row i scaled by d[i].
inline Matrix diag_times(const DiagMatrix& d, const Matrix& m) {
  if (d.size() != m.n) throw std::invalid_argument("diag_times: dimension mismatch");
  Matrix out = m;
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) out.at(i, j) *= d[i];
  }
  return out;
}

inline bool is_symmetric(const Matrix& m, double tol) {
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = i + 1; j < m.n; ++j) {
      if (std::abs(m.at(i, j) - m.at(j, i)) > tol) return false;
    }
  }
  return true;
}

/// True iff the Cholesky factorization succeeds, i.e. m is positive definite
/// (assumes symmetry was checked separately).
inline bool is_positive_definite(const Matrix& m) {
  Matrix l(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = m.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (s <= 0.0) return false;
        l.at(i, i) = std::sqrt(s);
      } else {
        l.at(i, j) = s / l.at(j, j);
      }
    }
  }
  return true;
}

/// LU factorization with partial pivoting, reusable for repeated solves.
struct LuFactor {
  Matrix lu;
  std::vector<std::size_t> perm;

  explicit LuFactor(const Matrix& m) : lu(m), perm(m.n) {
    const std::size_t n = m.n;
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t piv = col;
      double best = std::abs(lu.at(col, col));
      for (std::size_t r = col + 1; r < n; ++r) {
        const double cand = std::abs(lu.at(r, col));
        if (cand > best) {
          best = cand;
          piv = r;
        }
      }
      if (best < 1e-300) throw std::runtime_error("LuFactor: singular matrix");
      if (piv != col) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu.at(col, j), lu.at(piv, j));
        std::swap(perm[col], perm[piv]);
      }
      for (std::size_t r = col + 1; r < n; ++r) {
        const double f = lu.at(r, col) / lu.at(col, col);
        lu.at(r, col) = f;
        for (std::size_t j = col + 1; j < n; ++j) lu.at(r, j) -= f * lu.at(col, j);
      }
    }
  }

  ParamVector solve(const ParamVector& b) const {
    const std::size_t n = lu.n;
    if (b.size() != n) throw std::invalid_argument("LuFactor::solve: dimension mismatch");
    ParamVector y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[perm[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu.at(i, j) * y[j];
      y[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t j = ii + 1; j < n; ++j) s -= lu.at(ii, j) * y[j];
      y[ii] = s / lu.at(ii, ii);
    }
    return y;
  }
};

inline ParamVector solve(const Matrix& m, const ParamVector& b) {
  return LuFactor(m).solve(b);
}

/// Largest singular value via power iteration on m^T m. Deterministic start;
/// relative tolerance on the Rayleigh estimate.
inline double spectral_norm(const Matrix& m, double tol = 1e-8,
                            int max_iters = 100000) {
  const std::size_t n = m.n;
  if (n == 0) return 0.0;
  ParamVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
  double vn = norm(v);
  for (double& x : v) x /= vn;
  double est = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    ParamVector av = matvec(m, v);
    // w = m^T (m v)
    ParamVector w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) w[j] += m.at(i, j) * av[i];
    }
    const double wn = norm(w);
    if (wn == 0.0) return 0.0;
    const double next = std::sqrt(wn);  // ||w|| approximates sigma_max^2
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
    if (std::abs(next - est) <= tol * std::max(1.0, next)) return next;
    est = next;
  }
  return est;
}

/// Condition number estimate for a symmetric positive definite matrix:
/// lambda_max by power iteration, lambda_min by inverse iteration.
inline double spd_condition(const Matrix& m, int iters = 200) {
  const std::size_t n = m.n;
  if (n == 0) return 1.0;
  ParamVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
  double lam_max = 0.0;
  for (int it = 0; it < iters; ++it) {
    ParamVector w = matvec(m, v);
    const double wn = norm(w);
    if (wn == 0.0) return std::numeric_limits<double>::infinity();
    lam_max = wn;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
  }
  LuFactor f(m);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i);
  double lam_inv = 0.0;
  for (int it = 0; it < iters; ++it) {
    ParamVector w = f.solve(v);
    const double wn = norm(w);
    if (wn == 0.0) break;
    lam_inv = wn;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
  }
  if (lam_inv == 0.0) return std::numeric_limits<double>::infinity();
  return lam_max * lam_inv;  // lambda_max / lambda_min
}

}  // namespace fedsim
