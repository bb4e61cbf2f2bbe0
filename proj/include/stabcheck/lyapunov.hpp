#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "stabcheck/error.hpp"
#include "stabcheck/matrix.hpp"

namespace stabcheck {

/// Quadratic candidate V(x) = xᵀ P x.
struct QuadraticForm {
  Matrix P;
};

/// Lyapunov function observed through two diagram probes: `v` is V at the
/// later state, `v_prev` at the earlier one.
struct MonitorSignals {
  std::string v;
  std::string v_prev;
};

using LyapunovSpec = std::variant<QuadraticForm, MonitorSignals>;

using StepMap = std::function<Vector(const Vector&)>;

struct LyapunovSolution {
  Matrix P;
  /// ‖AᵀPA − P + Q‖_∞ of the unsymmetrized solution.
  double residual = 0.0;
};

inline bool is_symmetric(const Matrix& m, double tol = 1e-12) {
  if (!m.is_square()) return false;
  const double scale = std::max(1.0, m.max_abs());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol * scale) return false;
  return true;
}

/// True iff every leading principal minor is positive, decided by an
/// unpivoted Cholesky factorization. Rejects non-symmetric input.
inline bool is_positive_definite(const Matrix& p) {
  if (!p.is_square()) throw Error(ErrorKind::Dimension, "positive-definiteness needs a square matrix");
  if (!is_symmetric(p)) throw Error(ErrorKind::InvalidArgument, "matrix is not symmetric");
  const std::size_t n = p.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = p(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = p(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

inline double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) s += std::abs(m(r, c));
    best = std::max(best, s);
  }
  return best;
}

/// Solves AᵀPA − P = −Q through the vectorized system
/// (Aᵀ ⊗ Aᵀ − I) vec(P) = −vec(Q), then symmetrizes.
inline LyapunovSolution solve_discrete_lyapunov(const Matrix& a, const Matrix& q) {
  if (!a.is_square()) throw Error(ErrorKind::Dimension, "closed-loop matrix must be square");
  if (q.rows() != a.rows() || q.cols() != a.cols()) throw Error(ErrorKind::Dimension, "Q must match A");
  if (!is_symmetric(q) || !is_positive_definite(q)) throw Error(ErrorKind::InvalidArgument, "Q must be symmetric positive definite");

  const std::size_t n = a.rows();
  const Matrix at = a.transpose();
  const Matrix m = kron(at, at) - Matrix::identity(n * n);
  Vector rhs(n * n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < n; ++r) rhs[c * n + r] = -q(r, c);

  const auto sol = solve_linear(m, rhs, 1e-10);
  if (!sol) throw Error(ErrorKind::Marginal, "marginal/no solution: vectorized Lyapunov system is singular (an eigenvalue pair multiplies to 1)");

  Matrix p(n, n);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t r = 0; r < n; ++r) p(r, c) = (*sol)[c * n + r];

  LyapunovSolution out;
  out.residual = inf_norm(at * p * a - p + q);
  if (!(out.residual < 1e-9))
    throw Error(ErrorKind::Marginal, "Lyapunov solve residual " + format_real(out.residual) + " exceeds 1e-9");
  out.P = 0.5 * (p + p.transpose());
  return out;
}

inline LyapunovSolution solve_discrete_lyapunov(const Matrix& a) {
  return solve_discrete_lyapunov(a, Matrix::identity(a.rows()));
}

inline double eval_V(const QuadraticForm& v, std::span<const double> x) {
  if (v.P.rows() != x.size() || v.P.cols() != x.size())
    throw Error(ErrorKind::Dimension, "V has dimension " + std::to_string(v.P.rows()) + ", state has " + std::to_string(x.size()));
  const Vector px = v.P.apply(x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * px[i];
  return s;
}

/// V(f(x)) − V(x) for an arbitrary candidate V.
inline double delta_V(const StepMap& f, const std::function<double(const Vector&)>& v, const Vector& x) {
  return v(f(x)) - v(x);
}

inline double delta_V(const StepMap& f, const QuadraticForm& spec, const Vector& x) {
  return eval_V(spec, f(x)) - eval_V(spec, x);
}

namespace detail {

/// Monic characteristic polynomial coefficients c[0..n] (c[0] = 1) by the
/// Faddeev–LeVerrier recursion.
inline std::vector<double> characteristic_polynomial(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> c(n + 1, 0.0);
  c[0] = 1.0;
  Matrix m(n, n);
  for (std::size_t k = 1; k <= n; ++k) {
    Matrix am = a * m;
    for (std::size_t i = 0; i < n; ++i) am(i, i) += c[k - 1];
    m = am;
    const Matrix prod = a * m;
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += prod(i, i);
    c[k] = -tr / static_cast<double>(k);
  }
  return c;
}

inline std::complex<double> horner(const std::vector<double>& c, std::complex<double> z) {
  std::complex<double> s = c[0];
  for (std::size_t i = 1; i < c.size(); ++i) s = s * z + c[i];
  return s;
}

inline std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& c) {
  const std::size_t n = c.size() - 1;
  std::vector<std::complex<double>> z(n);
  double radius = 1.0;
  for (std::size_t i = 1; i <= n; ++i) radius = std::max(radius, 1.0 + std::abs(c[i]));
  const std::complex<double> seed(0.4, 0.9);
  for (std::size_t i = 0; i < n; ++i) z[i] = std::pow(seed, static_cast<double>(i)) * (radius / 2.0);
  for (int iter = 0; iter < 2000; ++iter) {
    double move = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> den = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) den *= (z[i] - z[j]);
      const std::complex<double> dz = horner(c, z[i]) / den;
      z[i] -= dz;
      move = std::max(move, std::abs(dz));
    }
    if (move < 1e-15) break;
  }
  return z;
}

}  // namespace detail

/// Eigenvalues ordered by decreasing modulus (ties: larger real part first).
/// n ≤ 2 uses the closed-form characteristic roots.
inline std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
  if (!a.is_square() || a.rows() == 0) throw Error(ErrorKind::Dimension, "eigenvalues need a non-empty square matrix");
  std::vector<std::complex<double>> ev;
  const std::size_t n = a.rows();
  if (n == 1) {
    ev.emplace_back(a(0, 0), 0.0);
  } else if (n == 2) {
    const double half_tr = 0.5 * (a(0, 0) + a(1, 1));
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const double disc = half_tr * half_tr - det;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      // Cancellation-free pair: the larger root directly, the other from det.
      const double big = half_tr >= 0 ? half_tr + s : half_tr - s;
      ev.emplace_back(big, 0.0);
      ev.emplace_back(big != 0.0 ? det / big : 0.0, 0.0);
    } else {
      const double s = std::sqrt(-disc);
      ev.emplace_back(half_tr, s);
      ev.emplace_back(half_tr, -s);
    }
  } else {
    ev = detail::polynomial_roots(detail::characteristic_polynomial(a));
  }
  std::sort(ev.begin(), ev.end(), [](auto x, auto y) {
    if (std::abs(x) != std::abs(y)) return std::abs(x) > std::abs(y);
    return x.real() > y.real();
  });
  return ev;
}

inline double spectral_radius(const Matrix& a) { return std::abs(eigenvalues(a).front()); }

}  // namespace stabcheck
