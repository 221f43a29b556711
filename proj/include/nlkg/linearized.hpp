#pragma once

// The linearized operator L_+ = -Delta + 1 - 3Q^2 about the ground state,
// discretized in the w-representation as a symmetric tridiagonal matrix on
// the interior nodes. Provides the ground eigenpair (-k^2, rho) via Sturm
// bisection plus shifted inverse iteration, the negative-eigenvalue count,
// the radial Birman-Schwinger spectrum, and the decomposition
//     u = sigma [Q + lambda rho + gamma],   gamma perp rho.

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "nlkg/ground_state.hpp"
#include "nlkg/radial_core.hpp"

namespace nlkg {

// Symmetric tridiagonal operator acting on interior w-vectors, with a
// constant off-diagonal (the second-difference coupling).
struct TridiagonalOperator {
  RadialGrid grid;
  std::vector<double> diag; // size n-1
  double off = 0.0;

  int size() const { return static_cast<int>(diag.size()); }

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    const int N = size();
    y.resize(N);
    for (int i = 0; i < N; ++i) {
      double s = diag[i] * x[i];
      if (i > 0) s += off * x[i - 1];
      if (i + 1 < N) s += off * x[i + 1];
      y[i] = s;
    }
  }

  RadialField apply(const RadialField& f) const {
    if (f.grid != grid) throw std::invalid_argument("mismatched radial grids");
    const int N = size();
    std::vector<double> x(N), y(N);
    for (int i = 0; i < N; ++i) x[i] = f.w(i);
    apply(x, y);
    RadialField out(grid);
    for (int i = 0; i < N; ++i) out.values[i] = y[i] / grid.r(i);
    out.values[grid.n - 1] = 0.0;
    return out;
  }
};

inline TridiagonalOperator assemble_Lplus(const GroundStateData& gs) {
  const RadialGrid& g = gs.Q.grid;
  TridiagonalOperator L;
  L.grid = g;
  L.off = -1.0 / (g.h * g.h);
  L.diag.resize(g.n - 1);
  for (int i = 0; i < g.n - 1; ++i) {
    const double q = gs.Q.values[i];
    L.diag[i] = 2.0 / (g.h * g.h) + 1.0 - 3.0 * q * q;
  }
  return L;
}

// Number of eigenvalues strictly below x (Sturm / LDL^T sign count).
inline int sturm_count_below(const TridiagonalOperator& L, double x) {
  const int N = L.size();
  const double b2 = L.off * L.off;
  int count = 0;
  double d = 1.0;
  for (int i = 0; i < N; ++i) {
    d = (L.diag[i] - x) - (i > 0 ? b2 / d : 0.0);
    if (d == 0.0) d = 1e-300;
    if (d < 0.0) ++count;
  }
  return count;
}

namespace detail {

// Thomas solve of (L - shift I) x = rhs; valid while the shifted matrix
// needs no pivoting (used with shifts below the spectrum).
inline void shifted_solve(const TridiagonalOperator& L, double shift, std::vector<double>& rhs) {
  const int N = L.size();
  std::vector<double> d(N);
  for (int i = 0; i < N; ++i) d[i] = L.diag[i] - shift;
  for (int i = 1; i < N; ++i) {
    const double m = L.off / d[i - 1];
    d[i] -= m * L.off;
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[N - 1] /= d[N - 1];
  for (int i = N - 2; i >= 0; --i) rhs[i] = (rhs[i] - L.off * rhs[i + 1]) / d[i];
}

} // namespace detail

// Smallest eigenvalue by Sturm bisection, eigenvector by inverse iteration
// with a shift just below it.
inline double smallest_eigenvalue(const TridiagonalOperator& L, std::vector<double>* vec = nullptr,
                                  double tol = 1e-13) {
  const int N = L.size();
  double lo = L.diag[0], hi = L.diag[0];
  for (double d : L.diag) {
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  lo -= 2.0 * std::abs(L.off);
  hi += 2.0 * std::abs(L.off);
  const double scale = std::max(std::abs(lo), std::abs(hi));
  while (hi - lo > tol * scale) {
    const double mid = 0.5 * (lo + hi);
    if (sturm_count_below(L, mid) >= 1)
      hi = mid;
    else
      lo = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  if (vec) {
    std::vector<double> v(N, 1.0);
    const double shift = lambda - 1e-8 * scale;
    double rq = lambda;
    double res = scale;
    for (int it = 0; it < 60; ++it) {
      detail::shifted_solve(L, shift, v);
      double nrm = 0.0;
      for (double x : v) nrm += x * x;
      nrm = std::sqrt(nrm);
      for (double& x : v) x /= nrm;
      std::vector<double> Lv;
      L.apply(v, Lv);
      rq = 0.0;
      for (int i = 0; i < N; ++i) rq += v[i] * Lv[i];
      double r2 = 0.0;
      for (int i = 0; i < N; ++i) r2 += (Lv[i] - rq * v[i]) * (Lv[i] - rq * v[i]);
      const double prev = res;
      res = std::sqrt(r2);
      if (res <= 1e-13 * scale || res >= 0.9 * prev) break; // converged or at the floor
    }
    *vec = v;
    return rq;
  }
  return lambda;
}

struct SpectralData {
  double k = 0.0;              // L_+ rho = -k^2 rho, k > 0
  RadialField rho;             // positive, ||rho||_{L^2} = 1 in the 3D measure
  int n_neg = 0;               // negative eigenvalues of the radial L_+
  std::vector<double> bs_top;  // leading Birman-Schwinger eigenvalues, descending
};

inline SpectralData eig_ground(const TridiagonalOperator& L, double tol = 1e-10) {
  std::vector<double> v;
  const double lambda = smallest_eigenvalue(L, &v);
  if (lambda >= 0.0)
    throw std::runtime_error("eig_ground: smallest eigenvalue is nonnegative (wrong Q?)");
  SpectralData sd;
  sd.k = std::sqrt(-lambda);
  sd.n_neg = sturm_count_below(L, 0.0);

  const RadialGrid& g = L.grid;
  sd.rho = RadialField(g);
  double mass = 0.0;
  for (int i = 0; i < L.size(); ++i) mass += v[i];
  const double flip = (mass < 0.0) ? -1.0 : 1.0;
  for (int i = 0; i < L.size(); ++i) sd.rho.values[i] = flip * v[i] / g.r(i);
  sd.rho.values[g.n - 1] = 0.0;
  const double nrm = std::sqrt(l2_sq(sd.rho));
  for (double& x : sd.rho.values) x /= nrm;

  RadialField res = L.apply(sd.rho);
  axpy(res, sd.k * sd.k, sd.rho);
  if (std::sqrt(l2_sq(res)) > std::max(tol, 1e-6))
    throw std::runtime_error("eig_ground: eigenpair residual above tolerance");
  return sd;
}

inline SpectralData make_spectral_data(const GroundStateData& gs, double tol = 1e-10) {
  return eig_ground(assemble_Lplus(gs), tol);
}

// ---- Birman-Schwinger spectrum ----------------------------------------
//
// Radial (l = 0) kernel of K_+ = 3 Q (-Delta)^{-1} Q in the w-representation:
// K(r, r') = 3 Q(r) min(r, r') Q(r'), discretized with the trapezoid weight h
// on the block where Q is numerically supported, then diagonalized densely.
inline std::vector<double> birman_schwinger_spectrum(const GroundStateData& gs, int m) {
  if (m < 2) throw std::invalid_argument("birman_schwinger_spectrum: need m >= 2");
  const RadialGrid& g = gs.Q.grid;
  int M = g.n - 1;
  const double q_cut = 1e-10 * std::abs(gs.q0);
  while (M > 1 && std::abs(gs.Q.values[M - 1]) < q_cut) --M;

  Eigen::MatrixXd A(M, M);
  for (int i = 0; i < M; ++i) {
    const double qi = 3.0 * gs.Q.values[i]; // multiplication by Q is diagonal in w-space
    for (int j = 0; j <= i; ++j) {
      const double v = qi * g.r(j) * gs.Q.values[j] * g.h; // min(r_i, r_j) = r_j
      A(i, j) = v;
      A(j, i) = v;
    }
  }
  // quadrature-asymmetry guard (construction is symmetric by design)
  for (int i = 0; i < std::min(M, 8); ++i)
    for (int j = 0; j < std::min(M, 8); ++j)
      if (std::abs(A(i, j) - A(j, i)) > 1e-12 * (1.0 + std::abs(A(i, j))))
        throw std::runtime_error("birman_schwinger_spectrum: asymmetric assembly");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, Eigen::EigenvaluesOnly);
  std::vector<double> top;
  const auto& ev = solver.eigenvalues(); // ascending
  for (int i = 0; i < m && i < M; ++i) top.push_back(ev(M - 1 - i));
  return top;
}

// ---- decomposition -----------------------------------------------------

struct Decomposition {
  int sigma = +1;
  double lam = 0.0;
  double lamdot = 0.0;
  RadialField gamma;
  RadialField gammadot;

  double lam_plus(double k) const { return lam + lamdot / k; }
  double lam_minus(double k) const { return lam - lamdot / k; }
};

// <L_+ gamma | gamma>; nonnegative on the orthogonal complement of rho.
inline double quadratic_form(const TridiagonalOperator& L, const RadialField& gamma) {
  const double q = inner(L.apply(gamma), gamma);
  if (q < -1e-8 * h1_sq(gamma))
    throw std::domain_error("quadratic_form: negative value, orthogonality to rho is broken");
  return q;
}

// sigma minimizes the spatial part of the linearized energy,
// k^2 lambda^2 + <L_+ gamma|gamma>; the cubic correction in d_sigma cannot
// reorder the two signs (the far sign is always O(||Q||_E)). Ties go to +1.
inline Decomposition decompose(const State& s, const SpectralData& spec,
                               const GroundStateData& gs, const TridiagonalOperator& L) {
  Decomposition best;
  double best_score = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    const int sigma = (pass == 0) ? +1 : -1;
    RadialField v = s.u;
    v *= sigma;
    v -= gs.Q;
    const double lam = inner(v, spec.rho);
    RadialField gamma = v;
    axpy(gamma, -lam, spec.rho);
    const double score = spec.k * spec.k * lam * lam + inner(L.apply(gamma), gamma);
    if (pass == 0 || score < best_score) {
      best.sigma = sigma;
      best.lam = lam;
      best.gamma = std::move(gamma);
      best_score = score;
    }
  }
  RadialField vdot = s.udot;
  vdot *= best.sigma;
  best.lamdot = inner(vdot, spec.rho);
  best.gammadot = vdot;
  axpy(best.gammadot, -best.lamdot, spec.rho);
  return best;
}

// u = sigma [Q + lam rho + gamma], udot = sigma [lamdot rho + gammadot]
inline State reconstruct(const Decomposition& d, const SpectralData& spec,
                         const GroundStateData& gs, double t = 0.0) {
  RadialField u = gs.Q;
  axpy(u, d.lam, spec.rho);
  u += d.gamma;
  u *= d.sigma;
  RadialField udot = d.gammadot;
  axpy(udot, d.lamdot, spec.rho);
  udot *= d.sigma;
  return State{std::move(u), std::move(udot), t};
}

} // namespace nlkg
