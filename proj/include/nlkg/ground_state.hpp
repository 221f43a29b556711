#pragma once

// Ground state Q of  -Delta Q + Q = Q^3  by shooting on the reduced ODE
//     w'' = w - w^3 / r^2,        w = r Q,
// followed by a damped Newton polish of the discrete elliptic system, so
// that the grid profile satisfies  -Delta_h Q + Q - Q^3 = 0  to near
// machine precision and all spectral work downstream sees a consistent Q.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlkg/radial_core.hpp"

namespace nlkg {

struct GroundStateData {
  RadialField Q;
  double q0 = 0.0;       // shooting amplitude Q(0)
  double JQ = 0.0;       // static energy J(Q)
  double l4Q = 0.0;      // ||Q||_{L^4}^4
  double h1Q = 0.0;      // ||Q||_{H^1}^2
  double grad_sqQ = 0.0; // ||grad Q||_{L^2}^2
  double residual = 0.0; // sup-norm of -Delta Q + Q - Q^3
};

// -Delta f + f - f^3 as a field (boundary node zero).
inline RadialField elliptic_residual_field(const RadialField& f) {
  RadialField res = laplacian(f);
  for (int j = 0; j < f.n(); ++j) {
    const double q = f.values[j];
    res.values[j] = -res.values[j] + q - q * q * q;
  }
  res.values[f.n() - 1] = 0.0;
  return res;
}

namespace detail {

// One RK4 step of (w, w') with w'' = w - w^3/r^2.
inline void rk4_w_step(double& r, double& w, double& wp, double dr) {
  auto acc = [](double rr, double ww) { return ww - ww * ww * ww / (rr * rr); };
  const double k1w = wp, k1p = acc(r, w);
  const double k2w = wp + 0.5 * dr * k1p, k2p = acc(r + 0.5 * dr, w + 0.5 * dr * k1w);
  const double k3w = wp + 0.5 * dr * k2p, k3p = acc(r + 0.5 * dr, w + 0.5 * dr * k2w);
  const double k4w = wp + dr * k3p, k4p = acc(r + dr, w + dr * k3w);
  w += dr / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
  wp += dr / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
  r += dr;
}

enum class ShotOutcome { overshoot, undershoot, reached_end };

// March the shot with amplitude a over the grid, storing w at the nodes up
// to r_stop. Series start at r_1 = h:
//   Q(r) = a + (a - a^3) r^2/6 + q4 r^4,  q4 = (a - a^3)(1 - 3a^2)/120.
inline ShotOutcome march_shot(const RadialGrid& g, double a, double r_stop,
                              std::vector<double>* w_nodes, int substeps = 4) {
  const double q2 = (a - a * a * a) / 6.0;
  const double q4 = q2 * (1.0 - 3.0 * a * a) / 20.0;
  double r = g.h;
  double w = a * r + q2 * r * r * r + q4 * r * r * r * r * r;
  double wp = a + 3.0 * q2 * r * r + 5.0 * q4 * r * r * r * r;
  if (w_nodes) (*w_nodes)[0] = w;
  const double dr = g.h / substeps;
  for (int j = 1; j < g.n; ++j) {
    for (int s = 0; s < substeps; ++s) rk4_w_step(r, w, wp, dr);
    if (w_nodes && j < static_cast<int>(w_nodes->size())) (*w_nodes)[j] = w;
    const double q = w / r;
    if (q <= 0.0) return ShotOutcome::overshoot;
    const double qp = (wp - q) / r;
    if (qp > 0.0 && q < 0.9 * a) return ShotOutcome::undershoot;
    if (r >= r_stop) break;
  }
  return ShotOutcome::reached_end;
}

// Thomas solve of the tridiagonal system (diag d, off-diagonal o) in place.
inline void tridiag_solve(std::vector<double>& d, double o, std::vector<double>& rhs) {
  const int n = static_cast<int>(d.size());
  for (int i = 1; i < n; ++i) {
    const double m = o / d[i - 1];
    d[i] -= m * o;
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[n - 1] /= d[n - 1];
  for (int i = n - 2; i >= 0; --i) rhs[i] = (rhs[i] - o * rhs[i + 1]) / d[i];
}

} // namespace detail

// Shooting amplitude by bisection on the w-ODE. Overshoot: Q crosses zero;
// undershoot: Q' turns positive before decay. The lower bracket must stay
// clear of the ODE fixed point Q = 1.
inline double shoot_amplitude(const RadialGrid& g, double a_lo = 2.0, double a_hi = 10.0,
                              double r_stop = 16.0) {
  r_stop = std::min(r_stop, g.r_max - 1.0);
  auto outcome = [&](double a) { return detail::march_shot(g, a, r_stop, nullptr); };
  if (outcome(a_lo) != detail::ShotOutcome::undershoot ||
      outcome(a_hi) != detail::ShotOutcome::overshoot)
    throw std::runtime_error("shoot_Q: bisection bracket not found");
  for (int it = 0; it < 200 && (a_hi - a_lo) > 1e-14 * a_hi; ++it) {
    const double mid = 0.5 * (a_lo + a_hi);
    switch (outcome(mid)) {
      case detail::ShotOutcome::overshoot: a_hi = mid; break;
      case detail::ShotOutcome::undershoot: a_lo = mid; break;
      case detail::ShotOutcome::reached_end: return mid; // separatrix to machine window
    }
  }
  return 0.5 * (a_lo + a_hi);
}

inline GroundStateData shoot_Q(const RadialGrid& g, double tol = 1e-9) {
  if (tol <= 0.0) throw std::invalid_argument("shoot_Q: tol must be positive");
  if (g.h > 0.05) throw std::invalid_argument("shoot_Q: grid too coarse (need h <= 0.05)");

  const double r_stop = std::min(16.0, g.r_max - 1.0);
  const double a = shoot_amplitude(g, 2.0, 10.0, r_stop);

  // fill nodes from the winning shot, then extend by the exponential tail
  // w ~ c e^{-r} from where the profile is still clean of separatrix noise
  std::vector<double> w(g.n, 0.0);
  detail::march_shot(g, a, r_stop, &w);
  double wmax = 0.0;
  for (double x : w) wmax = std::max(wmax, std::abs(x));
  int j_ext = -1;
  for (int j = 0; j < g.n; ++j) {
    if (w[j] <= 0.0) break; // past the marched (positive) part of the shot
    if (g.r(j) > 5.0 && w[j] < 1e-4 * wmax) {
      j_ext = j;
      break;
    }
    j_ext = j;
  }
  if (j_ext < 0) throw std::runtime_error("shoot_Q: shot profile unusable");
  for (int j = j_ext + 1; j < g.n; ++j) w[j] = w[j_ext] * std::exp(-(g.r(j) - g.r(j_ext)));
  w[g.n - 1] = 0.0;

  // damped Newton on F_i = -(w_{i-1} - 2 w_i + w_{i+1})/h^2 + w_i - w_i^3/r_i^2,
  // Jacobian = tridiagonal L_+ assembled at the current iterate
  const int N = g.n - 1;
  const double h2 = g.h * g.h;
  auto residual_vec = [&](const std::vector<double>& ww, std::vector<double>& F) {
    for (int i = 0; i < N; ++i) {
      const double wm = (i > 0) ? ww[i - 1] : 0.0;
      const double wp = (i < N - 1) ? ww[i + 1] : 0.0;
      const double r = g.r(i);
      F[i] = -(wm - 2.0 * ww[i] + wp) / h2 + ww[i] - ww[i] * ww[i] * ww[i] / (r * r);
    }
  };
  auto sup_res_u = [&](const std::vector<double>& F) {
    double m = 0.0;
    for (int i = 0; i < N; ++i) m = std::max(m, std::abs(F[i] / g.r(i)));
    return m;
  };

  std::vector<double> F(N), diag(N), step(N), trial(g.n, 0.0);
  residual_vec(w, F);
  double res = sup_res_u(F);
  const double accept = tol * std::max(1.0, a);
  const double target = std::min(tol, 1e-11) * std::max(1.0, a);
  for (int it = 0; it < 60 && res > target; ++it) {
    for (int i = 0; i < N; ++i) {
      const double r = g.r(i);
      diag[i] = 2.0 / h2 + 1.0 - 3.0 * w[i] * w[i] / (r * r);
    }
    step = F;
    detail::tridiag_solve(diag, -1.0 / h2, step);
    double damp = 1.0;
    bool improved = false;
    for (int tries = 0; tries < 12 && !improved; ++tries, damp *= 0.5) {
      for (int i = 0; i < N; ++i) trial[i] = w[i] - damp * step[i];
      residual_vec(trial, F);
      const double res_trial = sup_res_u(F);
      if (res_trial < res) {
        for (int i = 0; i < N; ++i) w[i] = trial[i];
        res = res_trial;
        improved = true;
      }
    }
    if (!improved) {
      // no step reduces the residual: either at the roundoff floor of the
      // 1/h^2-scaled difference operator (fine grids), or genuinely stuck
      if (res <= accept) break;
      throw std::runtime_error("shoot_Q: Newton divergence");
    }
  }
  if (res > accept) throw std::runtime_error("shoot_Q: Newton did not converge");

  GroundStateData gs;
  gs.Q = RadialField(g);
  for (int j = 0; j < N; ++j) gs.Q.values[j] = w[j] / g.r(j);
  gs.Q.values[g.n - 1] = 0.0;
  gs.q0 = a;
  gs.l4Q = l4_int(gs.Q);
  gs.grad_sqQ = grad_sq(gs.Q);
  gs.h1Q = gs.grad_sqQ + l2_sq(gs.Q);
  gs.JQ = 0.5 * gs.h1Q - 0.25 * gs.l4Q;
  gs.residual = res;
  return gs;
}

// ---- ground-state cache ------------------------------------------------
//
// Text format, one file per (r_max, n):
//   NLKG-Q v1 <r_max> <n>
//   <r> <Q(r)>            (17 significant digits; the first pair is the
//                          origin sample "0 q0", then the n grid nodes)
// optionally followed by the spectral section:
//   NLKG-SPEC v1 <k>
//   <r> <rho(r)>          (n lines)

struct SpectralCacheSection {
  double k = 0.0;
  std::vector<double> rho;
};

inline std::string cache_file_name(const RadialGrid& g) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "nlkg_q_r%.17g_n%d.txt", g.r_max, g.n);
  return buf;
}

inline void write_cache(const std::string& path, const RadialGrid& g, const GroundStateData& gs,
                        const SpectralCacheSection* spec = nullptr) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open cache file for writing: " + path);
  std::fprintf(f, "NLKG-Q v1 %.17g %d\n", g.r_max, g.n);
  std::fprintf(f, "0 %.17g\n", gs.q0);
  for (int j = 0; j < g.n; ++j) std::fprintf(f, "%.17g %.17g\n", g.r(j), gs.Q.values[j]);
  if (spec) {
    std::fprintf(f, "NLKG-SPEC v1 %.17g\n", spec->k);
    for (int j = 0; j < g.n; ++j) std::fprintf(f, "%.17g %.17g\n", g.r(j), spec->rho[j]);
  }
  std::fclose(f);
}

// Loads a cached profile; returns false on a missing file or on any header,
// size, or version mismatch. A matching file reproduces the doubles bit-exactly.
inline bool read_cache(const std::string& path, const RadialGrid& g, GroundStateData* gs,
                       SpectralCacheSection* spec = nullptr) {
  std::ifstream in(path);
  if (!in) return false;
  std::string tag, ver;
  double r_max = 0.0;
  int n = 0;
  if (!(in >> tag >> ver >> r_max >> n)) return false;
  if (tag != "NLKG-Q" || ver != "v1" || n != g.n || r_max != g.r_max) return false;
  RadialField Q(g);
  double r, v;
  if (!(in >> r >> v) || r != 0.0) return false; // origin sample carries q0
  gs->q0 = v;
  for (int j = 0; j < n; ++j) {
    if (!(in >> r >> v)) return false;
    Q.values[j] = v;
  }
  gs->Q = Q;
  gs->l4Q = l4_int(Q);
  gs->grad_sqQ = grad_sq(Q);
  gs->h1Q = gs->grad_sqQ + l2_sq(Q);
  gs->JQ = 0.5 * gs->h1Q - 0.25 * gs->l4Q;
  gs->residual = sup_norm(elliptic_residual_field(Q));
  if (spec) {
    if (!(in >> tag >> ver >> spec->k)) return true; // spectral section absent
    if (tag != "NLKG-SPEC" || ver != "v1") return true;
    spec->rho.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
      if (!(in >> r >> v)) {
        spec->rho.clear();
        return true;
      }
      spec->rho[j] = v;
    }
  }
  return true;
}

} // namespace nlkg
