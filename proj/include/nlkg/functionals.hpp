#pragma once

// Scalar functionals of the flow: the conserved energy, the K/G scaling
// functionals, the linearized energy norm, the nonlinear distance d_Q to
// {+Q, -Q}, the sign functional S, the localized virial, and exterior
// energies. ThresholdParams collects the radii and detector constants and
// validates their ordering relations.

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nlkg/ground_state.hpp"
#include "nlkg/linearized.hpp"
#include "nlkg/radial_core.hpp"

namespace nlkg {

// Everything the flow diagnostics need, built once per grid and shared
// read-only across threads.
struct NlkgSystem {
  GroundStateData gs;
  TridiagonalOperator L;
  SpectralData spec;
};

inline NlkgSystem make_system(const RadialGrid& g, double tol = 1e-9) {
  NlkgSystem sys;
  sys.gs = shoot_Q(g, tol);
  sys.L = assemble_Lplus(sys.gs);
  sys.spec = eig_ground(sys.L);
  return sys;
}

inline NlkgSystem make_system(GroundStateData gs) {
  NlkgSystem sys;
  sys.gs = std::move(gs);
  sys.L = assemble_Lplus(sys.gs);
  sys.spec = eig_ground(sys.L);
  return sys;
}

// ---- threshold parameters ------------------------------------------------

struct ThresholdParams {
  // delta_E frozen from calibrate_delta_E on the default grid: the largest
  // dyadic delta with |C(v)| <= ||v||_E^2/2 over 1e4 samples of ||v||_E <= 4 delta.
  double delta_E = 0.5;   // radius where the cubic energy correction is tame
  double delta_X = 0.5;   // terminal radius of the ejection regime
  double delta_S = 0.25;  // variational radius, = delta_X / (2 C_star)
  double delta_star = 0.125;
  double eps_star = 0.015625; // energy-excess scale, < R_star/2
  double R_star = 0.0625;     // one-pass exiting radius
  double C_star = 1.0;
  double eta_scat = 0.05; // potential-to-energy ratio in the scatter detector
  double u_max = 1e6;     // blow-up amplitude cap
  double T_win = 4.0;     // scatter detector window
  double T_tail = 2.0;    // trapping detector tail window
  double mu = 0.5;        // low-kinetic threshold

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
    if (!(delta_E > 0 && delta_X > 0 && delta_S > 0 && delta_star > 0 && eps_star > 0 &&
          R_star > 0 && C_star > 0 && eta_scat > 0 && u_max > 0 && T_win > 0 && T_tail > 0 &&
          mu > 0))
      fail("ThresholdParams: all entries must be positive");
    if (std::abs(2.0 * C_star * delta_S - delta_X) > 1e-12 * delta_X)
      fail("ThresholdParams: relation 2*C_star*delta_S = delta_X violated");
    if (!(delta_X <= delta_E)) fail("ThresholdParams: relation delta_X <= delta_E violated");
    if (!(eps_star < 0.5 * R_star))
      fail("ThresholdParams: relation eps_star < R_star/2 violated");
    if (!(0.5 * R_star < delta_S))
      fail("ThresholdParams: relation R_star/2 < delta_S violated");
  }
};

// C^2 cutoff: 1 on [0,1], 0 on [2,inf), quintic bridge between.
inline double chi_cutoff(double x) {
  x = std::abs(x);
  if (x <= 1.0) return 1.0;
  if (x >= 2.0) return 0.0;
  const double t = x - 1.0;
  return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

inline int signum(double x) { return x < 0.0 ? -1 : +1; } // sign 0 = +1

// ---- static functionals ----------------------------------------------------

struct StaticFunctionals {
  double l2 = 0, grad = 0, l4 = 0;
  double h1 = 0, J = 0, K0 = 0, K2 = 0, G0 = 0, G2 = 0;
};

inline StaticFunctionals static_functionals(const RadialField& u) {
  StaticFunctionals f;
  f.l2 = l2_sq(u);
  f.grad = grad_sq(u);
  f.l4 = l4_int(u);
  f.h1 = f.grad + f.l2;
  f.J = 0.5 * f.h1 - 0.25 * f.l4;
  f.K0 = f.h1 - f.l4;
  f.K2 = f.grad - 0.75 * f.l4;
  f.G0 = f.J - 0.25 * f.K0;
  f.G2 = f.J - f.K2 / 3.0;
  return f;
}

// conserved energy E = int [ (udot^2 + |grad u|^2 + u^2)/2 - u^4/4 ]
inline double energy(const State& s) {
  return 0.5 * (l2_sq(s.udot) + grad_sq(s.u) + l2_sq(s.u)) - 0.25 * l4_int(s.u);
}

struct ScaledIdentities {
  double J = 0, K0 = 0, K2 = 0;
};

// J, K0, K2 of the amplitude family a*Q; the self-test identities are
// J(aQ) = (2a^2 - a^4) J(Q), K0(aQ) = (a^2 - a^4) l4Q, K2 = (3/4)(a^2 - a^4) l4Q.
inline ScaledIdentities scaled_Q_identities(double a, const GroundStateData& gs) {
  RadialField aq = gs.Q;
  aq *= a;
  StaticFunctionals f = static_functionals(aq);
  return {f.J, f.K0, f.K2};
}

// ---- linearized energy norm and the distance to {±Q} ----------------------

// ||v||_E^2 = [k^2 lam^2 + <L_+ gamma|gamma> + ||vdot||^2] / 2
inline double linearized_norm_sq(const Decomposition& d, const NlkgSystem& sys) {
  const double vdot_sq = d.lamdot * d.lamdot + l2_sq(d.gammadot);
  return 0.5 * (sys.spec.k * sys.spec.k * d.lam * d.lam + quadratic_form(sys.L, d.gamma) +
                vdot_sq);
}

inline double linearized_norm(const Decomposition& d, const NlkgSystem& sys) {
  return std::sqrt(std::max(0.0, linearized_norm_sq(d, sys)));
}

// cubic-and-higher part of the energy around sigma Q: C(v) = <Q|v^3> + ||v||_4^4/4
inline double cubic_correction(const RadialField& v, const GroundStateData& gs) {
  const RadialGrid& g = v.grid;
  double s = 0.0;
  for (int j = 0; j < g.n; ++j) {
    const double r = g.r(j);
    const double wv = v.w(j);
    const double cube = wv * wv * wv / (r * r); // w-rep of v^3
    const double quart = cube * wv;             // w^4 / r^2 = r^2 v^4
    const double term = gs.Q.w(j) * cube + 0.25 * quart;
    s += (j + 1 == g.n) ? 0.5 * term : term;
  }
  return four_pi * g.h * s;
}

struct DistanceResult {
  double dQ = 0.0;
  int sigma = +1;
  double C_v = 0.0;      // cubic correction of the minimizing sign
  double vnorm_E = 0.0;  // ||v||_E of the minimizing sign
  Decomposition decomp;  // decomposition at the minimizing sign
};

// d_sigma(u) = sqrt(||v||_E^2 - chi(||v||_E / (2 delta_E)) C(v)), minimized
// over sigma; decompose() already selects the minimizing sign.
inline DistanceResult distance_dQ(const State& s, const NlkgSystem& sys,
                                  const ThresholdParams& p) {
  DistanceResult out;
  out.decomp = decompose(s, sys.spec, sys.gs, sys.L);
  out.sigma = out.decomp.sigma;
  RadialField v = s.u;
  v *= out.decomp.sigma;
  v -= sys.gs.Q;
  out.C_v = cubic_correction(v, sys.gs);
  const double n2 = linearized_norm_sq(out.decomp, sys);
  out.vnorm_E = std::sqrt(std::max(0.0, n2));
  const double d2 = n2 - chi_cutoff(out.vnorm_E / (2.0 * p.delta_E)) * out.C_v;
  out.dQ = std::sqrt(std::max(0.0, d2));
  return out;
}

// ---- sign functional -------------------------------------------------------

struct SignResult {
  int value = +1;      // +1 scattering side, -1 blow-up side, 0 inside B(±Q)
  bool inside_ball = false;
  bool anomaly = false; // the two branches disagreed on the overlap
};

// S = -sign(lambda) near {±Q}, sign(K0) away; inside the energy-excess ball
// B(±Q) = { d_Q <= 2 [E - J(Q)] } the sign is not defined.
inline SignResult sign_functional_from(double dQ, double lam, double K0, double E_excess,
                                       const ThresholdParams& p) {
  SignResult r;
  if (dQ <= 2.0 * E_excess) {
    r.inside_ball = true;
    r.value = 0;
    return r;
  }
  const bool near = dQ <= p.delta_E;
  const bool far = dQ >= p.delta_S;
  const int near_val = -signum(lam);
  const int far_val = signum(K0);
  if (near && far && near_val != far_val) r.anomaly = true;
  r.value = near ? near_val : far_val;
  return r;
}

inline SignResult sign_functional(const State& s, const NlkgSystem& sys,
                                  const ThresholdParams& p) {
  const DistanceResult d = distance_dQ(s, sys, p);
  const StaticFunctionals f = static_functionals(s.u);
  const double E = 0.5 * l2_sq(s.udot) + f.J;
  return sign_functional_from(d.dQ, d.decomp.lam, f.K0, E - sys.gs.JQ, p);
}

// ---- virial and exterior energies -----------------------------------------

// Cut-off geometry of the two-cone construction: w(t,r) = chi(r / (t-T1+S))
// on the first half-interval and chi(r / (T2-t+S)) on the second.
struct VirialCutoff {
  double T1 = 0.0;
  double T2 = 0.0;
  double S = 1.0;
  double scale(double t) const {
    return (t < 0.5 * (T1 + T2)) ? (t - T1 + S) : (T2 - t + S);
  }
};

// V_w = <w udot | D2 u> with the scaling generator D2 = (x grad + grad x)/2,
// radially D2 u = r u_r + (3/2) u, so that dV/dt = -K2 + cutoff error.
inline double virial(const State& s, const std::optional<VirialCutoff>& cutoff = std::nullopt) {
  const RadialGrid& g = s.grid();
  const int n = g.n;
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    const double r = g.r(j);
    const double wm = (j > 0) ? s.u.w(j - 1) : 0.0;
    const double wp = (j + 1 < n) ? s.u.w(j + 1) : 0.0;
    const double wprime = (wp - wm) / (2.0 * g.h);
    const double w_d2u = r * wprime + 0.5 * s.u.w(j); // w-rep of r u_r + (3/2) u
    double cut = 1.0;
    if (cutoff) cut = chi_cutoff(r / cutoff->scale(s.t));
    const double term = cut * s.udot.w(j) * w_d2u;
    acc += (j + 1 == n) ? 0.5 * term : term;
  }
  return four_pi * g.h * acc;
}

struct ExteriorEnergy {
  double free = 0.0;      // int_{r > R} e0,  e0 = (udot^2 + |grad u|^2 + u^2)/2
  double nonlinear = 0.0; // int_{r > R} (e0 - u^4/4)
};

// Node-aligned trapezoid from the first node >= radius, with the
// Euler-Maclaurin end correction so smooth tails integrate to O(h^4).
inline ExteriorEnergy exterior_energy(const State& s, double radius) {
  const RadialGrid& g = s.grid();
  if (radius >= g.r_max) return {};
  const int n = g.n;
  auto wval = [&](int j) { return (j >= 0 && j < n) ? s.u.w(j) : 0.0; };
  auto density = [&](int j, double& e0, double& quart) {
    const double r = g.r(j);
    // fourth-order stencil for w' keeps the pointwise gradient density from
    // limiting the tail accuracy
    double wprime; // wval(-1) is the origin sample w(0) = 0
    if (j >= 1 && j + 2 < n)
      wprime = (wval(j - 2) - 8.0 * wval(j - 1) + 8.0 * wval(j + 1) - wval(j + 2)) / (12.0 * g.h);
    else
      wprime = (wval(j + 1) - wval(j - 1)) / (2.0 * g.h);
    const double r_ur = wprime - s.u.values[j]; // r u_r
    e0 = 0.5 * (s.udot.w(j) * s.udot.w(j) + r_ur * r_ur + s.u.w(j) * s.u.w(j));
    const double w = s.u.w(j);
    quart = 0.25 * (w * w) * (w * w) / (r * r);
  };
  int j0 = 0;
  while (j0 < n && g.r(j0) < radius) ++j0;
  if (j0 >= n) return {};
  // radius at or inside the first node: full-domain trapezoid anchored at the
  // zero origin sample, where the densities vanish and no end correction
  // applies; otherwise half-weight the aligned left end and correct it.
  const bool full_domain = (j0 == 0);
  double sum_e0 = 0.0, sum_q = 0.0;
  for (int j = j0; j < n; ++j) {
    double e0, q;
    density(j, e0, q);
    const double wgt = ((j == j0 && !full_domain) || j + 1 == n) ? 0.5 : 1.0;
    sum_e0 += wgt * e0;
    sum_q += wgt * q;
  }
  if (!full_domain && j0 + 2 < n) {
    // left-end Euler-Maclaurin correction from a one-sided O(h^2) derivative
    double e0a, qa, e0b, qb, e0c, qc;
    density(j0, e0a, qa);
    density(j0 + 1, e0b, qb);
    density(j0 + 2, e0c, qc);
    const double de0 = (-1.5 * e0a + 2.0 * e0b - 0.5 * e0c) / g.h;
    const double dq = (-1.5 * qa + 2.0 * qb - 0.5 * qc) / g.h;
    sum_e0 += g.h / 12.0 * de0;
    sum_q += g.h / 12.0 * dq;
  }
  ExteriorEnergy out;
  out.free = four_pi * g.h * sum_e0;
  out.nonlinear = out.free - four_pi * g.h * sum_q;
  return out;
}

// ---- trajectory diagnostics -------------------------------------------------

// One recorded sample of every scalar the classification machinery reads.
// CSV schema v1, columns in declaration order.
struct DiagnosticsSample {
  double t = 0.0;
  double E = 0.0;
  double J_u = 0.0;
  double K0 = 0.0;
  double K2 = 0.0;
  double dQ = 0.0;
  int sigma = +1;       // minimizing sign of d_sigma
  int sign_value = 0;   // S value: +1 / -1 / 0 = inside-ball
  int sign_anomaly = 0; // branches of S disagreed on the overlap
  double lam = 0.0;
  double lamdot = 0.0;
  double lam_plus = 0.0;
  double lam_minus = 0.0;
  double h1_norm = 0.0;     // ||u||_{H^1}
  double l4_norm = 0.0;     // ||u||_{L^4}
  double grad_sq_u = 0.0;   // ||grad u||^2 (kinetic integrand)
  double udot_l2_sq = 0.0;  // ||udot||^2
  double Vw = 0.0;          // virial, w == 1 unless a cutoff is active
};

inline DiagnosticsSample diagnose(const State& s, const NlkgSystem& sys,
                                  const ThresholdParams& p,
                                  const std::optional<VirialCutoff>& cutoff = std::nullopt) {
  DiagnosticsSample d;
  d.t = s.t;
  const StaticFunctionals f = static_functionals(s.u);
  d.udot_l2_sq = l2_sq(s.udot);
  d.E = 0.5 * d.udot_l2_sq + f.J;
  d.J_u = f.J;
  d.K0 = f.K0;
  d.K2 = f.K2;
  d.h1_norm = std::sqrt(f.h1);
  d.l4_norm = std::pow(f.l4, 0.25);
  d.grad_sq_u = f.grad;
  const DistanceResult dist = distance_dQ(s, sys, p);
  d.dQ = dist.dQ;
  d.sigma = dist.sigma;
  d.lam = dist.decomp.lam;
  d.lamdot = dist.decomp.lamdot;
  d.lam_plus = dist.decomp.lam_plus(sys.spec.k);
  d.lam_minus = dist.decomp.lam_minus(sys.spec.k);
  const SignResult sr = sign_functional_from(d.dQ, d.lam, d.K0, d.E - sys.gs.JQ, p);
  d.sign_value = sr.value;
  d.sign_anomaly = sr.anomaly ? 1 : 0;
  d.Vw = virial(s, cutoff);
  return d;
}

// True iff the trapezoid quadrature of ||grad u||^2 over the recorded window
// is at most mu^2 (the low-kinetic scattering certificate hypothesis).
inline bool low_kinetic_check(const std::vector<DiagnosticsSample>& window, double mu) {
  if (window.size() < 2) throw std::invalid_argument("low_kinetic_check: window too short");
  double integral = 0.0;
  for (size_t i = 0; i + 1 < window.size(); ++i) {
    const double dt = window[i + 1].t - window[i].t;
    integral += 0.5 * dt * (window[i].grad_sq_u + window[i + 1].grad_sq_u);
  }
  return integral <= mu * mu;
}

// ---- delta_E calibration ----------------------------------------------------

// Random energy-space perturbation around Q with a prescribed linearized
// norm. Supported in r <= 10 (smooth window) so perturbed data stay inside
// the propagation guard of long runs.
inline std::pair<RadialField, RadialField> random_perturbation(const NlkgSystem& sys,
                                                               std::mt19937_64& rng,
                                                               double target_norm) {
  std::normal_distribution<double> dist;
  const RadialGrid& g = sys.gs.Q.grid;
  RadialField gamma(g), gammadot(g);
  for (int m = 1; m <= 10; ++m) {
    axpy(gamma, dist(rng) / (m * m), sine_mode(g, m));
    axpy(gammadot, dist(rng) / (m * m), sine_mode(g, m));
  }
  for (int j = 0; j < g.n; ++j) {
    const double window = chi_cutoff(g.r(j) / 5.0) * std::exp(-0.08 * g.r(j));
    gamma.values[j] *= window;
    gammadot.values[j] *= window;
  }
  gamma.values[g.n - 1] = gammadot.values[g.n - 1] = 0.0;
  axpy(gamma, -inner(gamma, sys.spec.rho), sys.spec.rho);
  axpy(gammadot, -inner(gammadot, sys.spec.rho), sys.spec.rho);
  const double lam = dist(rng), lamdot = dist(rng);
  const double k2 = sys.spec.k * sys.spec.k;
  const double norm_sq = 0.5 * (k2 * lam * lam + quadratic_form(sys.L, gamma) +
                                lamdot * lamdot + l2_sq(gammadot));
  const double scale = target_norm / std::sqrt(norm_sq);
  RadialField v = gamma;
  v *= scale;
  axpy(v, scale * lam, sys.spec.rho);
  RadialField vdot = gammadot;
  vdot *= scale;
  axpy(vdot, scale * lamdot, sys.spec.rho);
  return {std::move(v), std::move(vdot)};
}

// Largest dyadic delta such that |C(v)| <= ||v||_E^2 / 2 over `samples`
// random perturbations with ||v||_E <= 4 delta.
inline double calibrate_delta_E(const NlkgSystem& sys, int samples = 10000,
                                unsigned long long seed = 20120521ULL) {
  for (double delta = 1.0; delta > 1.0 / 1024.0; delta *= 0.5) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 4.0 * delta);
    bool ok = true;
    for (int i = 0; i < samples && ok; ++i) {
      const double target = unif(rng);
      auto [v, vdot] = random_perturbation(sys, rng, target);
      (void)vdot;
      const double c = cubic_correction(v, sys.gs);
      ok = std::abs(c) <= 0.5 * target * target;
    }
    if (ok) return delta;
  }
  return 1.0 / 1024.0;
}

} // namespace nlkg
