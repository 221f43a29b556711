#pragma once

// High-level experiments over the flow: the nine-set classification, the
// one-pass and ejection auditors, separatrix bisection, threshold orbits
// approaching Q, the (lambda, lambdot) phase portrait, and the randomized
// one-pass ensemble.
//
// Separating sets are located dynamically by fate bisection. An equivalent
// construction solves the reduced integral equations of the (lambda, gamma)
// coordinates with the growing mode removed by the stability condition
// lamdot(0) = -k lam(0) - int_0^inf e^{-ks} N_rho(v) ds; the bisection
// route needs no dispersive estimates and is what runs here.

#include <atomic>
#include <exception>
#include <mutex>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "nlkg/evolution.hpp"
#include "nlkg/functionals.hpp"

namespace nlkg {

namespace detail {

inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      try {
        for (int i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// least-squares slope and R^2 of y against x
struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  int m = 0;
};

inline LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.m = static_cast<int>(x.size());
  if (f.m < 2) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < f.m; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  const double den = f.m * sxx - sx * sx;
  f.slope = (f.m * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / f.m;
  const double ss_tot = syy - sy * sy / f.m;
  double ss_res = 0.0;
  for (int i = 0; i < f.m; ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
  }
  f.r2 = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

} // namespace detail

// ---- nine-set classification ------------------------------------------------

// Fate-pair index per the nine-set decomposition; 0 when either side is
// undetermined. Pairs are (backward, forward).
inline int nine_set_index(FateKind backward, FateKind forward) {
  auto cls = [](FateKind k) -> int {
    switch (k) {
      case FateKind::ScatterToZero: return 0;
      case FateKind::BlowUp: return 1;
      case FateKind::TrappedByPlusQ:
      case FateKind::TrappedByMinusQ: return 2;
      default: return -1;
    }
  };
  const int b = cls(backward), f = cls(forward);
  if (b < 0 || f < 0) return 0;
  static const int table[3][3] = {
      // f: scatter blow trapped      b:
      {1, 4, 5},  // scatter
      {3, 2, 7},  // blow-up
      {6, 8, 9},  // trapped
  };
  return table[b][f];
}

struct NineSetResult {
  Fate backward;
  Fate forward;
  int set_index = 0;
  double energy_excess = 0.0;
  bool excess_above_eps_star = false; // warning flag, not a refusal
  std::string descriptor;
};

inline NineSetResult classify_nine(const State& s0, double horizon, const ThresholdParams& p,
                                   const NlkgSystem& sys, const IntegratorParams& ip = {}) {
  NineSetResult r;
  r.energy_excess = energy(s0) - sys.gs.JQ;
  r.excess_above_eps_star = r.energy_excess >= p.eps_star * p.eps_star;
  r.forward = evolve(s0, horizon, p, sys, ip).fate;
  r.backward = evolve_backward(s0, horizon, p, sys, ip).fate;
  r.set_index = nine_set_index(r.backward.kind, r.forward.kind);
  return r;
}

// ---- one-pass audit -----------------------------------------------------------

struct OnePassReport {
  double R = 0.0;
  struct Crossing {
    double t;
    bool upward; // d_Q crossed R from below
  };
  std::vector<Crossing> crossings;
  int returns_after_exit = 0; // downward crossings after the first exit
  int sign_flips = 0;         // S flips outside B(±Q)
  bool pass = false;
};

// Scans d_Q(t) for crossings of level R. The one-pass property: after the
// first exit (upward crossing), d_Q never returns to R and the sign S stays
// fixed. Pre-exit samples sit below the eigenmode-dominance region where the
// sign is not yet meaningful, so flips are counted from the exit on (from
// the start when the record never dips below R).
inline OnePassReport one_pass_audit(const TrajectoryRecord& rec, double R,
                                    const ThresholdParams& p) {
  (void)p;
  OnePassReport rep;
  rep.R = R;
  bool exited = !rec.samples.empty() && rec.samples.front().dQ >= R;
  int prev_sign = 0;
  for (size_t i = 1; i < rec.samples.size(); ++i) {
    const auto& a = rec.samples[i - 1];
    const auto& b = rec.samples[i];
    if (a.dQ < R && b.dQ >= R) {
      rep.crossings.push_back({b.t, true});
      exited = true;
      prev_sign = 0; // sign tracking restarts at the exit
    } else if (a.dQ >= R && b.dQ < R) {
      rep.crossings.push_back({b.t, false});
      if (exited) ++rep.returns_after_exit;
    }
    if (exited && b.sign_value != 0) {
      if (prev_sign != 0 && b.sign_value != prev_sign) ++rep.sign_flips;
      prev_sign = b.sign_value;
    }
  }
  rep.pass = rep.returns_after_exit == 0 && rep.sign_flips == 0;
  return rep;
}

// ---- ejection audit -----------------------------------------------------------

struct EjectionFit {
  double t_a = 0.0, t_b = 0.0; // episode window
  double rate = 0.0;           // fitted d/dt log d_Q
  double k_target = 0.0;
  double rel_err = 1.0;
  int s_sign = 0;              // ejection sign s = -sign(lambda)
  double margin = 0.0;         // min over window of min_s sK_s - (d_Q - C_* d_Q(t_a))
  bool sign_relation_ok = false;
  int samples_used = 0;
};

// Least-squares fit of log d_Q over the exit episode d_Q in [R, delta_X],
// checked against the hyperbolic rate k; also audits d_Q ~ -s lambda and
// the variational K-margin of the ejection mechanism.
inline EjectionFit ejection_audit(const TrajectoryRecord& rec, const ThresholdParams& p,
                                  const NlkgSystem& sys, double R = -1.0) {
  if (R <= 0.0) R = p.R_star;
  const auto& ss = rec.samples;
  size_t i0 = ss.size();
  for (size_t i = 0; i < ss.size(); ++i) {
    if (ss[i].dQ >= R) {
      i0 = i;
      break;
    }
  }
  if (i0 == ss.size()) throw std::runtime_error("ejection_audit: no exit episode found");
  size_t i1 = i0;
  while (i1 + 1 < ss.size() && ss[i1].dQ < p.delta_X) ++i1;
  if (ss[i1].dQ < p.delta_X)
    throw std::runtime_error("ejection_audit: episode never reaches delta_X");

  EjectionFit fit;
  fit.t_a = ss[i0].t;
  fit.t_b = ss[i1].t;
  fit.k_target = sys.spec.k;
  std::vector<double> ts, logd;
  int lam_sign = 0;
  bool lam_sign_constant = true;
  double ratio_lo = 1e9, ratio_hi = 0.0;
  double margin = 1e300;
  const double d_a = ss[i0].dQ;
  for (size_t i = i0; i <= i1; ++i) {
    ts.push_back(ss[i].t);
    logd.push_back(std::log(ss[i].dQ));
    const int sgn = signum(ss[i].lam);
    if (lam_sign == 0) lam_sign = sgn;
    if (sgn != lam_sign) lam_sign_constant = false;
    const double ratio = ss[i].dQ / (sys.spec.k * std::abs(ss[i].lam) + 1e-300);
    ratio_lo = std::min(ratio_lo, ratio);
    ratio_hi = std::max(ratio_hi, ratio);
    const double sK = std::min(-lam_sign * ss[i].K0, -lam_sign * ss[i].K2);
    margin = std::min(margin, sK - (ss[i].dQ - p.C_star * d_a));
  }
  fit.samples_used = static_cast<int>(ts.size());
  detail::LineFit lf = detail::line_fit(ts, logd);
  fit.rate = lf.slope;
  fit.rel_err = std::abs(fit.rate - fit.k_target) / fit.k_target;
  fit.s_sign = -lam_sign;
  // d_Q ~ -s lambda: lambda keeps one sign and d_Q/(k|lambda|) stays within
  // the dominance window [1/2, sqrt(2)] up to slack
  fit.sign_relation_ok = lam_sign_constant && ratio_lo > 0.3 && ratio_hi < 2.0;
  fit.margin = margin;
  return fit;
}

// ---- separatrix bisection -------------------------------------------------------

using DataFamily = std::function<State(double)>;

struct SeparatrixResult {
  double a_star = 0.0;
  double window = 0.0;
  TrajectoryRecord record; // trajectory at a_star in the probed direction
  // bisection log: (bracket window, trapped time near ±Q) per iteration
  std::vector<std::pair<double, double>> shadowing;
};

// First time d_Q exceeds the level (or the last sample time).
inline double trapped_time(const TrajectoryRecord& rec, double level) {
  for (const auto& s : rec.samples)
    if (s.dQ > level) return s.t;
  return rec.samples.empty() ? 0.0 : rec.samples.back().t;
}

// Bisection on the family parameter between a scattering and a blow-up
// datum; the separating parameter approximates a center-stable manifold
// point in the probed time direction.
inline SeparatrixResult bisect_separatrix(const DataFamily& family, double a_lo, double a_hi,
                                          Direction dir, double horizon,
                                          const ThresholdParams& p, const NlkgSystem& sys,
                                          const IntegratorParams& ip = {},
                                          double window_target = 1e-12) {
  auto run = [&](double a) {
    return (dir == Direction::Forward) ? evolve(family(a), horizon, p, sys, ip)
                                       : evolve_backward(family(a), horizon, p, sys, ip);
  };
  auto fate_lo = run(a_lo).fate.kind;
  auto fate_hi = run(a_hi).fate.kind;
  auto decisive = [](FateKind k) {
    return k == FateKind::ScatterToZero || k == FateKind::BlowUp;
  };
  if (!decisive(fate_lo) || !decisive(fate_hi) || fate_lo == fate_hi)
    throw std::invalid_argument("bisect_separatrix: endpoints do not bracket the separatrix");

  SeparatrixResult res;
  TrajectoryRecord mid_rec;
  while (a_hi - a_lo > window_target) {
    const double mid = 0.5 * (a_lo + a_hi);
    if (mid <= a_lo || mid >= a_hi) break; // machine limit
    mid_rec = run(mid);
    res.shadowing.emplace_back(a_hi - a_lo, trapped_time(mid_rec, p.delta_S));
    const FateKind fk = mid_rec.fate.kind;
    if (!decisive(fk)) break; // still trapped at this horizon: manifold point
    if (fk == fate_lo)
      a_lo = mid;
    else
      a_hi = mid;
  }
  res.a_star = 0.5 * (a_lo + a_hi);
  res.window = a_hi - a_lo;
  res.record = run(res.a_star);
  return res;
}

// ---- threshold orbits W± ---------------------------------------------------------

struct ThresholdOrbit {
  int sign = +1;  // +: forward blow-up (W+ type), -: forward scattering (W- type)
  double s = 0.0; // rho amplitude of the datum
  double c = 0.0; // udot amplitude solving E = J(Q)
  TrajectoryRecord forward;
  TrajectoryRecord backward;
  double backward_rate = 0.0; // fitted decay rate of d_Q, target k
  double lam_minus0 = 0.0;    // residual stable-mode seed of the construction
};

// Data (Q + s rho, c rho) with c root-solved so that E = J(Q) exactly and the
// initialization is along the unstable mode (lambda_- = s - c/k = O(s^2)).
// Backward evolution approaches Q exponentially at rate ~ k until the O(s^2)
// stable-mode seed takes over; the fit must land within 25% of k.
inline ThresholdOrbit construct_threshold_W(const ThresholdParams& p, const NlkgSystem& sys,
                                            int sign, double s_amp = 0.008,
                                            const IntegratorParams& ip = {},
                                            double horizon_fwd = 20.0,
                                            double horizon_bwd = 6.0) {
  if (sign != +1 && sign != -1) throw std::invalid_argument("construct_threshold_W: sign");
  ThresholdOrbit orb;
  orb.sign = sign;
  orb.s = sign * std::abs(s_amp);
  const RadialGrid& g = sys.gs.Q.grid;
  const double k = sys.spec.k;

  auto datum = [&](double c) {
    RadialField u = sys.gs.Q;
    axpy(u, orb.s, sys.spec.rho);
    RadialField udot(g);
    axpy(udot, c, sys.spec.rho);
    return State{std::move(u), std::move(udot), 0.0};
  };
  auto excess = [&](double c) { return energy(datum(c)) - sys.gs.JQ; };

  // bisect c on the branch with sign(c) = sign(s); excess is monotone in c
  // on that side
  double c_lo = 0.0, c_hi = 2.0 * k * orb.s;
  if (sign < 0) std::swap(c_lo, c_hi);
  double f_lo = excess(c_lo), f_hi = excess(c_hi);
  if (f_lo * f_hi > 0.0) throw std::runtime_error("construct_threshold_W: root not bracketed");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (c_lo + c_hi);
    if (mid == c_lo || mid == c_hi) break;
    const double fm = excess(mid);
    if ((fm < 0.0) == (f_lo < 0.0)) {
      c_lo = mid;
      f_lo = fm;
    } else {
      c_hi = mid;
      f_hi = fm;
    }
  }
  orb.c = 0.5 * (c_lo + c_hi);
  orb.lam_minus0 = orb.s - orb.c / k;

  State s0 = datum(orb.c);
  orb.forward = evolve(s0, horizon_fwd, p, sys, ip);
  IntegratorParams ipb = ip;
  ipb.run_to_horizon = true;
  orb.backward = evolve_backward(s0, horizon_bwd, p, sys, ipb);

  // fit log d_Q on the decaying stretch, from the start down to just before
  // the minimum
  double d_min = 1e300;
  double t_min = 0.0;
  for (const auto& smp : orb.backward.samples)
    if (smp.dQ < d_min) {
      d_min = smp.dQ;
      t_min = smp.t;
    }
  std::vector<double> ts, logd;
  for (const auto& smp : orb.backward.samples) {
    if (smp.t > t_min - 0.15) break;
    ts.push_back(smp.t);
    logd.push_back(std::log(smp.dQ));
  }
  if (ts.size() < 6) throw std::runtime_error("construct_threshold_W: decay window too short");
  orb.backward_rate = -detail::line_fit(ts, logd).slope;
  if (std::abs(orb.backward_rate - k) > 0.25 * k)
    throw std::runtime_error("construct_threshold_W: backward approach rate off by > 25%");
  return orb;
}

// ---- phase portrait ---------------------------------------------------------------

struct PortraitNode {
  double lam0 = 0.0, lamdot0 = 0.0;
  FateKind fate_fwd = FateKind::Undetermined;
  FateKind fate_bwd = FateKind::Undetermined;
  int set_index = 0;
};

struct PortraitResult {
  std::vector<PortraitNode> nodes; // row-major over (lam0, lamdot0)
  int n_lam = 0, n_lamdot = 0;
  double lam_span = 0.0, lamdot_span = 0.0;
};

inline State mode_data(const NlkgSystem& sys, double lam0, double lamdot0) {
  RadialField u = sys.gs.Q;
  axpy(u, lam0, sys.spec.rho);
  RadialField udot(sys.gs.Q.grid);
  axpy(udot, lamdot0, sys.spec.rho);
  return State{std::move(u), std::move(udot), 0.0};
}

// Classifies the (lambda, lambdot, gamma = 0) plane around Q, both time
// directions, in parallel over nodes.
inline PortraitResult phase_portrait(const NlkgSystem& sys, const ThresholdParams& p,
                                     int n_lam, int n_lamdot, double lam_span,
                                     double lamdot_span, double horizon,
                                     const IntegratorParams& ip = {}, int threads = 1) {
  PortraitResult out;
  out.n_lam = n_lam;
  out.n_lamdot = n_lamdot;
  out.lam_span = lam_span;
  out.lamdot_span = lamdot_span;
  out.nodes.resize(static_cast<size_t>(n_lam) * n_lamdot);
  detail::parallel_for(n_lam * n_lamdot, threads, [&](int idx) {
    const int i = idx / n_lamdot, j = idx % n_lamdot;
    PortraitNode& node = out.nodes[idx];
    node.lam0 = (n_lam == 1) ? 0.0 : -lam_span + 2.0 * lam_span * i / (n_lam - 1);
    node.lamdot0 = (n_lamdot == 1) ? 0.0 : -lamdot_span + 2.0 * lamdot_span * j / (n_lamdot - 1);
    State s0 = mode_data(sys, node.lam0, node.lamdot0);
    node.fate_fwd = evolve(s0, horizon, p, sys, ip).fate.kind;
    node.fate_bwd = evolve_backward(s0, horizon, p, sys, ip).fate.kind;
    node.set_index = nine_set_index(node.fate_bwd, node.fate_fwd);
  });
  return out;
}

// Forward blow-up/scatter boundary through the origin: for every lam0 column,
// locate the lamdot midpoint between adjacent rows with differing decisive
// forward fates, then fit lamdot = slope * lam0 near the origin. The
// center-stable tangency predicts slope = -k.
inline detail::LineFit portrait_boundary_slope(const PortraitResult& pr, double lam_window) {
  std::vector<double> xs, ys;
  for (int i = 0; i < pr.n_lam; ++i) {
    const double lam0 = pr.nodes[static_cast<size_t>(i) * pr.n_lamdot].lam0;
    if (std::abs(lam0) > lam_window) continue;
    for (int j = 0; j + 1 < pr.n_lamdot; ++j) {
      const auto& a = pr.nodes[static_cast<size_t>(i) * pr.n_lamdot + j];
      const auto& b = pr.nodes[static_cast<size_t>(i) * pr.n_lamdot + j + 1];
      const bool a_blow = a.fate_fwd == FateKind::BlowUp;
      const bool b_blow = b.fate_fwd == FateKind::BlowUp;
      const bool a_scat = a.fate_fwd == FateKind::ScatterToZero;
      const bool b_scat = b.fate_fwd == FateKind::ScatterToZero;
      if ((a_blow && b_scat) || (a_scat && b_blow)) {
        xs.push_back(lam0);
        ys.push_back(0.5 * (a.lamdot0 + b.lamdot0));
      }
    }
  }
  return detail::line_fit(xs, ys);
}

// ---- nine-set witnesses -----------------------------------------------------------

struct WitnessResult {
  int target_set = 0;
  NineSetResult outcome;
  std::string datum;
  bool ok = false;
};

// Concrete initial data for each of the nine sets: the explicit eigenmode
// constructions for sets 1-4, curve bisection between them for sets 5-8
// (the separating point is trapped in the probed direction), and bisection
// on the time-symmetric line udot = 0 for set 9.
inline std::vector<WitnessResult> nine_set_witnesses(const ThresholdParams& p,
                                                     const NlkgSystem& sys,
                                                     const IntegratorParams& ip = {},
                                                     double theta_eps = -1.0,
                                                     double horizon = 20.0,
                                                     double bisect_window = 1e-11) {
  if (theta_eps <= 0.0) theta_eps = 0.1 * (0.5 * p.eps_star); // theta = 0.1, eps = eps_star/2
  const double k = sys.spec.k;
  std::vector<WitnessResult> out;

  auto classify_at = [&](const State& s0, double T_fwd, double T_bwd) {
    NineSetResult r;
    r.energy_excess = energy(s0) - sys.gs.JQ;
    r.excess_above_eps_star = r.energy_excess >= p.eps_star * p.eps_star;
    r.forward = evolve(s0, T_fwd, p, sys, ip).fate;
    r.backward = evolve_backward(s0, T_bwd, p, sys, ip).fate;
    r.set_index = nine_set_index(r.backward.kind, r.forward.kind);
    return r;
  };
  char buf[160];

  // sets 1-4: lambda(0) = ±theta_eps (cosh family) and lamdot(0) = ±k theta_eps
  // (sinh family)
  struct Direct {
    int set;
    double lam0, lamdot0;
  };
  const Direct direct[] = {
      {1, -theta_eps, 0.0},      // scatter both ways
      {2, +theta_eps, 0.0},      // blow up both ways
      {3, 0.0, -k * theta_eps},  // scatter forward, blow up backward
      {4, 0.0, +k * theta_eps},  // blow up forward, scatter backward
  };
  for (const auto& d : direct) {
    WitnessResult w;
    w.target_set = d.set;
    std::snprintf(buf, sizeof(buf), "mode lam0=%.6g lamdot0=%.6g", d.lam0, d.lamdot0);
    w.datum = buf;
    w.outcome = classify_at(mode_data(sys, d.lam0, d.lamdot0), horizon, horizon);
    w.ok = w.outcome.set_index == d.set;
    out.push_back(w);
  }

  // sets 5-8: bisect the segment between two direct witnesses on the fate of
  // one time direction; the separating datum is trapped in that direction at
  // a shadowing-limited horizon and keeps the other endpoint fate on the
  // other side.
  struct Curve {
    int set;
    double lam_a, ld_a; // endpoint A (taken from the direct data)
    double lam_b, ld_b; // endpoint B
    Direction bisect_dir;
  };
  const Curve curves[] = {
      // T+ ∩ S-: between set-4 (B+ S-) and set-1 (S+ S-), forward bisection
      {5, 0.0, +k * theta_eps, -theta_eps, 0.0, Direction::Forward},
      // T- ∩ S+: between set-3 (S+ B-) and set-1 (S+ S-), backward bisection
      {6, 0.0, -k * theta_eps, -theta_eps, 0.0, Direction::Backward},
      // T+ ∩ B-: between set-2 (B+ B-) and set-3 (S+ B-), forward bisection
      {7, +theta_eps, 0.0, 0.0, -k * theta_eps, Direction::Forward},
      // T- ∩ B+: between set-2 (B+ B-) and set-4 (B+ S-), backward bisection
      {8, +theta_eps, 0.0, 0.0, +k * theta_eps, Direction::Backward},
  };
  for (const auto& c : curves) {
    WitnessResult w;
    w.target_set = c.set;
    DataFamily family = [&sys, c](double a) {
      return mode_data(sys, (1.0 - a) * c.lam_a + a * c.lam_b,
                       (1.0 - a) * c.ld_a + a * c.ld_b);
    };
    SeparatrixResult sep =
        bisect_separatrix(family, 0.0, 1.0, c.bisect_dir, horizon, p, sys, ip, bisect_window);
    // trapped-direction horizon limited by the achieved shadowing time
    const double tau = trapped_time(sep.record, p.delta_S);
    const double T_trap = std::max(p.T_tail + 0.5, tau - 0.2);
    State s0 = family(sep.a_star);
    NineSetResult r;
    r.energy_excess = energy(s0) - sys.gs.JQ;
    r.excess_above_eps_star = r.energy_excess >= p.eps_star * p.eps_star;
    if (c.bisect_dir == Direction::Forward) {
      r.forward = evolve(s0, T_trap, p, sys, ip).fate;
      r.backward = evolve_backward(s0, horizon, p, sys, ip).fate;
    } else {
      r.forward = evolve(s0, horizon, p, sys, ip).fate;
      r.backward = evolve_backward(s0, T_trap, p, sys, ip).fate;
    }
    r.set_index = nine_set_index(r.backward.kind, r.forward.kind);
    std::snprintf(buf, sizeof(buf), "curve set%d->set%d a*=%.12g window=%.3g", c.set, c.set,
                  sep.a_star, sep.window);
    w.datum = buf;
    w.outcome = r;
    w.ok = r.set_index == c.set;
    out.push_back(w);
  }

  // set 9: bisection on the time-symmetric line (Q + a rho, 0); the
  // separating datum is trapped in both directions by the t -> -t symmetry
  {
    WitnessResult w;
    w.target_set = 9;
    DataFamily family = [&sys](double a) { return mode_data(sys, a, 0.0); };
    SeparatrixResult sep = bisect_separatrix(family, -theta_eps, +theta_eps,
                                             Direction::Forward, horizon, p, sys, ip,
                                             bisect_window);
    const double tau = trapped_time(sep.record, p.delta_S);
    const double T_trap = std::max(p.T_tail + 0.5, tau - 0.2);
    State s0 = family(sep.a_star);
    NineSetResult r;
    r.energy_excess = energy(s0) - sys.gs.JQ;
    r.excess_above_eps_star = r.energy_excess >= p.eps_star * p.eps_star;
    r.forward = evolve(s0, T_trap, p, sys, ip).fate;
    r.backward = evolve_backward(s0, T_trap, p, sys, ip).fate;
    r.set_index = nine_set_index(r.backward.kind, r.forward.kind);
    std::snprintf(buf, sizeof(buf), "symmetric-line a*=%.12g window=%.3g", sep.a_star,
                  sep.window);
    w.datum = buf;
    w.outcome = r;
    w.ok = r.set_index == 9;
    out.push_back(w);
  }
  return out;
}

// ---- randomized one-pass ensemble ----------------------------------------------

struct EnsembleReport {
  int n_data = 0;
  int n_exited = 0;          // trajectories that crossed R from below
  int total_returns = 0;     // one-pass violations
  int total_sign_flips = 0;  // sign-persistence violations
  int fate_scatter = 0, fate_blowup = 0, fate_other = 0;
  int sign_fate_mismatch = 0; // scatter with S=-1 or blow-up with S=+1 at the end
  std::vector<OnePassReport> reports;
};

// Random datum near Q with energy excess below eps_star^2 and d_Q(0) inside
// the R-ball (rejection sampling; the eigenmode part dominates at this
// excess, as it must).
inline State sample_near_Q(const NlkgSystem& sys, const ThresholdParams& p,
                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.3, 0.8);
  for (int tries = 0; tries < 1000; ++tries) {
    auto [v, vdot] = random_perturbation(sys, rng, unif(rng) * p.R_star);
    RadialField u = sys.gs.Q;
    u += v;
    State st{std::move(u), std::move(vdot), 0.0};
    if (energy(st) - sys.gs.JQ >= p.eps_star * p.eps_star) continue;
    DistanceResult d = distance_dQ(st, sys, p);
    if (d.dQ >= 0.9 * p.R_star) continue;
    return st;
  }
  throw std::runtime_error("sample_near_Q: rejection sampling failed");
}

inline EnsembleReport one_pass_ensemble(int n_data, unsigned long long seed, double horizon,
                                        const ThresholdParams& p, const NlkgSystem& sys,
                                        const IntegratorParams& ip_in = {}, int threads = 1) {
  EnsembleReport rep;
  rep.n_data = n_data;
  rep.reports.resize(n_data);
  std::vector<int> exited(n_data, 0), flips(n_data, 0), returns(n_data, 0), fates(n_data, 0),
      mismatch(n_data, 0);
  IntegratorParams ip = ip_in;
  ip.run_to_horizon = true;
  detail::parallel_for(n_data, threads, [&](int i) {
    std::mt19937_64 rng(seed + 1000003ULL * static_cast<unsigned long long>(i));
    State s0 = sample_near_Q(sys, p, rng);
    TrajectoryRecord rec = evolve(s0, horizon, p, sys, ip);
    OnePassReport opr = one_pass_audit(rec, p.R_star, p);
    bool crossed_up = false;
    for (const auto& c : opr.crossings)
      if (c.upward) crossed_up = true;
    exited[i] = crossed_up ? 1 : 0;
    returns[i] = opr.returns_after_exit;
    flips[i] = opr.sign_flips;
    switch (rec.fate.kind) {
      case FateKind::ScatterToZero: fates[i] = 1; break;
      case FateKind::BlowUp: fates[i] = 2; break;
      default: fates[i] = 0; break;
    }
    // fate-sign consistency at the final outside-ball sample
    int last_sign = 0;
    for (const auto& smp : rec.samples)
      if (smp.sign_value != 0) last_sign = smp.sign_value;
    if ((fates[i] == 1 && last_sign != +1) || (fates[i] == 2 && last_sign != -1)) mismatch[i] = 1;
    rep.reports[i] = std::move(opr);
  });
  for (int i = 0; i < n_data; ++i) {
    rep.n_exited += exited[i];
    rep.total_returns += returns[i];
    rep.total_sign_flips += flips[i];
    rep.sign_fate_mismatch += mismatch[i];
    if (fates[i] == 1)
      ++rep.fate_scatter;
    else if (fates[i] == 2)
      ++rep.fate_blowup;
    else
      ++rep.fate_other;
  }
  return rep;
}

} // namespace nlkg
