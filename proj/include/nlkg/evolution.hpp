#pragma once

// Time integration of  udotdot = Delta u - u + u^3  by Strang splitting with
// the exact sine-spectral free flow, plus the blow-up / scattering / trapping
// detectors and the diagnostic trajectory record.

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "nlkg/functionals.hpp"
#include "nlkg/radial_core.hpp"

namespace nlkg {

enum class FateKind { ScatterToZero, BlowUp, TrappedByPlusQ, TrappedByMinusQ, Undetermined };

inline const char* to_string(FateKind k) {
  switch (k) {
    case FateKind::ScatterToZero: return "ScatterToZero";
    case FateKind::BlowUp: return "BlowUp";
    case FateKind::TrappedByPlusQ: return "TrappedByPlusQ";
    case FateKind::TrappedByMinusQ: return "TrappedByMinusQ";
    default: return "Undetermined";
  }
}

struct Fate {
  FateKind kind = FateKind::Undetermined;
  // witnesses (NaN when not applicable)
  double blowup_T_star = std::numeric_limits<double>::quiet_NaN();
  double blowup_alpha = std::numeric_limits<double>::quiet_NaN();
  double udot_u_growth = std::numeric_limits<double>::quiet_NaN(); // <u|udot> at declaration
  double scatter_onset = std::numeric_limits<double>::quiet_NaN();
  double trapping_residual = std::numeric_limits<double>::quiet_NaN(); // max d_Q over the tail
};

struct Event {
  enum class Kind { BallEntry, BallExit, SignFlip, BlowupDeclared, ScatterDeclared, Horizon };
  double t = 0.0;
  Kind kind = Kind::Horizon;
};

inline const char* to_string(Event::Kind k) {
  switch (k) {
    case Event::Kind::BallEntry: return "ball-entry";
    case Event::Kind::BallExit: return "ball-exit";
    case Event::Kind::SignFlip: return "sign-flip";
    case Event::Kind::BlowupDeclared: return "blowup-declared";
    case Event::Kind::ScatterDeclared: return "scatter-declared";
    default: return "horizon";
  }
}

enum class Direction { Forward, Backward };

struct TrajectoryRecord {
  std::vector<DiagnosticsSample> samples; // strictly increasing in |t|
  std::vector<Event> events;
  Fate fate;
  Direction direction = Direction::Forward;
  double energy_drift = 0.0; // max |E(t) - E(0)| over recorded samples
};

struct IntegratorParams {
  double dt_max = 2e-3; // keeps the relative energy drift below 1e-6 over [0,20]
  double dt_min = 1e-6;
  double kick_budget = 0.2; // dt <= kick_budget / ||u||_inf^2
  double sample_every = 0.02;
  bool run_to_horizon = false; // keep integrating after a scatter declaration
};

// One Strang step: half free flow, nonlinear kick on udot, half free flow.
// Time-reversible; the kick acts pointwise in the u-representation.
inline State step(const State& s, double dt) {
  State mid = free_propagate(s, 0.5 * dt);
  for (int j = 0; j < mid.u.n(); ++j) {
    const double u = mid.u.values[j];
    mid.udot.values[j] += dt * u * u * u;
  }
  return free_propagate(mid, 0.5 * dt);
}

namespace detail {

// n fused Strang steps of equal dt: free(dt/2) kick [free(dt) kick]^{n-1} free(dt/2).
inline void step_span(State& s, double dt, int n) {
  s = free_propagate(s, 0.5 * dt);
  for (int i = 0;; ++i) {
    for (int j = 0; j < s.u.n(); ++j) {
      const double u = s.u.values[j];
      s.udot.values[j] += dt * u * u * u;
    }
    if (i + 1 >= n) break;
    s = free_propagate(s, dt);
  }
  s = free_propagate(s, 0.5 * dt);
}

inline double free_norm(const State& a, const State& b) {
  State diff = a;
  diff.u -= b.u;
  diff.udot -= b.udot;
  return std::sqrt(free_energy_quadratic(diff));
}

} // namespace detail

// Power-law fit ||u(t)||_H ~ c (T* - t)^{-alpha} over the last decade of
// samples, with T* estimated from the ODE proxy u ~ sqrt(2)/(T*-t).
inline Fate detect_blowup(const std::vector<DiagnosticsSample>& samples, double t_end,
                          double sup_u_end) {
  Fate f;
  f.kind = FateKind::BlowUp;
  if (samples.empty()) return f;
  const double T_star = t_end + std::sqrt(2.0) / std::max(sup_u_end, 1.0);
  f.blowup_T_star = T_star;
  const double h1_end = samples.back().h1_norm;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& s : samples) {
    if (s.h1_norm < 0.1 * h1_end || s.t >= T_star) continue;
    const double x = -std::log(T_star - s.t);
    const double y = std::log(s.h1_norm);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m >= 3) f.blowup_alpha = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return f;
}

// Sliding-window scattering detector. Declares once every sample over a
// window of length T_win has: sign +1, d_Q >= R_*, potential-to-energy
// ratio at most eta_scat, and a free-flow comparison residual (state vs the
// free evolution of the window-start snapshot) that never grows beyond a
// small slack. Any failed condition re-anchors the window.
class ScatterDetector {
 public:
  explicit ScatterDetector(const ThresholdParams& p) : p_(&p) {}

  // Feed the diagnostics of the current state; returns the onset time once
  // the declaration fires.
  std::optional<double> feed(const DiagnosticsSample& smp, const State& cur) {
    const double ratio =
        std::pow(smp.l4_norm, 4) / std::max(smp.h1_norm * smp.h1_norm + smp.udot_l2_sq, 1e-300);
    const bool good = smp.sign_value == +1 && smp.dQ >= p_->R_star && ratio <= p_->eta_scat;
    if (!good) {
      anchor_.reset();
      return std::nullopt;
    }
    if (!anchor_) {
      anchor_ = cur;
      anchor_resid_ = 0.0;
      return std::nullopt;
    }
    State freed = free_propagate(*anchor_, cur.t - anchor_->t);
    const double resid = detail::free_norm(cur, freed);
    const double scale = std::sqrt(free_energy_quadratic(cur)) + 1e-30;
    if (resid > anchor_resid_ * (1.0 + 1e-2) + 1e-4 * scale) {
      anchor_ = cur; // residual grew: restart the window here
      anchor_resid_ = 0.0;
      return std::nullopt;
    }
    anchor_resid_ = std::max(anchor_resid_, resid);
    if (cur.t - anchor_->t >= p_->T_win) return anchor_->t;
    return std::nullopt;
  }

 private:
  const ThresholdParams* p_;
  std::optional<State> anchor_;
  double anchor_resid_ = 0.0;
};

// Trapping at the horizon: d_Q <= delta_S on every sample of the final
// T_tail window; returns the trapping sign.
inline std::optional<int> detect_trapped(const TrajectoryRecord& rec, double horizon,
                                         const ThresholdParams& p) {
  double worst = 0.0;
  int sigma = 0;
  bool any = false;
  for (const auto& s : rec.samples) {
    if (s.t < horizon - p.T_tail) continue;
    any = true;
    worst = std::max(worst, s.dQ);
    sigma = s.sigma;
  }
  if (!any || worst > p.delta_S) return std::nullopt;
  return sigma;
}

// Boundary-contamination guard: r_max must cover the data support plus the
// horizon plus a margin of 2 (unit propagation speed).
inline void check_domain_guard(const State& s0, double horizon) {
  const double need = support_radius(s0) + horizon + 2.0;
  if (need > s0.grid().r_max)
    throw std::invalid_argument("evolve: r_max too small for this horizon (needs >= " +
                                std::to_string(need) + ")");
}

inline TrajectoryRecord evolve(const State& s0, double horizon, const ThresholdParams& p,
                               const NlkgSystem& sys, const IntegratorParams& ip = {}) {
  check_domain_guard(s0, horizon);
  TrajectoryRecord rec;
  State cur = s0;
  const double t0 = s0.t;
  const double E0 = energy(s0);

  rec.samples.push_back(diagnose(cur, sys, p));
  bool prev_inside = rec.samples.front().sign_value == 0;
  int prev_sign = rec.samples.front().sign_value;

  ScatterDetector scatter(p);
  bool scatter_declared = false;

  auto declare_blowup = [&](double sup_end) {
    rec.fate = detect_blowup(rec.samples, cur.t, sup_end);
    rec.fate.udot_u_growth = inner(cur.u, cur.udot);
    rec.events.push_back({cur.t, Event::Kind::BlowupDeclared});
  };

  const int n_samples = static_cast<int>(std::ceil(horizon / ip.sample_every));
  for (int si = 1; si <= n_samples; ++si) {
    const double target = t0 + std::min(horizon, si * ip.sample_every);
    // advance to the sample point in fused constant-dt spans
    while (cur.t < target - 1e-12) {
      const double sup = sup_norm(cur.u);
      if (!std::isfinite(sup) || sup >= p.u_max) {
        declare_blowup(sup);
        return rec;
      }
      double dt_want = std::min(ip.dt_max, ip.kick_budget / std::max(sup * sup, 1e-12));
      if (dt_want < ip.dt_min) {
        declare_blowup(sup);
        return rec;
      }
      const double remaining = target - cur.t;
      int n = static_cast<int>(std::ceil(remaining / dt_want - 1e-9));
      if (n < 1) n = 1;
      // in the shrinking regime re-adapt every few steps
      if (dt_want < ip.dt_max) n = std::min(n, 4);
      const double dt = std::min(dt_want, remaining / n);
      detail::step_span(cur, dt, n);
    }
    cur.t = target;

    DiagnosticsSample smp = diagnose(cur, sys, p);
    rec.samples.push_back(smp);
    rec.energy_drift = std::max(rec.energy_drift, std::abs(smp.E - E0));

    if (!std::isfinite(smp.h1_norm) || sup_norm(cur.u) >= p.u_max) {
      declare_blowup(sup_norm(cur.u));
      return rec;
    }

    // ball and sign bookkeeping
    const bool inside = smp.sign_value == 0;
    if (inside && !prev_inside) rec.events.push_back({cur.t, Event::Kind::BallEntry});
    if (!inside && prev_inside) rec.events.push_back({cur.t, Event::Kind::BallExit});
    if (!inside && prev_sign != 0 && smp.sign_value != prev_sign)
      rec.events.push_back({cur.t, Event::Kind::SignFlip});
    prev_inside = inside;
    if (!inside) prev_sign = smp.sign_value;

    if (!scatter_declared) {
      if (auto onset = scatter.feed(smp, cur)) {
        scatter_declared = true;
        rec.fate.kind = FateKind::ScatterToZero;
        rec.fate.scatter_onset = *onset - t0;
        rec.events.push_back({cur.t, Event::Kind::ScatterDeclared});
        if (!ip.run_to_horizon) return rec;
      }
    }
  }

  rec.events.push_back({t0 + horizon, Event::Kind::Horizon});
  if (scatter_declared) return rec; // fate already set

  if (auto sigma = detect_trapped(rec, t0 + horizon, p)) {
    rec.fate.kind = (*sigma >= 0) ? FateKind::TrappedByPlusQ : FateKind::TrappedByMinusQ;
    double worst = 0.0;
    for (const auto& s : rec.samples)
      if (s.t >= t0 + horizon - p.T_tail) worst = std::max(worst, s.dQ);
    rec.fate.trapping_residual = worst;
  } else {
    rec.fate.kind = FateKind::Undetermined;
  }
  return rec;
}

// Backward evolution as forward evolution of the time-conjugated state
// (u, -udot); sample times in the record are |t|.
inline TrajectoryRecord evolve_backward(const State& s0, double horizon,
                                        const ThresholdParams& p, const NlkgSystem& sys,
                                        const IntegratorParams& ip = {}) {
  State conj{s0.u, -1.0 * s0.udot, s0.t};
  TrajectoryRecord rec = evolve(conj, horizon, p, sys, ip);
  rec.direction = Direction::Backward;
  return rec;
}

} // namespace nlkg
