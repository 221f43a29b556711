#include <catch2/catch.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "nlkg/evolution.hpp"

using namespace nlkg;

namespace {

const NlkgSystem& sys48() {
  static NlkgSystem s = make_system(RadialGrid(48.0, 2048));
  return s;
}

State state_aq(const NlkgSystem& s, double a) {
  RadialField u = s.gs.Q;
  u *= a;
  return State{std::move(u), RadialField(s.gs.Q.grid), 0.0};
}

// smooth compactly supported bump, support radius r1
RadialField bump(const RadialGrid& g, double r1, double amp) {
  RadialField f(g);
  for (int j = 0; j < g.n; ++j) {
    const double x = g.r(j) / r1;
    f.values[j] = (x < 1.0) ? amp * std::exp(-1.0 / (1.0 - x * x)) : 0.0;
  }
  f.values[g.n - 1] = 0.0;
  return f;
}

} // namespace

TEST_CASE("step basics") {
  const NlkgSystem& s = sys48();

  SECTION("dt = 0 is the identity") {
    State st = state_aq(s, 0.9);
    State p = step(st, 0.0);
    double worst = 0.0;
    for (int j = 0; j < p.u.n(); ++j)
      worst = std::max(worst, std::abs(p.u.values[j] - st.u.values[j]));
    CHECK(worst < 1e-14);
  }

  SECTION("a step followed by its reverse is the identity to roundoff") {
    State st = state_aq(s, 0.9);
    State back = step(step(st, 1e-2), -1e-2);
    double worst = 0.0;
    for (int j = 0; j < st.u.n(); ++j) {
      worst = std::max(worst, std::abs(back.u.values[j] - st.u.values[j]));
      worst = std::max(worst, std::abs(back.udot.values[j] - st.udot.values[j]));
    }
    CHECK(worst <= 1e-12 * sup_norm(st.u));
  }

  SECTION("100 steps forward then 100 backward return the state to 1e-9") {
    State st = state_aq(s, 0.9);
    State cur = st;
    const double dt = 2e-3;
    for (int i = 0; i < 100; ++i) cur = step(cur, dt);
    for (int i = 0; i < 100; ++i) cur = step(cur, -dt);
    State diff = cur;
    diff.u -= st.u;
    diff.udot -= st.udot;
    const double rel = std::sqrt(free_energy_quadratic(diff) / free_energy_quadratic(st));
    CHECK(rel <= 1e-9);
  }
}

TEST_CASE("energy drift stays within the integrator bound") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;
  IntegratorParams ip;
  ip.run_to_horizon = true;
  TrajectoryRecord rec = evolve(state_aq(s, 0.8), 20.0, p, s, ip);
  const double E0 = std::abs(rec.samples.front().E);
  CHECK(rec.energy_drift <= 1e-6 * std::max(1.0, E0));
}

TEST_CASE("Payne-Sattinger dichotomy below the ground state energy") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;

  SECTION("K0 > 0 side scatters") {
    TrajectoryRecord rec = evolve(state_aq(s, 0.8), 25.0, p, s);
    CHECK(rec.fate.kind == FateKind::ScatterToZero);
    CHECK(rec.fate.scatter_onset < 20.0);
  }

  SECTION("K0 < 0 side blows up with a finite T* estimate") {
    TrajectoryRecord rec = evolve(state_aq(s, 1.2), 20.0, p, s);
    CHECK(rec.fate.kind == FateKind::BlowUp);
    CHECK(std::isfinite(rec.fate.blowup_T_star));
    CHECK(rec.fate.blowup_T_star < 1.5);
    CHECK(rec.fate.udot_u_growth > 0.0); // <u|udot> increasing into blow-up
  }

  SECTION("backward evolution of time-symmetric data matches forward") {
    TrajectoryRecord fwd = evolve(state_aq(s, 1.2), 10.0, p, s);
    TrajectoryRecord bwd = evolve_backward(state_aq(s, 1.2), 10.0, p, s);
    CHECK(bwd.direction == Direction::Backward);
    CHECK(bwd.fate.kind == FateKind::BlowUp);
    CHECK(bwd.fate.blowup_T_star == Approx(fwd.fate.blowup_T_star));
  }
}

TEST_CASE("(Q,0) is a discrete near-equilibrium ejected at rate k") {
  // The polished Q is stationary until the splitting defect seeds the
  // unstable mode; the departure then grows like e^{kt}. A trapped-forever
  // outcome is impossible in floating point since k ~ 3.9.
  const NlkgSystem& s = sys48();
  ThresholdParams p;
  IntegratorParams ip;
  TrajectoryRecord rec = evolve(State{s.gs.Q, RadialField(s.gs.Q.grid), 0.0}, 3.0, p, s, ip);
  CHECK(rec.fate.kind == FateKind::Undetermined); // neither fate within T=3
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& smp : rec.samples) {
    if (smp.t <= 0.6) CHECK(smp.dQ <= 1e-3); // measured window at this grid and dt_max
    if (smp.dQ >= 1e-6 && smp.dQ <= 0.1) {
      sx += smp.t;
      sy += std::log(smp.dQ);
      sxx += smp.t * smp.t;
      sxy += smp.t * std::log(smp.dQ);
      ++m;
    }
  }
  REQUIRE(m >= 10);
  const double rate = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(rate == Approx(s.spec.k).epsilon(0.2));
}

TEST_CASE("finite propagation speed") {
  const NlkgSystem& s = sys48();
  const RadialGrid& g = s.gs.Q.grid;
  const double r0 = 4.0;
  State st{bump(g, r0, 0.5), RadialField(g), 0.0};

  SECTION("free flow") {
    for (double t : {1.0, 3.0, 6.0}) {
      State moved = free_propagate(st, t);
      ExteriorEnergy e = exterior_energy(moved, r0 + t + 0.1);
      CHECK(e.free <= 1e-8);
    }
  }

  SECTION("nonlinear flow") {
    State cur = st;
    const double dt = 2e-3;
    for (int i = 0; i < 3000; ++i) {
      cur = step(cur, dt);
      if (i % 500 == 499) {
        ExteriorEnergy e = exterior_energy(cur, r0 + cur.t + 0.1);
        CHECK(e.free <= 1e-8);
      }
    }
  }
}

TEST_CASE("time-reversal through conjugation returns the initial state") {
  const NlkgSystem& s = sys48();
  State st = state_aq(s, 0.9);
  axpy(st.udot, 0.05, s.spec.rho);
  State cur = st;
  const double dt = 2e-3;
  for (int i = 0; i < 1000; ++i) cur = step(cur, dt);
  cur.udot *= -1.0;
  for (int i = 0; i < 1000; ++i) cur = step(cur, dt);
  cur.udot *= -1.0;
  State diff = cur;
  diff.u -= st.u;
  diff.udot -= st.udot;
  CHECK(std::sqrt(free_energy_quadratic(diff) / free_energy_quadratic(st)) <= 1e-9);
}

TEST_CASE("scatter detector") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;
  const RadialGrid& g = s.gs.Q.grid;

  SECTION("a small quasi-free wave is declared within the window") {
    State st{bump(g, 5.0, 0.01), RadialField(g), 0.0};
    IntegratorParams ip;
    ip.run_to_horizon = true;
    TrajectoryRecord rec = evolve(st, 8.0, p, s, ip);
    CHECK(rec.fate.kind == FateKind::ScatterToZero);
    CHECK(rec.fate.scatter_onset <= 1.0);

    // the late window of the dispersed wave passes the low-kinetic check
    std::vector<DiagnosticsSample> window;
    for (const auto& smp : rec.samples)
      if (smp.t >= 6.0) window.push_back(smp);
    REQUIRE(window.size() >= 2);
    CHECK(low_kinetic_check(window, p.mu));
  }
}

TEST_CASE("scatter detector fed directly") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;

  SECTION("an exactly free evolution declares after one window") {
    ScatterDetector det(p);
    State cur{bump(s.gs.Q.grid, 5.0, 0.05), RadialField(s.gs.Q.grid), 0.0};
    std::optional<double> onset;
    for (int i = 0; i <= 50 && !onset; ++i) {
      onset = det.feed(diagnose(cur, s, p), cur);
      cur = free_propagate(cur, 0.1);
    }
    REQUIRE(onset.has_value());
    CHECK(*onset == Approx(0.0).margin(1e-12));
  }

  SECTION("states pinned near Q never qualify") {
    ScatterDetector det(p);
    RadialField u = s.gs.Q;
    axpy(u, 0.01, s.spec.rho);
    State cur{std::move(u), RadialField(s.gs.Q.grid), 0.0};
    for (int i = 0; i <= 50; ++i) {
      CHECK_FALSE(det.feed(diagnose(cur, s, p), cur).has_value());
      cur.t += 0.1; // d_Q < R_star: the window can never anchor
    }
  }
}

TEST_CASE("blow-up rate fit for (1.5Q, 0)") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;
  TrajectoryRecord rec = evolve(state_aq(s, 1.5), 5.0, p, s);
  REQUIRE(rec.fate.kind == FateKind::BlowUp);
  CHECK(rec.fate.blowup_alpha >= 0.4);
  CHECK(rec.fate.udot_u_growth > 0.0);
}

TEST_CASE("trapping detector on the stationary states at a short horizon") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;
  const RadialGrid& g = s.gs.Q.grid;
  TrajectoryRecord plus = evolve(State{s.gs.Q, RadialField(g), 0.0}, 2.0, p, s);
  CHECK(plus.fate.kind == FateKind::TrappedByPlusQ);
  CHECK(plus.fate.trapping_residual <= p.delta_S);
  RadialField mq = s.gs.Q;
  mq *= -1.0;
  TrajectoryRecord minus = evolve(State{std::move(mq), RadialField(g), 0.0}, 2.0, p, s);
  CHECK(minus.fate.kind == FateKind::TrappedByMinusQ);
}

TEST_CASE("domain guard refuses contaminated runs") {
  const NlkgSystem& s = sys48();
  ThresholdParams p;
  CHECK_THROWS_AS(evolve(state_aq(s, 0.8), 40.0, p, s), std::invalid_argument);
}

TEST_CASE("integrator measurements", "[.][probe]") {
  NlkgSystem s = make_system(RadialGrid(60.0, 6144));
  ThresholdParams p;

  {
    State st = state_aq(s, 0.8);
    auto t0 = std::chrono::steady_clock::now();
    State cur = st;
    for (int i = 0; i < 500; ++i) cur = step(cur, 1e-3);
    auto t1 = std::chrono::steady_clock::now();
    std::printf("step time at n=6144: %.1f us\n",
                std::chrono::duration<double, std::micro>(t1 - t0).count() / 500.0);
  }

  for (double dtm : {4e-3, 2e-3, 1e-3}) {
    IntegratorParams ip;
    ip.dt_max = dtm;
    ip.run_to_horizon = true;
    TrajectoryRecord rec = evolve(state_aq(s, 0.8), 20.0, p, s, ip);
    std::printf("dt_max=%.0e: drift=%.3e rel=%.3e fate=%s\n", dtm, rec.energy_drift,
                rec.energy_drift / std::abs(rec.samples.front().E), to_string(rec.fate.kind));
  }

  {
    IntegratorParams ip;
    TrajectoryRecord rec = evolve(State{s.gs.Q, RadialField(s.gs.Q.grid), 0.0}, 8.0, p, s, ip);
    std::printf("(Q,0) fate at T=8: %s\n", to_string(rec.fate.kind));
    for (const auto& smp : rec.samples) {
      if (std::fmod(smp.t, 0.5) < 1e-9 || smp.dQ > 0.2)
        std::printf("  t=%.2f dQ=%.3e lam=%.3e E-J=%.3e\n", smp.t, smp.dQ, smp.lam,
                    smp.E - s.gs.JQ);
      if (smp.dQ > 0.2) break;
    }
  }

  {
    IntegratorParams ip;
    ip.run_to_horizon = true;
    TrajectoryRecord rec = evolve(state_aq(s, 0.8), 30.0, p, s, ip);
    std::printf("(0.8Q,0) fate at T=30: %s onset=%.2f\n", to_string(rec.fate.kind),
                rec.fate.scatter_onset);
    for (const auto& smp : rec.samples) {
      if (std::fmod(smp.t, 2.0) < 1e-9) {
        const double ratio =
            std::pow(smp.l4_norm, 4) / (smp.h1_norm * smp.h1_norm + smp.udot_l2_sq);
        std::printf("  t=%.1f dQ=%.3f K0=%.3f ratio=%.4f sign=%d\n", smp.t, smp.dQ, smp.K0,
                    ratio, smp.sign_value);
      }
    }
  }

  {
    IntegratorParams ip;
    TrajectoryRecord rec = evolve(state_aq(s, 1.2), 20.0, p, s, ip);
    std::printf("(1.2Q,0) fate: %s T*=%.3f alpha=%.3f n_samples=%zu\n",
                to_string(rec.fate.kind), rec.fate.blowup_T_star, rec.fate.blowup_alpha,
                rec.samples.size());
  }
}
