// Command-line driver for the radial NLKG laboratory.
//
// Subcommands: ground-state, spectrum, evolve, classify, witnesses,
// portrait, threshold, audit. Exit code 0 on success, 2 on configuration or
// validation failure, 3 on numerical failure.

#include <cstdio>
#include <filesystem>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "nlkg/dynamics_lab.hpp"
#include "nlkg/io.hpp"

using namespace nlkg;

namespace {

int effective_threads(const RunConfig& c) {
  if (c.threads > 0) return c.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::string out_path(const RunConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out_dir);
  return (std::filesystem::path(c.out_dir) / name).string();
}

void echo_config(const RunConfig& c) {
  write_resolved_config(out_path(c, "resolved-config.json"), c);
}

int cmd_ground_state(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  std::printf("grid: r_max=%.17g n=%d h=%.17g\n", c.grid.r_max, c.grid.n, c.grid.h);
  std::printf("q0       = %.17g\n", sys.gs.q0);
  std::printf("JQ       = %.17g\n", sys.gs.JQ);
  std::printf("l4Q      = %.17g\n", sys.gs.l4Q);
  std::printf("h1Q      = %.17g\n", sys.gs.h1Q);
  std::printf("residual = %.17g\n", sys.gs.residual);
  std::printf("K0(Q)    = %.17g\n", sys.gs.h1Q - sys.gs.l4Q);
  std::printf("K2(Q)    = %.17g\n", sys.gs.grad_sqQ - 0.75 * sys.gs.l4Q);
  return 0;
}

int cmd_spectrum(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  std::printf("k     = %.17g\n", sys.spec.k);
  std::printf("k^2   = %.17g\n", sys.spec.k * sys.spec.k);
  std::printf("n_neg = %d\n", sys.spec.n_neg);
  std::vector<double> top = birman_schwinger_spectrum(sys.gs, 5);
  sys.spec.bs_top = top;
  for (size_t i = 0; i < top.size(); ++i)
    std::printf("bs[%zu] = %.17g\n", i, top[i]);
  int above = 0;
  for (double ev : top)
    if (ev > 1.0) ++above;
  const bool gap_ok = above == 1 && top.size() > 1 && top[1] < 0.98;
  std::printf("second radial eigenvalue = %.9f (full-operator reference 0.97039244, "
              "equality not asserted)\n",
              top.size() > 1 ? top[1] : 0.0);
  std::printf("BS gap: %s (exactly one eigenvalue > 1, second %s 0.98)\n",
              gap_ok ? "OK" : "FAIL", top.size() > 1 && top[1] < 0.98 ? "<" : ">=");
  return gap_ok ? 0 : 3;
}

int cmd_evolve(const RunConfig& c, bool backward) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  State s0 = make_data(c.data, sys);
  TrajectoryRecord rec = backward
                             ? evolve_backward(s0, c.horizon, c.thresholds, sys, c.integrator)
                             : evolve(s0, c.horizon, c.thresholds, sys, c.integrator);
  write_trajectory_csv(out_path(c, "trajectory.csv"), rec);
  write_fate_json(out_path(c, "fate.json"), rec);
  std::printf("fate = %s\n", to_string(rec.fate.kind));
  std::printf("energy drift = %.17g\n", rec.energy_drift);
  return 0;
}

int cmd_classify(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  State s0 = make_data(c.data, sys);
  NineSetResult r = classify_nine(s0, c.horizon, c.thresholds, sys, c.integrator);
  write_classification_json(out_path(c, "classification.json"), r);
  if (r.excess_above_eps_star)
    std::printf("warning: energy excess %.17g above eps_star^2\n", r.energy_excess);
  std::printf("backward = %s\nforward  = %s\nset index = %d\n", to_string(r.backward.kind),
              to_string(r.forward.kind), r.set_index);
  return 0;
}

int cmd_witnesses(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  const double theta_eps =
      c.witnesses.theta * (c.witnesses.eps > 0 ? c.witnesses.eps : 0.5 * c.thresholds.eps_star);
  std::vector<WitnessResult> ws = nine_set_witnesses(
      c.thresholds, sys, c.integrator, theta_eps, c.witnesses.horizon, c.witnesses.window);
  write_witnesses_json(out_path(c, "witnesses.json"), ws);
  bool all_ok = true;
  for (const auto& w : ws) {
    std::printf("set %d: got %d (%s / %s)  %s  [%s]\n", w.target_set, w.outcome.set_index,
                to_string(w.outcome.backward.kind), to_string(w.outcome.forward.kind),
                w.ok ? "ok" : "MISMATCH", w.datum.c_str());
    all_ok = all_ok && w.ok;
  }
  return all_ok ? 0 : 3;
}

int cmd_portrait(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  PortraitResult pr = phase_portrait(sys, c.thresholds, c.portrait.n_lam, c.portrait.n_lamdot,
                                     c.portrait.lam_span, c.portrait.lamdot_span,
                                     c.portrait.horizon, c.integrator, effective_threads(c));
  write_portrait(out_path(c, "portrait.txt"), pr);
  auto fit = portrait_boundary_slope(pr, c.portrait.lam_span);
  std::printf("boundary points = %d\n", fit.m);
  std::printf("boundary tangent slope = %.17g (center-stable tangent -k = %.17g)\n", fit.slope,
              -sys.spec.k);
  return 0;
}

int cmd_threshold(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  for (int sign : {+1, -1}) {
    ThresholdOrbit orb =
        construct_threshold_W(c.thresholds, sys, sign, c.threshold_orbit.s, c.integrator,
                              c.threshold_orbit.horizon_fwd, c.threshold_orbit.horizon_bwd);
    const char* name = sign > 0 ? "Wplus" : "Wminus";
    write_trajectory_csv(out_path(c, std::string(name) + "_forward.csv"), orb.forward);
    write_trajectory_csv(out_path(c, std::string(name) + "_backward.csv"), orb.backward);
    std::printf("%s: s=%.17g c=%.17g lam_minus0=%.17g\n", name, orb.s, orb.c, orb.lam_minus0);
    std::printf("%s: forward fate = %s, backward approach rate = %.17g (k = %.17g)\n", name,
                to_string(orb.forward.fate.kind), orb.backward_rate, sys.spec.k);
  }
  return 0;
}

int cmd_audit(const RunConfig& c) {
  NlkgSystem sys = load_system(c);
  echo_config(c);
  const double R = c.ensemble.R > 0 ? c.ensemble.R : c.thresholds.R_star;
  EnsembleReport rep = one_pass_ensemble(c.ensemble.size, c.seed, c.horizon, c.thresholds, sys,
                                         c.integrator, effective_threads(c));
  write_ensemble_json(out_path(c, "audit.json"), rep);
  std::printf("ensemble: %d data, %d exited the R=%.17g ball\n", rep.n_data, rep.n_exited, R);
  std::printf("returns after exit = %d\n", rep.total_returns);
  std::printf("sign flips outside B(±Q) = %d\n", rep.total_sign_flips);
  std::printf("fate/sign mismatches = %d\n", rep.sign_fate_mismatch);
  std::printf("fates: scatter=%d blowup=%d other=%d\n", rep.fate_scatter, rep.fate_blowup,
              rep.fate_other);

  // ejection audit on the canonical pure-unstable-mode datum
  IntegratorParams ip = c.integrator;
  ip.run_to_horizon = true;
  State s0 = mode_data(sys, 0.01, sys.spec.k * 0.01);
  TrajectoryRecord rec = evolve(s0, std::min(c.horizon, 8.0), c.thresholds, sys, ip);
  EjectionFit fit = ejection_audit(rec, c.thresholds, sys);
  std::printf("ejection: rate=%.17g k=%.17g rel_err=%.17g margin=%.17g sign_ok=%d\n", fit.rate,
              fit.k_target, fit.rel_err, fit.margin, fit.sign_relation_ok ? 1 : 0);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"radial focusing cubic Klein-Gordon laboratory"};
  app.fallthrough(true); // options may follow the subcommand name
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file");

  // common overrides
  double opt_rmax = -1, opt_horizon = -1, opt_a = -1e300, opt_lam0 = -1e300,
         opt_lamdot0 = -1e300;
  int opt_n = -1, opt_threads = -1, opt_size = -1;
  unsigned long long opt_seed = 0;
  bool has_seed = false;
  std::string opt_out, opt_kind, opt_cache;
  bool opt_backward = false;
  app.add_option("--r-max", opt_rmax, "ball radius");
  app.add_option("--n", opt_n, "interior node count");
  app.add_option("--horizon", opt_horizon, "evolution horizon T");
  app.add_option("--threads", opt_threads, "parallelism cap");
  app.add_option("--out", opt_out, "output directory");
  app.add_option("--cache-dir", opt_cache, "cache directory (overrides NLKG_CACHE_DIR)");
  app.add_option("--seed", opt_seed, "RNG seed")->each([&](const std::string&) {
    has_seed = true;
  });
  app.add_option("--data", opt_kind, "datum kind: aQ | mode | bump");
  app.add_option("--a", opt_a, "amplitude for aQ data");
  app.add_option("--lam0", opt_lam0, "eigenmode coordinate lambda(0)");
  app.add_option("--lamdot0", opt_lamdot0, "eigenmode coordinate lambdot(0)");
  app.add_option("--ensemble-size", opt_size, "audit ensemble size");

  CLI::App* sc_ground = app.add_subcommand("ground-state", "build or refresh the Q cache");
  CLI::App* sc_spectrum = app.add_subcommand("spectrum", "linearized spectrum and BS gap");
  CLI::App* sc_evolve = app.add_subcommand("evolve", "evolve one datum");
  sc_evolve->add_flag("--backward", opt_backward, "evolve in the backward time direction");
  CLI::App* sc_classify = app.add_subcommand("classify", "fate pair and nine-set index");
  CLI::App* sc_witnesses = app.add_subcommand("witnesses", "emit witnesses of all nine sets");
  CLI::App* sc_portrait = app.add_subcommand("portrait", "(lambda, lamdot) fate map");
  CLI::App* sc_threshold = app.add_subcommand("threshold", "construct the W± orbits");
  CLI::App* sc_audit = app.add_subcommand("audit", "one-pass and ejection audits");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig c = load_config(config_path);
    if (opt_rmax > 0 || opt_n > 0)
      c.grid = RadialGrid(opt_rmax > 0 ? opt_rmax : c.grid.r_max, opt_n > 0 ? opt_n : c.grid.n);
    if (opt_horizon > 0) c.horizon = opt_horizon;
    if (opt_threads >= 0) c.threads = opt_threads;
    if (!opt_out.empty()) c.out_dir = opt_out;
    if (!opt_cache.empty()) c.cache_dir = opt_cache;
    if (has_seed) c.seed = opt_seed;
    if (!opt_kind.empty()) c.data.kind = opt_kind;
    if (opt_a != -1e300) c.data.a = opt_a;
    if (opt_lam0 != -1e300) c.data.lam0 = opt_lam0;
    if (opt_lamdot0 != -1e300) c.data.lamdot0 = opt_lamdot0;
    if (opt_size > 0) c.ensemble.size = opt_size;
    c.validate();

    if (*sc_ground) return cmd_ground_state(c);
    if (*sc_spectrum) return cmd_spectrum(c);
    if (*sc_evolve) return cmd_evolve(c, opt_backward);
    if (*sc_classify) return cmd_classify(c);
    if (*sc_witnesses) return cmd_witnesses(c);
    if (*sc_portrait) return cmd_portrait(c);
    if (*sc_threshold) return cmd_threshold(c);
    if (*sc_audit) return cmd_audit(c);
    std::fprintf(stderr, "unknown subcommand\n");
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
}
